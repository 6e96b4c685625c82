// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>

#include "triadapt/linalg.hpp"

namespace triadapt {

/// Seeded generator with a platform-independent Gaussian transform.
///
/// std::normal_distribution is implementation-defined, so normals are drawn
/// with Box-Muller over mt19937_64 output, which the standard pins down
/// bit-for-bit. `position()` counts raw 64-bit draws.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

    /// Independent stream for a site or subsystem: seed XOR stream index.
    static Rng derive(std::uint64_t seed, std::uint64_t stream) { return Rng(seed ^ stream); }

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t position() const noexcept { return position_; }

    std::uint64_t next_u64();
    /// Uniform in [0, 1) with 53 random bits.
    double uniform();
    double normal();
    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n);

private:
    std::uint64_t seed_;
    std::uint64_t position_ = 0;
    std::mt19937_64 engine_;
};

/// i.i.d. N(0, std^2) entries. rows, cols >= 1 and std > 0, else ConfigError.
Matrix gaussian_matrix(std::size_t rows, std::size_t cols, double std, Rng& rng);

}  // namespace triadapt
