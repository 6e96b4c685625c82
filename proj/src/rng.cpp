// SPDX-License-Identifier: Apache-2.0
#include "triadapt/rng.hpp"

#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "triadapt/errors.hpp"

namespace triadapt {

std::uint64_t Rng::next_u64() {
    ++position_;
    return engine_();
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::normal() {
    // 1 - u keeps the log argument in (0, 1].
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t Rng::below(std::uint64_t n) {
    if (n == 0) throw ConfigError("Rng::below: empty range");
    // Rejection sampling keeps the result unbiased.
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v = next_u64();
    while (v >= limit) v = next_u64();
    return v % n;
}

Matrix gaussian_matrix(std::size_t rows, std::size_t cols, double std, Rng& rng) {
    if (rows == 0 || cols == 0) {
        throw ConfigError(fmt::format("gaussian_matrix: dimensions must be positive, got ({} x {})", rows, cols));
    }
    if (!(std > 0.0) || !std::isfinite(std)) {
        throw ConfigError(fmt::format("gaussian_matrix: std must be positive and finite, got {}", std));
    }
    Matrix m(rows, cols);
    for (double& v : m.data()) v = std * rng.normal();
    return m;
}

}  // namespace triadapt
