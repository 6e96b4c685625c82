// SPDX-License-Identifier: Apache-2.0
//
// A triangular-split low-rank adapter around one frozen weight matrix:
//
//     h = W0 x + alpha / (r + eps) * B (L + U) A x
//
// with A (r x n), B (d x r), L lower-triangular including the diagonal and U
// strictly upper-triangular, so D = L + U is a dense r x r matrix whose every
// entry has exactly one owner. Rank growth appends rows/columns/blocks to all
// four factors without touching what was already learned.

#pragma once

#include <algorithm>
#include <string_view>
#include <span>

#include "triadapt/linalg.hpp"
#include "triadapt/rng.hpp"
#include "triadapt/site.hpp"

namespace triadapt {

/// How the blocks appended by grow_rank are initialised.
enum class InitPolicy {
    gaussian,  ///< every new block Gaussian, B included
    /// New B columns and U_up zero, and the scale denominator pinned at its
    /// value before the step, so the adapted function is bit-identical across
    /// growth. (Rescaling alpha instead cannot always hit the old scale
    /// exactly in floating point.)
    zero_b,
};

std::string_view init_policy_name(InitPolicy p) noexcept;
InitPolicy parse_init_policy(std::string_view name);

/// Raw ||L + U||_F and rank at the last importance evaluation.
struct NormRecord {
    double prev_norm = 0.0;
    int prev_rank = 1;

    bool operator==(const NormRecord&) const = default;
};

struct AdapterState {
    SiteId site;
    Matrix w0;  ///< d x n, never modified
    Matrix a;   ///< r x n
    Matrix b;   ///< d x r
    Matrix l;   ///< r x r, zero strictly above the diagonal
    Matrix u;   ///< r x r, zero on and below the diagonal
    int rank = 1;
    double alpha = 1.0;
    double epsilon = 1e-6;
    NormRecord norm_record;
    /// False for the plain-LoRA arm, where L = I and U = 0 stay pinned.
    bool transform_trainable = true;
    /// Scale denominator pinned by zero_b growth; 0 means rank + epsilon.
    double denominator = 0.0;

    std::size_t in_dim() const noexcept { return w0.cols(); }
    std::size_t out_dim() const noexcept { return w0.rows(); }
    int rank_cap() const noexcept { return static_cast<int>(std::min(in_dim(), out_dim())); }
    double scale() const noexcept { return alpha / (denominator > 0.0 ? denominator : rank + epsilon); }
};

struct AdapterGrads {
    Matrix a;
    Matrix b;
    Matrix l;
    Matrix u;
};

/// Rank-1 adapter: A and L Gaussian, B and U zero. norm_record is seeded from L + U.
AdapterState init_adapter(SiteId site, Matrix w0, double alpha, double epsilon, double std, Rng& rng);

/// Plain LoRA (h = W0 x + s B A x) expressed as an adapter with D pinned to I_r.
AdapterState init_lora_adapter(SiteId site, Matrix w0, int rank, double alpha, double epsilon,
                               double std, Rng& rng);

/// Zero gradients shaped like the state's parameters.
AdapterGrads zero_grads(const AdapterState& state);

/// D = L + U.
Matrix transform(const AdapterState& state);

/// W0 x + s B D A x, evaluated right to left without forming Delta W.
Vector forward(const AdapterState& state, std::span<const double> x);

/// Only the low-rank branch, s B D A x.
Vector branch_forward(const AdapterState& state, std::span<const double> x);

/// s A^T D^T B^T g: the branch's contribution to dL/dx.
Vector branch_input_grad(const AdapterState& state, std::span<const double> upstream);

/// Delta W = s B D A as a dense d x n matrix. Test and export use only.
Matrix delta_weight(const AdapterState& state);

/// Appends delta_r rows to A, columns to B and the triangular blocks to L and U.
/// Throws CapacityError when r + delta_r > min(n, d).
AdapterState grow_rank(AdapterState state, int delta_r, InitPolicy policy, double std, Rng& rng);

/// ||A A^T - I_r||_F^2 + ||B^T B - I_r||_F^2.
double orth_penalty(const AdapterState& state);

struct OrthGrads {
    Matrix a;
    Matrix b;
};

/// Gradient of orth_penalty: 4 (A A^T - I) A and 4 B (B^T B - I).
OrthGrads orth_penalty_grads(const AdapterState& state);

/// Gradients of upstream^T * forward(state, x) with respect to A, B, L, U,
/// projected onto the triangular parameter sets.
AdapterGrads analytic_grads(const AdapterState& state, std::span<const double> x,
                            std::span<const double> upstream);

/// acc += weight * analytic_grads(state, x, upstream), without temporaries per term.
void accumulate_grads(const AdapterState& state, std::span<const double> x,
                      std::span<const double> upstream, double weight, AdapterGrads& acc);

/// True when L, U respect their masks and all shapes agree with the rank.
bool structure_ok(const AdapterState& state) noexcept;

}  // namespace triadapt
