// SPDX-License-Identifier: Apache-2.0
#include "triadapt/adapter.hpp"

#include <cmath>

#include <fmt/format.h>

#include "triadapt/errors.hpp"

namespace triadapt {

namespace {

void check_hyper(const Matrix& w0, double alpha, double epsilon) {
    if (!all_finite(w0)) throw ConfigError("adapter base weight contains non-finite entries");
    if (!(alpha > 0.0)) throw ConfigError(fmt::format("adapter alpha must be positive, got {}", alpha));
    if (!(epsilon >= 0.0)) throw ConfigError(fmt::format("adapter epsilon must be >= 0, got {}", epsilon));
}

void require_len(std::span<const double> v, std::size_t n, const char* what) {
    if (v.size() != n) {
        throw DimensionError(fmt::format("{}: expected length {}, got {}", what, n, v.size()));
    }
}

// D v using the triangular structure: L v + U v.
Vector apply_transform(const AdapterState& s, std::span<const double> v) {
    const auto r = static_cast<std::size_t>(s.rank);
    Vector out(r, 0.0);
    for (std::size_t i = 0; i < r; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j <= i; ++j) acc += s.l(i, j) * v[j];
        for (std::size_t j = i + 1; j < r; ++j) acc += s.u(i, j) * v[j];
        out[i] = acc;
    }
    add_flops(2 * r * r);
    return out;
}

// D^T v.
Vector apply_transform_t(const AdapterState& s, std::span<const double> v) {
    const auto r = static_cast<std::size_t>(s.rank);
    Vector out(r, 0.0);
    for (std::size_t i = 0; i < r; ++i) {
        const double vi = v[i];
        for (std::size_t j = 0; j <= i; ++j) out[j] += s.l(i, j) * vi;
        for (std::size_t j = i + 1; j < r; ++j) out[j] += s.u(i, j) * vi;
    }
    add_flops(2 * r * r);
    return out;
}

Matrix gram_minus_identity(const Matrix& m, bool rows) {
    // rows: m m^T - I; otherwise m^T m - I.
    Matrix g = rows ? matmul(m, transpose(m)) : matmul(transpose(m), m);
    for (std::size_t i = 0; i < g.rows(); ++i) g(i, i) -= 1.0;
    return g;
}

// An alpha with alpha / (rank + epsilon) == scale exactly, so zero_b growth
// keeps the branch scale bit-identical.
}  // namespace

std::string_view init_policy_name(InitPolicy p) noexcept {
    return p == InitPolicy::gaussian ? "gaussian" : "zero_b";
}

InitPolicy parse_init_policy(std::string_view name) {
    if (name == "gaussian") return InitPolicy::gaussian;
    if (name == "zero_b") return InitPolicy::zero_b;
    throw ConfigError(fmt::format("unknown init policy '{}' (expected gaussian or zero_b)", name));
}

AdapterState init_adapter(SiteId site, Matrix w0, double alpha, double epsilon, double std, Rng& rng) {
    check_hyper(w0, alpha, epsilon);
    const std::size_t n = w0.cols();
    const std::size_t d = w0.rows();
    Matrix a = gaussian_matrix(1, n, std, rng);
    Matrix l = gaussian_matrix(1, 1, std, rng);
    AdapterState s{
        .site = site,
        .w0 = std::move(w0),
        .a = std::move(a),
        .b = Matrix(d, 1),
        .l = std::move(l),
        .u = Matrix(1, 1),
        .rank = 1,
        .alpha = alpha,
        .epsilon = epsilon,
        .norm_record = {},
    };
    s.norm_record = {frobenius_norm(transform(s)), 1};
    return s;
}

AdapterState init_lora_adapter(SiteId site, Matrix w0, int rank, double alpha, double epsilon,
                               double std, Rng& rng) {
    check_hyper(w0, alpha, epsilon);
    const int cap = static_cast<int>(std::min(w0.rows(), w0.cols()));
    if (rank < 1 || rank > cap) {
        throw CapacityError(to_string(site),
                            fmt::format("LoRA rank {} outside [1, {}] for site {}", rank, cap, to_string(site)));
    }
    const auto r = static_cast<std::size_t>(rank);
    const std::size_t n = w0.cols();
    const std::size_t d = w0.rows();
    AdapterState s{
        .site = site,
        .w0 = std::move(w0),
        .a = gaussian_matrix(r, n, std, rng),
        .b = Matrix(d, r),
        .l = Matrix::identity(r),
        .u = Matrix(r, r),
        .rank = rank,
        .alpha = alpha,
        .epsilon = epsilon,
        .norm_record = {},
        .transform_trainable = false,
    };
    s.norm_record = {frobenius_norm(transform(s)), rank};
    return s;
}

AdapterGrads zero_grads(const AdapterState& state) {
    const auto r = static_cast<std::size_t>(state.rank);
    return {Matrix(r, state.in_dim()), Matrix(state.out_dim(), r), Matrix(r, r), Matrix(r, r)};
}

Matrix transform(const AdapterState& state) { return state.l + state.u; }

Vector branch_forward(const AdapterState& state, std::span<const double> x) {
    require_len(x, state.in_dim(), "adapter forward");
    const Vector ax = matvec(state.a, x);
    const Vector dax = apply_transform(state, ax);
    Vector out = matvec(state.b, dax);
    const double s = state.scale();
    for (double& v : out) v *= s;
    add_flops(out.size());
    return out;
}

Vector forward(const AdapterState& state, std::span<const double> x) {
    Vector h = matvec(state.w0, x);
    const Vector delta = branch_forward(state, x);
    for (std::size_t i = 0; i < h.size(); ++i) h[i] += delta[i];
    add_flops(h.size());
    return h;
}

Vector branch_input_grad(const AdapterState& state, std::span<const double> upstream) {
    require_len(upstream, state.out_dim(), "adapter input grad");
    const Vector bg = matvec_t(state.b, upstream);
    const Vector dbg = apply_transform_t(state, bg);
    Vector out = matvec_t(state.a, dbg);
    const double s = state.scale();
    for (double& v : out) v *= s;
    add_flops(out.size());
    return out;
}

Matrix delta_weight(const AdapterState& state) {
    return state.scale() * matmul(matmul(state.b, transform(state)), state.a);
}

AdapterState grow_rank(AdapterState state, int delta_r, InitPolicy policy, double std, Rng& rng) {
    if (delta_r < 1) throw ConfigError(fmt::format("rank increment must be positive, got {}", delta_r));
    if (!state.transform_trainable) {
        throw ConfigError(fmt::format("site {} has a pinned transform and cannot grow", to_string(state.site)));
    }
    const int new_rank = state.rank + delta_r;
    if (new_rank > state.rank_cap()) {
        throw CapacityError(to_string(state.site),
                            fmt::format("growing site {} from rank {} by {} exceeds min(n, d) = {}",
                                        to_string(state.site), state.rank, delta_r, state.rank_cap()));
    }
    const auto r = static_cast<std::size_t>(state.rank);
    const auto nr = static_cast<std::size_t>(new_rank);
    const auto dr = static_cast<std::size_t>(delta_r);
    const std::size_t n = state.in_dim();
    const std::size_t d = state.out_dim();

    // A: append delta_r rows.
    Matrix a = pad(state.a, nr, n);
    const Matrix a_aug = gaussian_matrix(dr, n, std, rng);
    for (std::size_t i = 0; i < dr; ++i)
        for (std::size_t j = 0; j < n; ++j) a(r + i, j) = a_aug(i, j);

    // B: append delta_r columns.
    Matrix b = pad(state.b, d, nr);
    if (policy == InitPolicy::gaussian) {
        const Matrix b_aug = gaussian_matrix(d, dr, std, rng);
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < dr; ++j) b(i, r + j) = b_aug(i, j);
    }

    // L = [L 0; L_down L_aug], L_down dense, L_aug lower-triangular.
    Matrix l = pad(state.l, nr, nr);
    const Matrix l_down = gaussian_matrix(dr, r, std, rng);
    const Matrix l_aug = apply_lower_mask(gaussian_matrix(dr, dr, std, rng));
    for (std::size_t i = 0; i < dr; ++i) {
        for (std::size_t j = 0; j < r; ++j) l(r + i, j) = l_down(i, j);
        for (std::size_t j = 0; j < dr; ++j) l(r + i, r + j) = l_aug(i, j);
    }

    // U = [U U_up; 0 U_aug], U_up dense, U_aug strictly upper-triangular.
    // Under zero_b, U_up stays zero too: it is the only block that feeds the
    // new A rows into the old B columns.
    Matrix u = pad(state.u, nr, nr);
    if (policy == InitPolicy::gaussian) {
        const Matrix u_up = gaussian_matrix(r, dr, std, rng);
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < dr; ++j) u(i, r + j) = u_up(i, j);
    }
    const Matrix u_aug = apply_upper_mask(gaussian_matrix(dr, dr, std, rng));
    for (std::size_t i = 0; i < dr; ++i)
        for (std::size_t j = 0; j < dr; ++j) u(r + i, r + j) = u_aug(i, j);

    state.a = std::move(a);
    state.b = std::move(b);
    state.l = std::move(l);
    state.u = std::move(u);
    if (policy == InitPolicy::zero_b) {
        if (state.denominator == 0.0) state.denominator = state.rank + state.epsilon;
    } else {
        state.denominator = 0.0;
    }
    state.rank = new_rank;
    return state;
}

double orth_penalty(const AdapterState& state) {
    const double ga = frobenius_norm(gram_minus_identity(state.a, true));
    const double gb = frobenius_norm(gram_minus_identity(state.b, false));
    return ga * ga + gb * gb;
}

OrthGrads orth_penalty_grads(const AdapterState& state) {
    Matrix ga = 4.0 * matmul(gram_minus_identity(state.a, true), state.a);
    Matrix gb = 4.0 * matmul(state.b, gram_minus_identity(state.b, false));
    return {std::move(ga), std::move(gb)};
}

AdapterGrads analytic_grads(const AdapterState& state, std::span<const double> x,
                            std::span<const double> upstream) {
    AdapterGrads g = zero_grads(state);
    accumulate_grads(state, x, upstream, 1.0, g);
    return g;
}

void accumulate_grads(const AdapterState& state, std::span<const double> x,
                      std::span<const double> upstream, double weight, AdapterGrads& acc) {
    require_len(x, state.in_dim(), "adapter grads input");
    require_len(upstream, state.out_dim(), "adapter grads upstream");
    const auto r = static_cast<std::size_t>(state.rank);
    if (acc.a.rows() != r || acc.b.cols() != r || acc.l.rows() != r || acc.u.rows() != r) {
        throw DimensionError(fmt::format("gradient buffers do not match rank {} of site {}", state.rank,
                                         to_string(state.site)));
    }
    const double s = weight * state.scale();
    const Vector ax = matvec(state.a, x);
    const Vector bg = matvec_t(state.b, upstream);
    const Vector dax = apply_transform(state, ax);
    const Vector dtbg = apply_transform_t(state, bg);

    add_outer(acc.b, upstream, dax, s);
    add_outer(acc.a, dtbg, x, s);
    if (state.transform_trainable) {
        for (std::size_t i = 0; i < r; ++i) {
            const double si = s * bg[i];
            for (std::size_t j = 0; j <= i; ++j) acc.l(i, j) += si * ax[j];
            for (std::size_t j = i + 1; j < r; ++j) acc.u(i, j) += si * ax[j];
        }
        add_flops(2 * r * r);
    }
}

bool structure_ok(const AdapterState& state) noexcept {
    if (state.rank < 1 || state.rank > state.rank_cap()) return false;
    const auto r = static_cast<std::size_t>(state.rank);
    if (state.a.rows() != r || state.a.cols() != state.in_dim()) return false;
    if (state.b.rows() != state.out_dim() || state.b.cols() != r) return false;
    if (state.l.rows() != r || state.l.cols() != r || state.u.rows() != r || state.u.cols() != r) return false;
    for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < r; ++j) {
            if (j > i && state.l(i, j) != 0.0) return false;
            if (j <= i && state.u(i, j) != 0.0) return false;
        }
    }
    return true;
}

}  // namespace triadapt
