// SPDX-License-Identifier: Apache-2.0
//
// Test-only oracles. Nothing here calls into the code under test for the
// quantity it checks.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "triadapt/adapter.hpp"
#include "triadapt/rng.hpp"

namespace oracle {

using triadapt::Matrix;

/// Central difference of f with respect to every entry of m (m is restored).
inline Matrix central_difference(Matrix& m, const std::function<double()>& f, double h = 1e-6) {
    Matrix g(m.rows(), m.cols());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) {
            const double keep = m(i, j);
            m(i, j) = keep + h;
            const double up = f();
            m(i, j) = keep - h;
            const double down = f();
            m(i, j) = keep;
            g(i, j) = (up - down) / (2.0 * h);
        }
    }
    return g;
}

/// Worst per-entry disagreement: relative where |fd| >= floor, absolute below it.
inline double worst_error(const Matrix& analytic, const Matrix& fd, double floor = 1e-8) {
    double worst = 0.0;
    for (std::size_t i = 0; i < fd.size(); ++i) {
        const double a = analytic.data()[i];
        const double f = fd.data()[i];
        const double err = std::abs(f) < floor ? std::abs(a - f) : std::abs(a - f) / std::abs(f);
        worst = std::max(worst, err);
    }
    return worst;
}

/// Triple-loop product.
inline Matrix naive_matmul(const Matrix& a, const Matrix& b) {
    Matrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < b.cols(); ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
            c(i, j) = s;
        }
    return c;
}

/// ||A A^T - I||^2 + ||B^T B - I||^2 entry by entry.
inline double orth_penalty(const Matrix& a, const Matrix& b) {
    const std::size_t r = a.rows();
    double total = 0.0;
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < r; ++j) {
            double ga = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) ga += a(i, k) * a(j, k);
            double gb = 0.0;
            for (std::size_t k = 0; k < b.rows(); ++k) gb += b(k, i) * b(k, j);
            const double id = i == j ? 1.0 : 0.0;
            total += (ga - id) * (ga - id) + (gb - id) * (gb - id);
        }
    return total;
}

/// Random adapter of rank r with every factor nonzero (B and U included).
inline triadapt::AdapterState random_state(std::uint64_t seed, int r, int n, int d, double alpha = 2.0) {
    triadapt::Rng rng(seed);
    const auto rr = static_cast<std::size_t>(r);
    triadapt::AdapterState s{
        .site = {0, triadapt::Role::dense},
        .w0 = triadapt::gaussian_matrix(static_cast<std::size_t>(d), static_cast<std::size_t>(n), 0.5, rng),
        .a = triadapt::gaussian_matrix(rr, static_cast<std::size_t>(n), 0.5, rng),
        .b = triadapt::gaussian_matrix(static_cast<std::size_t>(d), rr, 0.5, rng),
        .l = triadapt::apply_lower_mask(triadapt::gaussian_matrix(rr, rr, 0.5, rng)),
        .u = triadapt::apply_upper_mask(triadapt::gaussian_matrix(rr, rr, 0.5, rng)),
        .rank = r,
        .alpha = alpha,
        .epsilon = 1e-6,
        .norm_record = {},
    };
    return s;
}

inline std::vector<double> random_vector(std::size_t n, triadapt::Rng& rng) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.normal();
    return v;
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

}  // namespace oracle
