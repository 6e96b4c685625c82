// SPDX-License-Identifier: Apache-2.0
#include "triadapt/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include <fmt/format.h>

#include "triadapt/errors.hpp"

namespace triadapt {

namespace {

thread_local std::uint64_t g_flops = 0;

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw DimensionError(fmt::format("{}: shape mismatch {} vs {}", op, a.shape(), b.shape()));
    }
}

void require_square(const Matrix& m, const char* op) {
    if (!m.square()) {
        throw DimensionError(fmt::format("{}: expected a square matrix, got {}", op, m.shape()));
    }
}

}  // namespace

std::uint64_t flop_count() noexcept { return g_flops; }
void add_flops(std::uint64_t n) noexcept { g_flops += n; }

Matrix::Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols) {
    if (rows == 0 || cols == 0) {
        throw DimensionError(fmt::format("matrix dimensions must be positive, got ({} x {})", rows, cols));
    }
    data_.assign(rows * cols, 0.0);
}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (rows == 0 || cols == 0) {
        throw DimensionError(fmt::format("matrix dimensions must be positive, got ({} x {})", rows, cols));
    }
    if (data_.size() != rows * cols) {
        throw DimensionError(fmt::format("payload of {} values does not fill ({} x {})",
                                         data_.size(), rows, cols));
    }
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows)
    : rows_(rows.size()), cols_(rows.size() == 0 ? 0 : rows.begin()->size()) {
    if (rows_ == 0 || cols_ == 0) throw DimensionError("matrix literal must be non-empty");
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
        if (r.size() != cols_) throw DimensionError("ragged matrix literal");
        data_.insert(data_.end(), r.begin(), r.end());
    }
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix Matrix::column(std::span<const double> v) {
    return Matrix(v.size(), 1, std::vector<double>(v.begin(), v.end()));
}

std::string Matrix::shape() const { return fmt::format("({} x {})", rows_, cols_); }

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw DimensionError(fmt::format("matmul: inner dimensions differ, {} x {}", a.shape(), b.shape()));
    }
    Matrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto dst = out.row(i);
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            auto src = b.row(k);
            for (std::size_t j = 0; j < b.cols(); ++j) dst[j] += aik * src[j];
        }
    }
    add_flops(2 * a.rows() * a.cols() * b.cols());
    return out;
}

Matrix transpose(const Matrix& m) {
    Matrix out(m.cols(), m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) out(j, i) = m(i, j);
    return out;
}

Matrix operator+(const Matrix& a, const Matrix& b) {
    Matrix out = a;
    out += b;
    return out;
}

Matrix& operator+=(Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "add");
    auto dst = a.data();
    auto src = b.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    add_flops(dst.size());
    return a;
}

Matrix operator-(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "subtract");
    Matrix out = a;
    auto dst = out.data();
    auto src = b.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] -= src[i];
    add_flops(dst.size());
    return out;
}

Matrix operator*(double s, const Matrix& m) {
    Matrix out = m;
    for (double& v : out.data()) v *= s;
    add_flops(m.size());
    return out;
}

Vector matvec(const Matrix& a, std::span<const double> x) {
    if (a.cols() != x.size()) {
        throw DimensionError(fmt::format("matvec: {} times vector of length {}", a.shape(), x.size()));
    }
    Vector out(a.rows(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto r = a.row(i);
        double acc = 0.0;
        for (std::size_t j = 0; j < r.size(); ++j) acc += r[j] * x[j];
        out[i] = acc;
    }
    add_flops(2 * a.size());
    return out;
}

Vector matvec_t(const Matrix& a, std::span<const double> x) {
    if (a.rows() != x.size()) {
        throw DimensionError(fmt::format("matvec_t: transpose of {} times vector of length {}",
                                         a.shape(), x.size()));
    }
    Vector out(a.cols(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto r = a.row(i);
        const double xi = x[i];
        for (std::size_t j = 0; j < r.size(); ++j) out[j] += r[j] * xi;
    }
    add_flops(2 * a.size());
    return out;
}

Matrix outer(std::span<const double> u, std::span<const double> v, double s) {
    Matrix out(u.size(), v.size());
    add_outer(out, u, v, s);
    return out;
}

void add_outer(Matrix& acc, std::span<const double> u, std::span<const double> v, double s) {
    if (acc.rows() != u.size() || acc.cols() != v.size()) {
        throw DimensionError(fmt::format("add_outer: {} cannot hold a {} x {} outer product",
                                         acc.shape(), u.size(), v.size()));
    }
    for (std::size_t i = 0; i < u.size(); ++i) {
        const double su = s * u[i];
        auto dst = acc.row(i);
        for (std::size_t j = 0; j < v.size(); ++j) dst[j] += su * v[j];
    }
    add_flops(2 * acc.size());
}

double frobenius_norm(const Matrix& m) {
    double sum = 0.0;
    for (double v : m.data()) sum += v * v;
    add_flops(2 * m.size());
    return std::sqrt(sum);
}

double max_abs(const Matrix& m) {
    double best = 0.0;
    for (double v : m.data()) best = std::max(best, std::abs(v));
    return best;
}

bool all_finite(const Matrix& m) noexcept {
    return std::all_of(m.data().begin(), m.data().end(), [](double v) { return std::isfinite(v); });
}

Matrix apply_lower_mask(const Matrix& m) {
    require_square(m, "apply_lower_mask");
    Matrix out = m;
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = i + 1; j < m.cols(); ++j) out(i, j) = 0.0;
    return out;
}

Matrix apply_upper_mask(const Matrix& m) {
    require_square(m, "apply_upper_mask");
    Matrix out = m;
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j <= i; ++j) out(i, j) = 0.0;
    return out;
}

Matrix pad(const Matrix& m, std::size_t rows, std::size_t cols) {
    if (rows < m.rows() || cols < m.cols()) {
        throw DimensionError(fmt::format("pad: cannot shrink {} to ({} x {})", m.shape(), rows, cols));
    }
    Matrix out(rows, cols);
    for (std::size_t i = 0; i < m.rows(); ++i)
        std::copy(m.row(i).begin(), m.row(i).end(), out.row(i).begin());
    return out;
}

std::uint64_t content_hash(const Matrix& m) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](const void* p, std::size_t n) {
        const auto* bytes = static_cast<const unsigned char*>(p);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= bytes[i];
            h *= 0x100000001b3ULL;
        }
    };
    const std::uint64_t shape[2] = {m.rows(), m.cols()};
    mix(shape, sizeof(shape));
    mix(m.data().data(), m.size() * sizeof(double));
    return h;
}

}  // namespace triadapt
