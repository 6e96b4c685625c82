// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major matrices of doubles and the handful of kernels the adapter,
// importance and trainer modules need. Every kernel bumps a thread-local
// float-op counter so callers can audit the cost of a code path.

#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace triadapt {

using Vector = std::vector<double>;

class Matrix {
public:
    /// Zero-filled rows x cols matrix; both dimensions must be positive.
    Matrix(std::size_t rows, std::size_t cols);
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
    /// Row-wise literal, e.g. Matrix{{1, 2}, {3, 4}}.
    Matrix(std::initializer_list<std::initializer_list<double>> rows);

    static Matrix identity(std::size_t n);
    static Matrix column(std::span<const double> v);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool square() const noexcept { return rows_ == cols_; }

    double& operator()(std::size_t i, std::size_t j) noexcept { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * cols_ + j]; }

    std::span<double> row(std::size_t i) noexcept { return {data_.data() + i * cols_, cols_}; }
    std::span<const double> row(std::size_t i) const noexcept {
        return {data_.data() + i * cols_, cols_};
    }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }

    /// "(rows x cols)", used in error messages.
    std::string shape() const;

    bool operator==(const Matrix& other) const = default;

private:
    std::size_t rows_;
    std::size_t cols_;
    std::vector<double> data_;
};

// Float-op accounting. One multiply-add counts as two operations.
std::uint64_t flop_count() noexcept;
void add_flops(std::uint64_t n) noexcept;

/// Counts the float operations issued on this thread during its lifetime.
class FlopScope {
public:
    FlopScope() noexcept : start_(flop_count()) {}
    std::uint64_t elapsed() const noexcept { return flop_count() - start_; }

private:
    std::uint64_t start_;
};

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& m);
Matrix operator+(const Matrix& a, const Matrix& b);
Matrix operator-(const Matrix& a, const Matrix& b);
Matrix operator*(double s, const Matrix& m);
Matrix& operator+=(Matrix& a, const Matrix& b);

/// a * x
Vector matvec(const Matrix& a, std::span<const double> x);
/// a^T * x
Vector matvec_t(const Matrix& a, std::span<const double> x);
/// u * v^T, scaled by s
Matrix outer(std::span<const double> u, std::span<const double> v, double s = 1.0);
/// acc += s * u * v^T
void add_outer(Matrix& acc, std::span<const double> u, std::span<const double> v, double s);

double frobenius_norm(const Matrix& m);
double max_abs(const Matrix& m);
bool all_finite(const Matrix& m) noexcept;

/// Keeps entries on and below the diagonal.
Matrix apply_lower_mask(const Matrix& m);
/// Keeps entries strictly above the diagonal.
Matrix apply_upper_mask(const Matrix& m);

/// Copy of m placed in the top-left corner of a zero rows x cols matrix.
Matrix pad(const Matrix& m, std::size_t rows, std::size_t cols);

/// FNV-1a over the raw bytes of the payload and the shape.
std::uint64_t content_hash(const Matrix& m) noexcept;

}  // namespace triadapt
