// Copyright (c) 2026 The kronlora Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace kronlora {

/// Dense 2-D array of doubles. Storage is row-major; `vec_flatten` and
/// `vec_reshape` expose a column-major vectorization on top of it.
class DenseMatrix {
public:
    DenseMatrix() = default;
    DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data);
    DenseMatrix(std::initializer_list<std::initializer_list<double>> rows);

    static DenseMatrix identity(std::size_t n);
    static DenseMatrix column(std::span<const double> values);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }

    std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

    // Strict element-wise equality, used for bit-exact comparisons.
    bool operator==(const DenseMatrix& other) const noexcept;

    std::string shape_string() const;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

enum class VecOrder {
    ColumnMajor,
    RowMajor, // negative control only; breaks the Kronecker vec identity
};

DenseMatrix matmul(const DenseMatrix& lhs, const DenseMatrix& rhs);
// lhs * rhs^T
DenseMatrix matmul_nt(const DenseMatrix& lhs, const DenseMatrix& rhs);
// lhs^T * rhs
DenseMatrix matmul_tn(const DenseMatrix& lhs, const DenseMatrix& rhs);
DenseMatrix transpose(const DenseMatrix& m);
DenseMatrix kron(const DenseMatrix& a, const DenseMatrix& b);

/// Inverse of vec_flatten: output(i, j) = v[i + j * rows] for column-major order.
DenseMatrix vec_reshape(const DenseMatrix& v, std::size_t rows, std::size_t cols,
                        VecOrder order = VecOrder::ColumnMajor);
DenseMatrix vec_flatten(const DenseMatrix& x, VecOrder order = VecOrder::ColumnMajor);

/// Rank via Gaussian elimination with partial pivoting. Pivots with magnitude
/// <= tol * max|m| are treated as zero.
std::size_t numerical_rank(const DenseMatrix& m, double tol = 1e-8);

DenseMatrix add(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix subtract(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix scaled(const DenseMatrix& m, double factor);
void add_in_place(DenseMatrix& target, const DenseMatrix& delta, double factor = 1.0);

DenseMatrix slice_columns(const DenseMatrix& m, std::size_t first, std::size_t count);
void set_column(DenseMatrix& target, std::size_t col, const DenseMatrix& column_vector);

double max_abs(const DenseMatrix& m) noexcept;
double max_abs_diff(const DenseMatrix& a, const DenseMatrix& b);
bool all_finite(const DenseMatrix& m) noexcept;

} // namespace kronlora
