// Copyright (c) 2026 The kronlora Authors
// SPDX-License-Identifier: Apache-2.0

#include "kronlora/dense_matrix.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "kronlora/errors.hpp"

namespace kronlora {

namespace {

void require_positive(std::size_t rows, std::size_t cols) {
    if (rows == 0 || cols == 0) {
        throw ShapeError("matrix dimensions must be positive, got " + std::to_string(rows) + "x" +
                         std::to_string(cols));
    }
}

void require_same_shape(const DenseMatrix& a, const DenseMatrix& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " + b.shape_string());
    }
}

} // namespace

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {
    require_positive(rows, cols);
}

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    require_positive(rows, cols);
    if (data_.size() != rows * cols) {
        throw ShapeError("data length " + std::to_string(data_.size()) + " does not match " + shape_string());
    }
}

DenseMatrix::DenseMatrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    require_positive(rows_, cols_);
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
        if (r.size() != cols_) {
            throw ShapeError("ragged initializer list");
        }
        data_.insert(data_.end(), r.begin(), r.end());
    }
}

DenseMatrix DenseMatrix::identity(std::size_t n) {
    DenseMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        m(i, i) = 1.0;
    }
    return m;
}

DenseMatrix DenseMatrix::column(std::span<const double> values) {
    return DenseMatrix(values.size(), 1, std::vector<double>(values.begin(), values.end()));
}

bool DenseMatrix::operator==(const DenseMatrix& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_ && data_ == other.data_;
}

std::string DenseMatrix::shape_string() const {
    return "(" + std::to_string(rows_) + "x" + std::to_string(cols_) + ")";
}

DenseMatrix matmul(const DenseMatrix& lhs, const DenseMatrix& rhs) {
    if (lhs.cols() != rhs.rows()) {
        throw ShapeError("matmul: lhs " + lhs.shape_string() + " incompatible with rhs " + rhs.shape_string());
    }
    const std::size_t n = lhs.rows();
    const std::size_t k = lhs.cols();
    const std::size_t m = rhs.cols();
    DenseMatrix out(n, m);
    const double* a = lhs.data().data();
    const double* b = rhs.data().data();
    double* c = out.data().data();
    // i-k-j order keeps the inner loop contiguous in both rhs and out.
    for (std::size_t i = 0; i < n; ++i) {
        double* crow = c + i * m;
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = a[i * k + p];
            if (aip == 0.0) {
                continue;
            }
            const double* brow = b + p * m;
            for (std::size_t j = 0; j < m; ++j) {
                crow[j] += aip * brow[j];
            }
        }
    }
    return out;
}

DenseMatrix matmul_nt(const DenseMatrix& lhs, const DenseMatrix& rhs) {
    if (lhs.cols() != rhs.cols()) {
        throw ShapeError("matmul_nt: lhs " + lhs.shape_string() + " incompatible with rhs^T of " +
                         rhs.shape_string());
    }
    const std::size_t k = lhs.cols();
    DenseMatrix out(lhs.rows(), rhs.rows());
    for (std::size_t i = 0; i < lhs.rows(); ++i) {
        const auto arow = lhs.row(i);
        for (std::size_t j = 0; j < rhs.rows(); ++j) {
            const auto brow = rhs.row(j);
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) {
                acc += arow[p] * brow[p];
            }
            out(i, j) = acc;
        }
    }
    return out;
}

DenseMatrix matmul_tn(const DenseMatrix& lhs, const DenseMatrix& rhs) {
    if (lhs.rows() != rhs.rows()) {
        throw ShapeError("matmul_tn: lhs^T of " + lhs.shape_string() + " incompatible with rhs " +
                         rhs.shape_string());
    }
    const std::size_t n = lhs.cols();
    const std::size_t m = rhs.cols();
    DenseMatrix out(n, m);
    for (std::size_t p = 0; p < lhs.rows(); ++p) {
        const auto arow = lhs.row(p);
        const auto brow = rhs.row(p);
        for (std::size_t i = 0; i < n; ++i) {
            const double api = arow[i];
            if (api == 0.0) {
                continue;
            }
            auto orow = out.row(i);
            for (std::size_t j = 0; j < m; ++j) {
                orow[j] += api * brow[j];
            }
        }
    }
    return out;
}

DenseMatrix transpose(const DenseMatrix& m) {
    DenseMatrix out(m.cols(), m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) {
            out(j, i) = m(i, j);
        }
    }
    return out;
}

DenseMatrix kron(const DenseMatrix& a, const DenseMatrix& b) {
    const std::size_t p = b.rows();
    const std::size_t q = b.cols();
    DenseMatrix out(a.rows() * p, a.cols() * q);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) {
            const double aij = a(i, j);
            for (std::size_t k = 0; k < p; ++k) {
                for (std::size_t l = 0; l < q; ++l) {
                    out(i * p + k, j * q + l) = aij * b(k, l);
                }
            }
        }
    }
    return out;
}

DenseMatrix vec_reshape(const DenseMatrix& v, std::size_t rows, std::size_t cols, VecOrder order) {
    if (v.cols() != 1 || v.rows() != rows * cols) {
        throw ShapeError("vec_reshape: expected a column vector of length " + std::to_string(rows * cols) +
                         ", got " + v.shape_string());
    }
    DenseMatrix out(rows, cols);
    const auto src = v.data();
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) {
            out(i, j) = order == VecOrder::ColumnMajor ? src[i + j * rows] : src[i * cols + j];
        }
    }
    return out;
}

DenseMatrix vec_flatten(const DenseMatrix& x, VecOrder order) {
    DenseMatrix out(x.size(), 1);
    auto dst = out.data();
    const std::size_t rows = x.rows();
    const std::size_t cols = x.cols();
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) {
            dst[order == VecOrder::ColumnMajor ? i + j * rows : i * cols + j] = x(i, j);
        }
    }
    return out;
}

std::size_t numerical_rank(const DenseMatrix& m, double tol) {
    if (!(tol > 0.0)) {
        throw ConfigError("numerical_rank: tolerance must be positive");
    }
    const double scale = max_abs(m);
    if (scale == 0.0) {
        return 0;
    }
    const double threshold = tol * scale;
    DenseMatrix work = m;
    const std::size_t rows = work.rows();
    const std::size_t cols = work.cols();
    std::size_t rank = 0;
    for (std::size_t c = 0; c < cols && rank < rows; ++c) {
        std::size_t pivot = rank;
        double best = std::abs(work(rank, c));
        for (std::size_t r = rank + 1; r < rows; ++r) {
            const double v = std::abs(work(r, c));
            if (v > best) {
                best = v;
                pivot = r;
            }
        }
        if (best <= threshold) {
            continue;
        }
        if (pivot != rank) {
            std::swap_ranges(work.row(pivot).begin(), work.row(pivot).end(), work.row(rank).begin());
        }
        const double p = work(rank, c);
        for (std::size_t r = rank + 1; r < rows; ++r) {
            const double factor = work(r, c) / p;
            if (factor == 0.0) {
                continue;
            }
            for (std::size_t j = c; j < cols; ++j) {
                work(r, j) -= factor * work(rank, j);
            }
        }
        ++rank;
    }
    return rank;
}

DenseMatrix add(const DenseMatrix& a, const DenseMatrix& b) {
    DenseMatrix out = a;
    add_in_place(out, b);
    return out;
}

DenseMatrix subtract(const DenseMatrix& a, const DenseMatrix& b) {
    DenseMatrix out = a;
    add_in_place(out, b, -1.0);
    return out;
}

DenseMatrix scaled(const DenseMatrix& m, double factor) {
    DenseMatrix out = m;
    for (double& v : out.data()) {
        v *= factor;
    }
    return out;
}

void add_in_place(DenseMatrix& target, const DenseMatrix& delta, double factor) {
    require_same_shape(target, delta, "add");
    auto dst = target.data();
    const auto src = delta.data();
    for (std::size_t i = 0; i < dst.size(); ++i) {
        dst[i] += factor * src[i];
    }
}

DenseMatrix slice_columns(const DenseMatrix& m, std::size_t first, std::size_t count) {
    if (count == 0 || first + count > m.cols()) {
        throw ShapeError("slice_columns: range [" + std::to_string(first) + ", " + std::to_string(first + count) +
                         ") outside " + m.shape_string());
    }
    DenseMatrix out(m.rows(), count);
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < count; ++j) {
            out(i, j) = m(i, first + j);
        }
    }
    return out;
}

void set_column(DenseMatrix& target, std::size_t col, const DenseMatrix& column_vector) {
    if (column_vector.cols() != 1 || column_vector.rows() != target.rows() || col >= target.cols()) {
        throw ShapeError("set_column: cannot place " + column_vector.shape_string() + " into column " +
                         std::to_string(col) + " of " + target.shape_string());
    }
    for (std::size_t i = 0; i < target.rows(); ++i) {
        target(i, col) = column_vector(i, 0);
    }
}

double max_abs(const DenseMatrix& m) noexcept {
    double best = 0.0;
    for (double v : m.data()) {
        best = std::max(best, std::abs(v));
    }
    return best;
}

double max_abs_diff(const DenseMatrix& a, const DenseMatrix& b) {
    require_same_shape(a, b, "max_abs_diff");
    double best = 0.0;
    const auto x = a.data();
    const auto y = b.data();
    for (std::size_t i = 0; i < x.size(); ++i) {
        best = std::max(best, std::abs(x[i] - y[i]));
    }
    return best;
}

bool all_finite(const DenseMatrix& m) noexcept {
    return std::all_of(m.data().begin(), m.data().end(), [](double v) { return std::isfinite(v); });
}

} // namespace kronlora
