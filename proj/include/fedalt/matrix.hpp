// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fedalt {

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Dense row-major matrix of 64-bit floats. The whole engine runs on these;
/// layers treat row i as one example (or one token).
class Matrix {
public:
    Matrix() = default;
    Matrix(int rows, int cols) : rows_(rows), cols_(cols) {
        if (rows < 0 || cols < 0) throw Error("Matrix: negative dimension");
        data_.assign(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols), 0.0);
    }
    Matrix(std::initializer_list<std::initializer_list<double>> init) {
        rows_ = static_cast<int>(init.size());
        cols_ = rows_ > 0 ? static_cast<int>(init.begin()->size()) : 0;
        data_.reserve(static_cast<std::size_t>(rows_) * cols_);
        for (const auto& row : init) {
            if (static_cast<int>(row.size()) != cols_) throw Error("Matrix: ragged initializer");
            for (double v : row) data_.push_back(v);
        }
    }

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(int r, int c) { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
    double operator()(int r, int c) const { return data_[static_cast<std::size_t>(r) * cols_ + c]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::span<double> row(int r) { return {data_.data() + static_cast<std::size_t>(r) * cols_, static_cast<std::size_t>(cols_)}; }
    std::span<const double> row(int r) const { return {data_.data() + static_cast<std::size_t>(r) * cols_, static_cast<std::size_t>(cols_)}; }

    bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

    /// Bitwise equality (shape and every entry, including signed zeros).
    friend bool operator==(const Matrix& a, const Matrix& b) {
        return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
    }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    /// Rows stay contiguous, so a (n x t*c) matrix can be viewed as (n*t x c).
    Matrix reshaped(int rows, int cols) const {
        if (static_cast<std::size_t>(rows) * cols != data_.size())
            throw Error("Matrix::reshaped: element count mismatch");
        Matrix out;
        out.rows_ = rows;
        out.cols_ = cols;
        out.data_ = data_;
        return out;
    }

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<double> data_;
};

inline void check_shape(const Matrix& m, int rows, int cols, const std::string& what) {
    if (m.rows() != rows || m.cols() != cols)
        throw Error(what + ": expected " + std::to_string(rows) + "x" + std::to_string(cols) +
                    ", got " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
}

/// C = A * B
inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) throw Error("matmul: inner dimension mismatch");
    Matrix c(a.rows(), b.cols());
    for (int i = 0; i < a.rows(); ++i) {
        auto ci = c.row(i);
        auto ai = a.row(i);
        for (int k = 0; k < a.cols(); ++k) {
            const double aik = ai[k];
            if (aik == 0.0) continue;
            auto bk = b.row(k);
            for (int j = 0; j < b.cols(); ++j) ci[j] += aik * bk[j];
        }
    }
    return c;
}

/// C = A * B^T  (rows of A dotted with rows of B; the hot path for y = x W^T)
inline Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) throw Error("matmul_nt: inner dimension mismatch");
    Matrix c(a.rows(), b.rows());
    for (int i = 0; i < a.rows(); ++i) {
        auto ai = a.row(i);
        auto ci = c.row(i);
        for (int j = 0; j < b.rows(); ++j) {
            auto bj = b.row(j);
            double acc = 0.0;
            for (int k = 0; k < a.cols(); ++k) acc += ai[k] * bj[k];
            ci[j] = acc;
        }
    }
    return c;
}

/// C = A^T * B
inline Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) throw Error("matmul_tn: inner dimension mismatch");
    Matrix c(a.cols(), b.cols());
    for (int i = 0; i < a.rows(); ++i) {
        auto ai = a.row(i);
        auto bi = b.row(i);
        for (int j = 0; j < a.cols(); ++j) {
            const double aij = ai[j];
            if (aij == 0.0) continue;
            auto cj = c.row(j);
            for (int k = 0; k < b.cols(); ++k) cj[k] += aij * bi[k];
        }
    }
    return c;
}

inline void add_inplace(Matrix& a, const Matrix& b, double scale = 1.0) {
    if (!a.same_shape(b)) throw Error("add_inplace: shape mismatch");
    double* pa = a.data();
    const double* pb = b.data();
    for (std::size_t i = 0; i < a.size(); ++i) pa[i] += scale * pb[i];
}

inline Matrix add(const Matrix& a, const Matrix& b) {
    Matrix c = a;
    add_inplace(c, b);
    return c;
}

inline Matrix sub(const Matrix& a, const Matrix& b) {
    Matrix c = a;
    add_inplace(c, b, -1.0);
    return c;
}

inline Matrix scaled(const Matrix& a, double s) {
    Matrix c = a;
    double* p = c.data();
    for (std::size_t i = 0; i < c.size(); ++i) p[i] *= s;
    return c;
}

inline void scale_inplace(Matrix& a, double s) {
    double* p = a.data();
    for (std::size_t i = 0; i < a.size(); ++i) p[i] *= s;
}

inline Matrix transposed(const Matrix& a) {
    Matrix c(a.cols(), a.rows());
    for (int i = 0; i < a.rows(); ++i)
        for (int j = 0; j < a.cols(); ++j) c(j, i) = a(i, j);
    return c;
}

inline Matrix identity(int n) {
    Matrix c(n, n);
    for (int i = 0; i < n; ++i) c(i, i) = 1.0;
    return c;
}

inline double frobenius_norm(const Matrix& a) {
    double acc = 0.0;
    const double* p = a.data();
    for (std::size_t i = 0; i < a.size(); ++i) acc += p[i] * p[i];
    return std::sqrt(acc);
}

inline double max_abs(const Matrix& a) {
    double m = 0.0;
    const double* p = a.data();
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(p[i]));
    return m;
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) throw Error("max_abs_diff: shape mismatch");
    double m = 0.0;
    const double* pa = a.data();
    const double* pb = b.data();
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(pa[i] - pb[i]));
    return m;
}

}  // namespace fedalt
