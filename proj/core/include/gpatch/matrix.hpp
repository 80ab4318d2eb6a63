#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "gpatch/error.hpp"

namespace gpatch {

/// Dense row-major matrix of doubles. Minimal surface: storage, element
/// access, and the few products the library needs.
class Matrix {
public:
    Matrix() = default;
    Matrix(int rows, int cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * cols, fill) {}

    int rows() const { return rows_; }
    int cols() const { return cols_; }

    double &operator()(int r, int c) { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
    double operator()(int r, int c) const { return data_[static_cast<std::size_t>(r) * cols_ + c]; }

    double *row(int r) { return data_.data() + static_cast<std::size_t>(r) * cols_; }
    const double *row(int r) const { return data_.data() + static_cast<std::size_t>(r) * cols_; }

    std::vector<double> &data() { return data_; }
    const std::vector<double> &data() const { return data_; }

    static Matrix identity(int n) {
        Matrix m(n, n);
        for (int i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    double frobenius_norm() const {
        double s = 0.0;
        for (double v : data_) s += v * v;
        return std::sqrt(s);
    }

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<double> data_;
};

/// C = A * B.
inline Matrix matmul(const Matrix &a, const Matrix &b) {
    if (a.cols() != b.rows()) throw Error(ErrorCode::ShapeMismatch, "matmul: inner dimensions differ");
    Matrix c(a.rows(), b.cols());
    for (int i = 0; i < a.rows(); ++i) {
        const double *arow = a.row(i);
        double *crow = c.row(i);
        for (int k = 0; k < a.cols(); ++k) {
            const double aik = arow[k];
            if (aik == 0.0) continue;
            const double *brow = b.row(k);
            for (int j = 0; j < b.cols(); ++j) crow[j] += aik * brow[j];
        }
    }
    return c;
}

/// C = A * B^T (rows of A dotted with rows of B; cache-friendly).
inline Matrix matmul_bt(const Matrix &a, const Matrix &b) {
    if (a.cols() != b.cols()) throw Error(ErrorCode::ShapeMismatch, "matmul_bt: widths differ");
    Matrix c(a.rows(), b.rows());
    for (int i = 0; i < a.rows(); ++i) {
        const double *arow = a.row(i);
        double *crow = c.row(i);
        for (int j = 0; j < b.rows(); ++j) {
            const double *brow = b.row(j);
            double s = 0.0;
            for (int k = 0; k < a.cols(); ++k) s += arow[k] * brow[k];
            crow[j] = s;
        }
    }
    return c;
}

/// LU factorization with partial pivoting; solves A X = B in place of copies.
/// Used for the dense closed-form ranking solve. Throws on singular pivots.
class LuSolver {
public:
    explicit LuSolver(const Matrix &a) : n_(a.rows()), lu_(a), perm_(static_cast<std::size_t>(a.rows())) {
        if (a.rows() != a.cols()) throw Error(ErrorCode::ShapeMismatch, "LuSolver: matrix not square");
        for (int i = 0; i < n_; ++i) perm_[i] = i;
        for (int k = 0; k < n_; ++k) {
            int pivot = k;
            double best = std::fabs(lu_(k, k));
            for (int i = k + 1; i < n_; ++i) {
                const double v = std::fabs(lu_(i, k));
                if (v > best) {
                    best = v;
                    pivot = i;
                }
            }
            if (best == 0.0) throw Error(ErrorCode::InvalidArgument, "LuSolver: singular matrix");
            if (pivot != k) {
                for (int j = 0; j < n_; ++j) std::swap(lu_(k, j), lu_(pivot, j));
                std::swap(perm_[k], perm_[pivot]);
            }
            const double inv = 1.0 / lu_(k, k);
            for (int i = k + 1; i < n_; ++i) {
                const double f = lu_(i, k) * inv;
                lu_(i, k) = f;
                if (f == 0.0) continue;
                for (int j = k + 1; j < n_; ++j) lu_(i, j) -= f * lu_(k, j);
            }
        }
    }

    /// Solve A x = b.
    std::vector<double> solve(const std::vector<double> &b) const {
        std::vector<double> x(static_cast<std::size_t>(n_));
        for (int i = 0; i < n_; ++i) x[i] = b[perm_[i]];
        for (int i = 1; i < n_; ++i) {
            double s = x[i];
            for (int j = 0; j < i; ++j) s -= lu_(i, j) * x[j];
            x[i] = s;
        }
        for (int i = n_ - 1; i >= 0; --i) {
            double s = x[i];
            for (int j = i + 1; j < n_; ++j) s -= lu_(i, j) * x[j];
            x[i] = s / lu_(i, i);
        }
        return x;
    }

private:
    int n_;
    Matrix lu_;
    std::vector<int> perm_;
};

} // namespace gpatch
