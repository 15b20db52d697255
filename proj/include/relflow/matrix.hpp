#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "relflow/errors.hpp"

namespace relflow {

/// Dense row-major matrix of 64-bit reals. The carrier for weight matrices
/// and batches throughout the library.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> v;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), v(r * c, 0.0) {}
    Matrix(std::size_t r, std::size_t c, std::vector<double> values)
        : rows(r), cols(c), v(std::move(values)) {
        if (v.size() != rows * cols)
            throw ValidationError("Matrix: value count " + std::to_string(v.size()) +
                                  " does not match shape " + shape_str());
    }

    double& at(std::size_t r, std::size_t c) { return v[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return v[r * cols + c]; }

    double* row(std::size_t r) { return v.data() + r * cols; }
    const double* row(std::size_t r) const { return v.data() + r * cols; }

    std::string shape_str() const {
        return "(" + std::to_string(rows) + "x" + std::to_string(cols) + ")";
    }

    bool all_finite() const {
        for (double x : v)
            if (!std::isfinite(x)) return false;
        return true;
    }

    void fill(double x) { std::fill(v.begin(), v.end(), x); }
};

/// C = A * B. Shapes checked; both reported on mismatch.
inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows)
        throw ValidationError("matmul: dimension mismatch " + a.shape_str() + " * " +
                              b.shape_str());
    Matrix c(a.rows, b.cols);
    const std::size_t n = b.cols;
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* ar = a.row(i);
        double* cr = c.row(i);
        for (std::size_t p = 0; p < a.cols; ++p) {
            const double s = ar[p];
            const double* br = b.row(p);
            for (std::size_t j = 0; j < n; ++j) cr[j] += s * br[j];
        }
    }
    return c;
}

/// C = A^T * B  (A is m x k, B is m x n, C is k x n).
inline Matrix matmul_at_b(const Matrix& a, const Matrix& b) {
    if (a.rows != b.rows)
        throw ValidationError("matmul_at_b: dimension mismatch " + a.shape_str() + "^T * " +
                              b.shape_str());
    Matrix c(a.cols, b.cols);
    const std::size_t n = b.cols;
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* ar = a.row(i);
        const double* br = b.row(i);
        for (std::size_t p = 0; p < a.cols; ++p) {
            const double s = ar[p];
            double* cr = c.row(p);
            for (std::size_t j = 0; j < n; ++j) cr[j] += s * br[j];
        }
    }
    return c;
}

/// C = A * B^T  (A is m x k, B is n x k, C is m x n).
inline Matrix matmul_a_bt(const Matrix& a, const Matrix& b) {
    if (a.cols != b.cols)
        throw ValidationError("matmul_a_bt: dimension mismatch " + a.shape_str() + " * " +
                              b.shape_str() + "^T");
    Matrix c(a.rows, b.rows);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* ar = a.row(i);
        double* cr = c.row(i);
        for (std::size_t j = 0; j < b.rows; ++j) {
            const double* br = b.row(j);
            double acc = 0.0;
            for (std::size_t p = 0; p < a.cols; ++p) acc += ar[p] * br[p];
            cr[j] = acc;
        }
    }
    return c;
}

inline Matrix identity_matrix(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m.at(i, i) = 1.0;
    return m;
}

} // namespace relflow
