#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace sbfd {

using Vector = std::vector<double>;

// Dense row-major matrix of doubles; just enough linear algebra for the
// encoder and the flow.
struct Matrix {
    std::size_t rows = 0, cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    double* row(std::size_t i) { return data.data() + i * cols; }
    const double* row(std::size_t i) const { return data.data() + i * cols; }

    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
};

inline Matrix zeros_like(const Matrix& m) { return Matrix(m.rows, m.cols); }

// C = A * B
inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows) throw std::invalid_argument("matmul: inner dimensions differ");
    Matrix c(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* ai = a.row(i);
        double* ci = c.row(i);
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double aik = ai[k];
            const double* bk = b.row(k);
            for (std::size_t j = 0; j < b.cols; ++j) ci[j] += aik * bk[j];
        }
    }
    return c;
}

// C = A * B^T
inline Matrix matmul_abt(const Matrix& a, const Matrix& b) {
    if (a.cols != b.cols) throw std::invalid_argument("matmul_abt: inner dimensions differ");
    Matrix c(a.rows, b.rows);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* ai = a.row(i);
        for (std::size_t j = 0; j < b.rows; ++j) {
            const double* bj = b.row(j);
            double acc = 0.0;
            for (std::size_t k = 0; k < a.cols; ++k) acc += ai[k] * bj[k];
            c(i, j) = acc;
        }
    }
    return c;
}

// C += A^T * B  (accumulating form used for weight gradients)
inline void matmul_atb_add(const Matrix& a, const Matrix& b, Matrix& c) {
    if (a.rows != b.rows) throw std::invalid_argument("matmul_atb_add: inner dimensions differ");
    if (c.rows != a.cols || c.cols != b.cols) throw std::invalid_argument("matmul_atb_add: bad output shape");
    for (std::size_t k = 0; k < a.rows; ++k) {
        const double* ak = a.row(k);
        const double* bk = b.row(k);
        for (std::size_t i = 0; i < a.cols; ++i) {
            const double aki = ak[i];
            double* ci = c.row(i);
            for (std::size_t j = 0; j < b.cols; ++j) ci[j] += aki * bk[j];
        }
    }
}

inline void add_inplace(Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("add_inplace: shape mismatch");
    for (std::size_t i = 0; i < a.data.size(); ++i) a.data[i] += b.data[i];
}

inline bool all_finite(const Matrix& m) {
    for (double v : m.data)
        if (!std::isfinite(v)) return false;
    return true;
}

inline bool all_finite(const Vector& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

}  // namespace sbfd
