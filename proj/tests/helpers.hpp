#pragma once

// Shared utilities for the unit tests: relative-error metric used by all
// finite-difference gradient checks, plus small random-data builders.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "sbfd/matrix.hpp"
#include "sbfd/rng.hpp"

namespace test_util {

// Relative error with an absolute floor so near-zero pairs compare sanely.
inline double rel_err(double a, double b) {
    return std::abs(a - b) / std::max(std::abs(a) + std::abs(b), 1e-6);
}

constexpr double kFdStep = 1e-5;       // central-difference step
constexpr double kFdTolerance = 1e-4;  // max allowed rel_err for gradient checks

// Central finite difference of `f` w.r.t. *x.
template <class F>
double central_diff(F&& f, double* x, double h = kFdStep) {
    const double saved = *x;
    *x = saved + h;
    const double up = f();
    *x = saved - h;
    const double down = f();
    *x = saved;
    return (up - down) / (2.0 * h);
}

inline std::vector<double> random_vector(std::size_t n, sbfd::Rng& rng, double lo = -1.0,
                                         double hi = 1.0) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.uniform(lo, hi);
    return v;
}

inline sbfd::Matrix random_matrix(std::size_t rows, std::size_t cols, sbfd::Rng& rng,
                                  double lo = -1.0, double hi = 1.0) {
    sbfd::Matrix m(rows, cols);
    for (double& x : m.data) x = rng.uniform(lo, hi);
    return m;
}

// Unique temporary path under the system temp dir; removed by the caller.
inline std::string temp_path(const std::string& tag) {
    static std::uint64_t counter = 0;
    return (std::filesystem::temp_directory_path() /
            ("sbfd_test_" + tag + "_" + std::to_string(++counter) + ".tmp"))
        .string();
}

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& tag) : path(temp_path(tag)) {}
    ~TempFile() {
        std::error_code ec;
        std::filesystem::remove(path, ec);
    }
};

// Log of the absolute determinant via LU decomposition with partial pivoting.
// Used as an independent check of analytic flow log-determinants.
inline double lu_log_abs_det(std::vector<std::vector<double>> a) {
    const std::size_t n = a.size();
    double log_det = 0.0;
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t pivot = col;
        for (std::size_t r = col + 1; r < n; ++r)
            if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
        if (pivot != col) std::swap(a[pivot], a[col]);
        const double p = a[col][col];
        log_det += std::log(std::abs(p));
        for (std::size_t r = col + 1; r < n; ++r) {
            const double factor = a[r][col] / p;
            for (std::size_t c = col; c < n; ++c) a[r][c] -= factor * a[col][c];
        }
    }
    return log_det;
}

}  // namespace test_util
