#pragma once

#include <stdexcept>
#include <vector>

#include "sbfd/matrix.hpp"

namespace sbfd {

// Average of the hidden-state rows whose mask bit is set. Padding rows never
// contribute, so two sequences that differ only in padding pool identically.
inline Vector mean_pool(const Matrix& states, const std::vector<int>& mask) {
    if (mask.size() != states.rows) throw std::invalid_argument("mean_pool: mask length mismatch");
    int count = 0;
    for (int m : mask) count += m != 0 ? 1 : 0;
    if (count == 0) throw std::invalid_argument("mean_pool: mask has no unmasked position");
    Vector out(states.cols, 0.0);
    for (std::size_t t = 0; t < states.rows; ++t) {
        if (!mask[t]) continue;
        const double* row = states.row(t);
        for (std::size_t j = 0; j < states.cols; ++j) out[j] += row[j];
    }
    const double inv = 1.0 / static_cast<double>(count);
    for (double& v : out) v *= inv;
    return out;
}

// d(mean)/d(states): each unmasked row receives d_pooled / count, masked rows
// receive exactly zero.
inline Matrix mean_pool_backward(const Vector& d_pooled, std::size_t seq_len, const std::vector<int>& mask) {
    if (mask.size() != seq_len) throw std::invalid_argument("mean_pool_backward: mask length mismatch");
    int count = 0;
    for (int m : mask) count += m != 0 ? 1 : 0;
    if (count == 0) throw std::invalid_argument("mean_pool_backward: mask has no unmasked position");
    Matrix dstates(seq_len, d_pooled.size());
    const double inv = 1.0 / static_cast<double>(count);
    for (std::size_t t = 0; t < seq_len; ++t) {
        if (!mask[t]) continue;
        double* row = dstates.row(t);
        for (std::size_t j = 0; j < d_pooled.size(); ++j) row[j] = d_pooled[j] * inv;
    }
    return dstates;
}

}  // namespace sbfd
