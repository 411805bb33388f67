#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <utility>
#include <vector>

#include "sbfd/matrix.hpp"
#include "sbfd/rng.hpp"

namespace sbfd {

struct FlowConfig {
    int n_layers = 4;
    int hidden_dim = 32;
    double s_max = 2.0;
    double learning_rate = 1e-2;
    int epochs = 200;
    int batch_size = 64;
    std::uint64_t seed = 1;

    void validate() const {
        if (n_layers <= 0 || hidden_dim <= 0 || epochs < 0 || batch_size <= 0)
            throw std::invalid_argument("FlowConfig: layer count, width and batch size must be positive");
        if (!(s_max > 0.0) || !(learning_rate > 0.0))
            throw std::invalid_argument("FlowConfig: s_max and learning rate must be positive");
    }
};

// One affine coupling step. The conditioning half passes through unchanged;
// the other half is scaled by exp(s) and shifted by t, where s and t come
// from small one-hidden-layer nets of the conditioning half. s is bounded to
// [-s_max, s_max] via tanh so the map can never collapse or blow up.
struct CouplingLayer {
    bool transform_upper = true;
    Matrix w_scale_hidden;  // half_dim x hidden
    Vector b_scale_hidden;  // hidden
    Matrix w_scale_out;     // hidden x half_dim
    Vector b_scale_out;     // half_dim
    Matrix w_shift_hidden;
    Vector b_shift_hidden;
    Matrix w_shift_out;
    Vector b_shift_out;
};

struct FlowParams {
    int dim = 0;
    double s_max = 2.0;
    std::vector<CouplingLayer> layers;
};

namespace flow_detail {

inline void check_vector(const Vector& v, const FlowParams& p, const char* where) {
    if (static_cast<int>(v.size()) != p.dim) throw std::invalid_argument(std::string(where) + ": dimension mismatch");
}

// hidden = tanh(in * w_h + b_h); out = hidden * w_o + b_o
inline Vector net_eval(const Vector& in, const Matrix& w_h, const Vector& b_h, const Matrix& w_o,
                       const Vector& b_o, Vector* hidden_out = nullptr) {
    Vector hidden(b_h);
    for (std::size_t a = 0; a < in.size(); ++a) {
        const double xa = in[a];
        const double* wr = w_h.row(a);
        for (std::size_t i = 0; i < hidden.size(); ++i) hidden[i] += xa * wr[i];
    }
    for (double& h : hidden) h = std::tanh(h);
    Vector out(b_o);
    for (std::size_t i = 0; i < hidden.size(); ++i) {
        const double hi = hidden[i];
        const double* wr = w_o.row(i);
        for (std::size_t j = 0; j < out.size(); ++j) out[j] += hi * wr[j];
    }
    if (hidden_out) *hidden_out = std::move(hidden);
    return out;
}

inline void split_halves(const Vector& v, bool transform_upper, Vector& cond, Vector& trans) {
    const std::size_t half = v.size() / 2;
    cond.assign(half, 0.0);
    trans.assign(half, 0.0);
    for (std::size_t i = 0; i < half; ++i) {
        if (transform_upper) {
            cond[i] = v[i];
            trans[i] = v[half + i];
        } else {
            cond[i] = v[half + i];
            trans[i] = v[i];
        }
    }
}

inline Vector join_halves(const Vector& cond, const Vector& trans, bool transform_upper) {
    const std::size_t half = cond.size();
    Vector v(2 * half, 0.0);
    for (std::size_t i = 0; i < half; ++i) {
        if (transform_upper) {
            v[i] = cond[i];
            v[half + i] = trans[i];
        } else {
            v[half + i] = cond[i];
            v[i] = trans[i];
        }
    }
    return v;
}

struct CouplingCache {
    Vector cond;   // conditioning half (inverse input)
    Vector h_s, h_t;
    Vector s_raw, s, t;
    Vector out_trans;  // transformed half after the inverse step
};

}  // namespace flow_detail

// Layer half-splits alternate with depth: even layers transform the upper
// half of the vector, odd layers the lower half.
inline FlowParams init_flow(int dim, const FlowConfig& cfg) {
    cfg.validate();
    if (dim <= 0 || dim % 2 != 0) throw std::invalid_argument("init_flow: dim must be positive and even");
    const std::size_t half = static_cast<std::size_t>(dim) / 2;
    const std::size_t w = static_cast<std::size_t>(cfg.hidden_dim);
    Rng rng(cfg.seed);
    const double bound = 1.0 / std::sqrt(static_cast<double>(half));
    auto random_hidden = [&](Matrix& m) {
        m = Matrix(half, w);
        for (double& v : m.data) v = rng.uniform(-bound, bound);
    };
    FlowParams p;
    p.dim = dim;
    p.s_max = cfg.s_max;
    p.layers.resize(static_cast<std::size_t>(cfg.n_layers));
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
        CouplingLayer& cl = p.layers[l];
        cl.transform_upper = (l % 2 == 0);
        random_hidden(cl.w_scale_hidden);
        cl.b_scale_hidden.assign(w, 0.0);
        // Zero output layers make every coupling start as the identity map.
        cl.w_scale_out = Matrix(w, half);
        cl.b_scale_out.assign(half, 0.0);
        random_hidden(cl.w_shift_hidden);
        cl.b_shift_hidden.assign(w, 0.0);
        cl.w_shift_out = Matrix(w, half);
        cl.b_shift_out.assign(half, 0.0);
    }
    return p;
}

inline FlowParams zero_flow_like(const FlowParams& p) {
    FlowParams z;
    z.dim = p.dim;
    z.s_max = p.s_max;
    z.layers.resize(p.layers.size());
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
        const CouplingLayer& a = p.layers[l];
        CouplingLayer& b = z.layers[l];
        b.transform_upper = a.transform_upper;
        b.w_scale_hidden = zeros_like(a.w_scale_hidden);
        b.b_scale_hidden.assign(a.b_scale_hidden.size(), 0.0);
        b.w_scale_out = zeros_like(a.w_scale_out);
        b.b_scale_out.assign(a.b_scale_out.size(), 0.0);
        b.w_shift_hidden = zeros_like(a.w_shift_hidden);
        b.b_shift_hidden.assign(a.b_shift_hidden.size(), 0.0);
        b.w_shift_out = zeros_like(a.w_shift_out);
        b.b_shift_out.assign(a.b_shift_out.size(), 0.0);
    }
    return z;
}

// Generative direction: latent -> data, layers applied front to back.
// Returns the mapped vector and the exact log |det J| (= sum of log-scales).
inline std::pair<Vector, double> flow_forward(const Vector& z, const FlowParams& params) {
    flow_detail::check_vector(z, params, "flow_forward");
    Vector v = z;
    double log_det = 0.0;
    for (const CouplingLayer& cl : params.layers) {
        Vector cond, trans;
        flow_detail::split_halves(v, cl.transform_upper, cond, trans);
        Vector s_raw = flow_detail::net_eval(cond, cl.w_scale_hidden, cl.b_scale_hidden, cl.w_scale_out,
                                             cl.b_scale_out);
        Vector t = flow_detail::net_eval(cond, cl.w_shift_hidden, cl.b_shift_hidden, cl.w_shift_out,
                                         cl.b_shift_out);
        for (std::size_t i = 0; i < trans.size(); ++i) {
            const double s = params.s_max * std::tanh(s_raw[i]);
            trans[i] = trans[i] * std::exp(s) + t[i];
            log_det += s;
        }
        v = flow_detail::join_halves(cond, trans, cl.transform_upper);
    }
    if (!all_finite(v)) throw std::runtime_error("flow_forward: non-finite output");
    return {std::move(v), log_det};
}

// Normalizing direction: data -> latent, layers inverted back to front.
// log_det is the sum of negated log-scales (exactly -log_det of the forward
// map evaluated at the returned latent point).
inline std::pair<Vector, double> flow_inverse(const Vector& u, const FlowParams& params,
                                              std::vector<flow_detail::CouplingCache>* caches = nullptr) {
    flow_detail::check_vector(u, params, "flow_inverse");
    Vector v = u;
    double log_det = 0.0;
    if (caches) caches->assign(params.layers.size(), {});
    for (std::size_t l = params.layers.size(); l-- > 0;) {
        const CouplingLayer& cl = params.layers[l];
        Vector cond, trans;
        flow_detail::split_halves(v, cl.transform_upper, cond, trans);
        Vector h_s, h_t;
        Vector s_raw = flow_detail::net_eval(cond, cl.w_scale_hidden, cl.b_scale_hidden, cl.w_scale_out,
                                             cl.b_scale_out, &h_s);
        Vector t = flow_detail::net_eval(cond, cl.w_shift_hidden, cl.b_shift_hidden, cl.w_shift_out,
                                         cl.b_shift_out, &h_t);
        Vector s(s_raw.size(), 0.0);
        for (std::size_t i = 0; i < trans.size(); ++i) {
            s[i] = params.s_max * std::tanh(s_raw[i]);
            trans[i] = (trans[i] - t[i]) * std::exp(-s[i]);
            log_det -= s[i];
        }
        if (caches) {
            flow_detail::CouplingCache& cc = (*caches)[l];
            cc.cond = cond;
            cc.h_s = std::move(h_s);
            cc.h_t = std::move(h_t);
            cc.s_raw = std::move(s_raw);
            cc.s = s;
            cc.t = std::move(t);
            cc.out_trans = trans;
        }
        v = flow_detail::join_halves(cond, trans, cl.transform_upper);
    }
    if (!all_finite(v)) throw std::runtime_error("flow_inverse: non-finite output");
    return {std::move(v), log_det};
}

inline Vector standardize(const Vector& u, const FlowParams& params) { return flow_inverse(u, params).first; }

// Exact negative log-likelihood under the flow with a standard normal base:
// mean over the batch of 1/2 ||z||^2 + (d/2) ln 2pi - log_det_inverse.
inline double flow_nll(const std::vector<Vector>& batch, const FlowParams& params) {
    if (batch.empty()) throw std::invalid_argument("flow_nll: empty batch");
    const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
    double total = 0.0;
    for (const Vector& u : batch) {
        auto [z, log_det] = flow_inverse(u, params);
        double sq = 0.0;
        for (double v : z) sq += v * v;
        total += 0.5 * sq + static_cast<double>(params.dim) * half_log_2pi - log_det;
    }
    return total / static_cast<double>(batch.size());
}

// Gradient of the mean NLL with respect to every flow parameter, by exact
// reverse-mode differentiation of the inverse pass. Optionally reports the
// NLL value of the same batch.
inline FlowParams flow_nll_backward(const std::vector<Vector>& batch, const FlowParams& params,
                                    double* nll_out = nullptr) {
    if (batch.empty()) throw std::invalid_argument("flow_nll_backward: empty batch");
    FlowParams grads = zero_flow_like(params);
    const std::size_t half = static_cast<std::size_t>(params.dim) / 2;
    const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
    double total_nll = 0.0;

    for (const Vector& u : batch) {
        std::vector<flow_detail::CouplingCache> caches;
        auto [z, log_det] = flow_inverse(u, params, &caches);
        double sq = 0.0;
        for (double v : z) sq += v * v;
        total_nll += 0.5 * sq + static_cast<double>(params.dim) * half_log_2pi - log_det;

        // d(1/2 ||z||^2)/dz = z seeds the chain; the -log_det term adds +1 to
        // each ds below. Backward visits layers in reverse execution order of
        // the inverse pass, i.e. front to back.
        Vector dv = z;
        for (std::size_t l = 0; l < params.layers.size(); ++l) {
            const CouplingLayer& cl = params.layers[l];
            CouplingLayer& gl = grads.layers[l];
            const flow_detail::CouplingCache& cc = caches[l];

            Vector d_cond(half, 0.0), d_trans(half, 0.0);
            flow_detail::split_halves(dv, cl.transform_upper, d_cond, d_trans);

            Vector dy_trans(half, 0.0), ds(half, 0.0), dt(half, 0.0);
            for (std::size_t i = 0; i < half; ++i) {
                dy_trans[i] = d_trans[i] * std::exp(-cc.s[i]);
                ds[i] = -d_trans[i] * cc.out_trans[i] + 1.0;
                dt[i] = -dy_trans[i];
            }

            // scale net: s = s_max * tanh(s_raw)
            Vector d_sraw(half, 0.0);
            for (std::size_t i = 0; i < half; ++i) {
                const double th = std::tanh(cc.s_raw[i]);
                d_sraw[i] = ds[i] * params.s_max * (1.0 - th * th);
            }
            Vector dh_s(cc.h_s.size(), 0.0);
            for (std::size_t i = 0; i < cc.h_s.size(); ++i) {
                double* gw = gl.w_scale_out.row(i);
                const double* w = cl.w_scale_out.row(i);
                double acc = 0.0;
                for (std::size_t j = 0; j < half; ++j) {
                    gw[j] += cc.h_s[i] * d_sraw[j];
                    acc += w[j] * d_sraw[j];
                }
                dh_s[i] = acc * (1.0 - cc.h_s[i] * cc.h_s[i]);
            }
            for (std::size_t j = 0; j < half; ++j) gl.b_scale_out[j] += d_sraw[j];
            for (std::size_t a = 0; a < half; ++a) {
                double* gw = gl.w_scale_hidden.row(a);
                const double* w = cl.w_scale_hidden.row(a);
                double acc = 0.0;
                for (std::size_t i = 0; i < dh_s.size(); ++i) {
                    gw[i] += cc.cond[a] * dh_s[i];
                    acc += w[i] * dh_s[i];
                }
                d_cond[a] += acc;
            }
            for (std::size_t i = 0; i < dh_s.size(); ++i) gl.b_scale_hidden[i] += dh_s[i];

            // shift net: t = shift(cond)
            Vector dh_t(cc.h_t.size(), 0.0);
            for (std::size_t i = 0; i < cc.h_t.size(); ++i) {
                double* gw = gl.w_shift_out.row(i);
                const double* w = cl.w_shift_out.row(i);
                double acc = 0.0;
                for (std::size_t j = 0; j < half; ++j) {
                    gw[j] += cc.h_t[i] * dt[j];
                    acc += w[j] * dt[j];
                }
                dh_t[i] = acc * (1.0 - cc.h_t[i] * cc.h_t[i]);
            }
            for (std::size_t j = 0; j < half; ++j) gl.b_shift_out[j] += dt[j];
            for (std::size_t a = 0; a < half; ++a) {
                double* gw = gl.w_shift_hidden.row(a);
                const double* w = cl.w_shift_hidden.row(a);
                double acc = 0.0;
                for (std::size_t i = 0; i < dh_t.size(); ++i) {
                    gw[i] += cc.cond[a] * dh_t[i];
                    acc += w[i] * dh_t[i];
                }
                d_cond[a] += acc;
            }
            for (std::size_t i = 0; i < dh_t.size(); ++i) gl.b_shift_hidden[i] += dh_t[i];

            dv = flow_detail::join_halves(d_cond, dy_trans, cl.transform_upper);
        }
    }

    const double inv_n = 1.0 / static_cast<double>(batch.size());
    for (CouplingLayer& gl : grads.layers) {
        for (double& v : gl.w_scale_hidden.data) v *= inv_n;
        for (double& v : gl.b_scale_hidden) v *= inv_n;
        for (double& v : gl.w_scale_out.data) v *= inv_n;
        for (double& v : gl.b_scale_out) v *= inv_n;
        for (double& v : gl.w_shift_hidden.data) v *= inv_n;
        for (double& v : gl.b_shift_hidden) v *= inv_n;
        for (double& v : gl.w_shift_out.data) v *= inv_n;
        for (double& v : gl.b_shift_out) v *= inv_n;
    }
    if (nll_out) *nll_out = total_nll * inv_n;
    return grads;
}

}  // namespace sbfd
