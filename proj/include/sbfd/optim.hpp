#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "sbfd/encoder.hpp"
#include "sbfd/flow.hpp"
#include "sbfd/matrix.hpp"
#include "sbfd/rng.hpp"

namespace sbfd {

// A flat view over one parameter tensor; param and grad structures expose
// their tensors in the same fixed order so the optimizer can walk them in
// lockstep.
struct TensorRef {
    double* data = nullptr;
    std::size_t size = 0;
};

inline std::vector<TensorRef> tensor_refs(EncoderParams& p) {
    std::vector<TensorRef> refs;
    refs.push_back({p.tok_emb.data.data(), p.tok_emb.data.size()});
    refs.push_back({p.pos_emb.data.data(), p.pos_emb.data.size()});
    refs.push_back({p.seg_emb.data.data(), p.seg_emb.data.size()});
    for (LayerParams& lp : p.layers) {
        refs.push_back({lp.wq.data.data(), lp.wq.data.size()});
        refs.push_back({lp.wk.data.data(), lp.wk.data.size()});
        refs.push_back({lp.wv.data.data(), lp.wv.data.size()});
        refs.push_back({lp.wo.data.data(), lp.wo.data.size()});
        refs.push_back({lp.w1.data.data(), lp.w1.data.size()});
        refs.push_back({lp.b1.data(), lp.b1.size()});
        refs.push_back({lp.w2.data.data(), lp.w2.data.size()});
        refs.push_back({lp.b2.data(), lp.b2.size()});
        refs.push_back({lp.ln1_gain.data(), lp.ln1_gain.size()});
        refs.push_back({lp.ln1_bias.data(), lp.ln1_bias.size()});
        refs.push_back({lp.ln2_gain.data(), lp.ln2_gain.size()});
        refs.push_back({lp.ln2_bias.data(), lp.ln2_bias.size()});
    }
    return refs;
}

inline std::vector<TensorRef> tensor_refs(FlowParams& p) {
    std::vector<TensorRef> refs;
    for (CouplingLayer& cl : p.layers) {
        refs.push_back({cl.w_scale_hidden.data.data(), cl.w_scale_hidden.data.size()});
        refs.push_back({cl.b_scale_hidden.data(), cl.b_scale_hidden.size()});
        refs.push_back({cl.w_scale_out.data.data(), cl.w_scale_out.data.size()});
        refs.push_back({cl.b_scale_out.data(), cl.b_scale_out.size()});
        refs.push_back({cl.w_shift_hidden.data.data(), cl.w_shift_hidden.data.size()});
        refs.push_back({cl.b_shift_hidden.data(), cl.b_shift_hidden.size()});
        refs.push_back({cl.w_shift_out.data.data(), cl.w_shift_out.data.size()});
        refs.push_back({cl.b_shift_out.data(), cl.b_shift_out.size()});
    }
    return refs;
}

struct AdamConfig {
    double learning_rate = 1e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    void validate() const {
        if (!(learning_rate > 0.0)) throw std::invalid_argument("AdamConfig: learning rate must be positive");
        if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
            throw std::invalid_argument("AdamConfig: betas must lie in [0, 1)");
        if (!(eps > 0.0)) throw std::invalid_argument("AdamConfig: eps must be positive");
    }
};

// First/second moment accumulators, one slot per parameter tensor, plus the
// shared step counter used for bias correction.
struct AdamState {
    std::vector<Vector> m, v;
    long t = 0;

    static AdamState init(const std::vector<TensorRef>& params) {
        AdamState s;
        s.m.reserve(params.size());
        s.v.reserve(params.size());
        for (const TensorRef& r : params) {
            s.m.emplace_back(r.size, 0.0);
            s.v.emplace_back(r.size, 0.0);
        }
        return s;
    }
};

// One Adam update: m/v moment update, bias correction, then
// theta -= lr * m_hat / (sqrt(v_hat) + eps).
inline void adam_step(std::vector<TensorRef>& params, const std::vector<TensorRef>& grads, AdamState& state,
                      const AdamConfig& cfg) {
    cfg.validate();
    if (params.size() != grads.size() || params.size() != state.m.size())
        throw std::invalid_argument("adam_step: tensor list mismatch");
    state.t += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i].size != grads[i].size || params[i].size != state.m[i].size())
            throw std::invalid_argument("adam_step: tensor size mismatch");
        double* p = params[i].data;
        const double* g = grads[i].data;
        Vector& m = state.m[i];
        Vector& v = state.v[i];
        for (std::size_t j = 0; j < params[i].size; ++j) {
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
            const double m_hat = m[j] / bc1;
            const double v_hat = v[j] / bc2;
            p[j] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.eps);
        }
    }
}

inline double global_norm(const std::vector<TensorRef>& grads) {
    double sq = 0.0;
    for (const TensorRef& r : grads)
        for (std::size_t j = 0; j < r.size; ++j) sq += r.data[j] * r.data[j];
    return std::sqrt(sq);
}

inline void scale_all(std::vector<TensorRef>& grads, double factor) {
    for (TensorRef& r : grads)
        for (std::size_t j = 0; j < r.size; ++j) r.data[j] *= factor;
}

// Rescales gradients so their global L2 norm is at most max_norm; returns
// true when clipping fired.
inline bool clip_global_norm(std::vector<TensorRef>& grads, double max_norm) {
    const double n = global_norm(grads);
    if (n > max_norm && n > 0.0) {
        scale_all(grads, max_norm / n);
        return true;
    }
    return false;
}

// Fits the flow to a fixed set of vectors by exact maximum likelihood:
// minibatch Adam on the negative log-likelihood. The vectors are treated as
// frozen data. history (when given) receives the full-data NLL before
// training followed by one entry per epoch.
inline FlowParams train_flow(const std::vector<Vector>& embeddings, const FlowConfig& cfg,
                             std::vector<double>* history = nullptr) {
    cfg.validate();
    if (embeddings.empty()) throw std::invalid_argument("train_flow: no embeddings");
    const int dim = static_cast<int>(embeddings.front().size());
    for (const Vector& e : embeddings)
        if (static_cast<int>(e.size()) != dim) throw std::invalid_argument("train_flow: inconsistent dimensions");

    FlowConfig init_cfg = cfg;
    init_cfg.seed = Rng::derive(cfg.seed, 0);
    FlowParams params = init_flow(dim, init_cfg);
    if (history) {
        history->clear();
        history->push_back(flow_nll(embeddings, params));
    }
    if (cfg.epochs == 0) return params;

    AdamConfig adam;
    adam.learning_rate = cfg.learning_rate;
    auto param_refs = tensor_refs(params);
    AdamState state = AdamState::init(param_refs);
    Rng shuffle_rng(Rng::derive(cfg.seed, 1));

    std::vector<std::size_t> order(embeddings.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            std::vector<Vector> batch;
            batch.reserve(end - start);
            for (std::size_t i = start; i < end; ++i) batch.push_back(embeddings[order[i]]);
            double batch_nll = 0.0;
            FlowParams grads = flow_nll_backward(batch, params, &batch_nll);
            if (!std::isfinite(batch_nll))
                throw std::runtime_error("train_flow: non-finite NLL at epoch " + std::to_string(epoch) +
                                         ", batch " + std::to_string(start / static_cast<std::size_t>(cfg.batch_size)));
            auto grad_refs = tensor_refs(grads);
            clip_global_norm(grad_refs, 5.0);
            adam_step(param_refs, grad_refs, state, adam);
        }
        if (history) history->push_back(flow_nll(embeddings, params));
    }
    return params;
}

}  // namespace sbfd
