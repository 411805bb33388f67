#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "sbfd/features.hpp"
#include "sbfd/matrix.hpp"
#include "sbfd/rng.hpp"

namespace sbfd {

struct EncoderConfig {
    int vocab_size = 0;
    int max_len = 32;
    int model_dim = 32;
    int n_heads = 4;
    int ffn_dim = 64;
    int n_layers = 2;
    std::uint64_t seed = 1;

    int head_dim() const { return model_dim / n_heads; }

    void validate() const {
        if (vocab_size <= 0 || max_len <= 0 || model_dim <= 0 || n_heads <= 0 || ffn_dim <= 0 || n_layers <= 0)
            throw std::invalid_argument("EncoderConfig: all dimensions must be positive");
        if (model_dim % n_heads != 0)
            throw std::invalid_argument("EncoderConfig: model_dim must be divisible by n_heads");
        // The coupling split downstream needs an even embedding width.
        if (model_dim % 2 != 0) throw std::invalid_argument("EncoderConfig: model_dim must be even");
    }
};

// Attention projections hold the per-head matrices packed as column blocks:
// head i of wq is columns [i*head_dim, (i+1)*head_dim).
struct LayerParams {
    Matrix wq, wk, wv, wo;            // model_dim x model_dim
    Matrix w1, w2;                    // model_dim x ffn_dim, ffn_dim x model_dim
    Vector b1, b2;                    // ffn_dim, model_dim
    Vector ln1_gain, ln1_bias;        // model_dim
    Vector ln2_gain, ln2_bias;
};

struct EncoderParams {
    Matrix tok_emb;  // vocab_size x model_dim
    Matrix pos_emb;  // max_len x model_dim
    Matrix seg_emb;  // 2 x model_dim
    std::vector<LayerParams> layers;
};

struct HiddenStates {
    Matrix states;  // max_len x model_dim
    std::vector<int> mask;
};

namespace nn {

constexpr double kLayerNormEps = 1e-12;

inline double gelu(double x) {
    constexpr double c = 0.7978845608028654;  // sqrt(2/pi)
    constexpr double a = 0.044715;
    return 0.5 * x * (1.0 + std::tanh(c * (x + a * x * x * x)));
}

inline double gelu_grad(double x) {
    constexpr double c = 0.7978845608028654;
    constexpr double a = 0.044715;
    const double t = std::tanh(c * (x + a * x * x * x));
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * c * (1.0 + 3.0 * a * x * x);
}

struct LayerNormCache {
    Matrix xhat;
    Vector inv_std;
};

inline Matrix layer_norm(const Matrix& x, const Vector& gain, const Vector& bias, LayerNormCache* cache) {
    const std::size_t n = x.cols;
    Matrix y(x.rows, n);
    if (cache) {
        cache->xhat = Matrix(x.rows, n);
        cache->inv_std.assign(x.rows, 0.0);
    }
    for (std::size_t i = 0; i < x.rows; ++i) {
        const double* xi = x.row(i);
        double mean = 0.0;
        for (std::size_t j = 0; j < n; ++j) mean += xi[j];
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double d = xi[j] - mean;
            var += d * d;
        }
        var /= static_cast<double>(n);
        const double inv_std = 1.0 / std::sqrt(var + kLayerNormEps);
        double* yi = y.row(i);
        for (std::size_t j = 0; j < n; ++j) {
            const double xh = (xi[j] - mean) * inv_std;
            if (cache) cache->xhat(i, j) = xh;
            yi[j] = gain[j] * xh + bias[j];
        }
        if (cache) cache->inv_std[i] = inv_std;
    }
    return y;
}

// dx = inv_std * (dxhat - mean(dxhat) - xhat * mean(dxhat .* xhat)), exact for
// the normalization (x - mu) / sqrt(var + eps).
inline Matrix layer_norm_backward(const Matrix& dy, const Vector& gain, const LayerNormCache& cache,
                                  Vector& dgain, Vector& dbias) {
    const std::size_t n = dy.cols;
    Matrix dx(dy.rows, n);
    for (std::size_t i = 0; i < dy.rows; ++i) {
        const double* dyi = dy.row(i);
        const double* xh = cache.xhat.row(i);
        double sum_dxh = 0.0, sum_dxh_xh = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double dxh = dyi[j] * gain[j];
            sum_dxh += dxh;
            sum_dxh_xh += dxh * xh[j];
            dgain[j] += dyi[j] * xh[j];
            dbias[j] += dyi[j];
        }
        const double mean_dxh = sum_dxh / static_cast<double>(n);
        const double mean_dxh_xh = sum_dxh_xh / static_cast<double>(n);
        double* dxi = dx.row(i);
        for (std::size_t j = 0; j < n; ++j)
            dxi[j] = cache.inv_std[i] * (dyi[j] * gain[j] - mean_dxh - xh[j] * mean_dxh_xh);
    }
    return dx;
}

}  // namespace nn

// softmax(Q K^T / sqrt(d_k)) V over the unmasked key positions only; masked
// keys are excluded from the softmax entirely, so they cannot influence any
// output row. Rows of the result are convex combinations of unmasked V rows.
inline Matrix attention(const Matrix& q, const Matrix& k, const Matrix& v, const std::vector<int>& key_mask,
                        Matrix* probs_out = nullptr) {
    if (q.cols != k.cols) throw std::invalid_argument("attention: Q and K widths differ");
    if (k.rows != v.rows) throw std::invalid_argument("attention: K and V row counts differ");
    if (key_mask.size() != k.rows) throw std::invalid_argument("attention: mask length mismatch");
    bool any = false;
    for (int m : key_mask) any = any || m != 0;
    if (!any) throw std::invalid_argument("attention: mask has no unmasked position");

    const double scale = 1.0 / std::sqrt(static_cast<double>(q.cols));
    Matrix probs(q.rows, k.rows);
    for (std::size_t i = 0; i < q.rows; ++i) {
        const double* qi = q.row(i);
        double max_logit = -std::numeric_limits<double>::infinity();
        std::vector<double> logits(k.rows, 0.0);
        for (std::size_t j = 0; j < k.rows; ++j) {
            if (!key_mask[j]) continue;
            const double* kj = k.row(j);
            double dot = 0.0;
            for (std::size_t c = 0; c < q.cols; ++c) dot += qi[c] * kj[c];
            logits[j] = dot * scale;
            max_logit = std::max(max_logit, logits[j]);
        }
        double denom = 0.0;
        for (std::size_t j = 0; j < k.rows; ++j) {
            if (!key_mask[j]) continue;
            logits[j] = std::exp(logits[j] - max_logit);
            denom += logits[j];
        }
        for (std::size_t j = 0; j < k.rows; ++j) probs(i, j) = key_mask[j] ? logits[j] / denom : 0.0;
    }
    Matrix out = matmul(probs, v);
    if (probs_out) *probs_out = std::move(probs);
    return out;
}

struct MultiHeadCache {
    Matrix q, k, v;             // full projections, max_len x model_dim
    std::vector<Matrix> probs;  // per-head softmax weights
    Matrix concat;              // concatenated head outputs
};

namespace detail {

inline Matrix head_block(const Matrix& m, int head, int head_dim) {
    Matrix b(m.rows, static_cast<std::size_t>(head_dim));
    const std::size_t off = static_cast<std::size_t>(head) * static_cast<std::size_t>(head_dim);
    for (std::size_t i = 0; i < m.rows; ++i)
        for (std::size_t j = 0; j < b.cols; ++j) b(i, j) = m(i, off + j);
    return b;
}

inline void add_head_block(Matrix& dst, const Matrix& block, int head, int head_dim) {
    const std::size_t off = static_cast<std::size_t>(head) * static_cast<std::size_t>(head_dim);
    for (std::size_t i = 0; i < block.rows; ++i)
        for (std::size_t j = 0; j < block.cols; ++j) dst(i, off + j) += block(i, j);
}

}  // namespace detail

// Per-head projected self-attention, heads concatenated and projected by wo.
inline Matrix multi_head(const Matrix& x, const LayerParams& lp, int n_heads, const std::vector<int>& mask,
                         MultiHeadCache* cache = nullptr) {
    const int head_dim = static_cast<int>(x.cols) / n_heads;
    Matrix q = matmul(x, lp.wq);
    Matrix k = matmul(x, lp.wk);
    Matrix v = matmul(x, lp.wv);
    Matrix concat(x.rows, x.cols);
    std::vector<Matrix> probs(static_cast<std::size_t>(n_heads));
    for (int h = 0; h < n_heads; ++h) {
        const Matrix qh = detail::head_block(q, h, head_dim);
        const Matrix kh = detail::head_block(k, h, head_dim);
        const Matrix vh = detail::head_block(v, h, head_dim);
        const Matrix oh = attention(qh, kh, vh, mask, &probs[static_cast<std::size_t>(h)]);
        detail::add_head_block(concat, oh, h, head_dim);
    }
    Matrix out = matmul(concat, lp.wo);
    if (cache) {
        cache->q = std::move(q);
        cache->k = std::move(k);
        cache->v = std::move(v);
        cache->probs = std::move(probs);
        cache->concat = std::move(concat);
    }
    return out;
}

struct LayerCache {
    Matrix x_in;
    MultiHeadCache mha;
    nn::LayerNormCache ln1, ln2;
    Matrix h1;      // output of first layer norm
    Matrix f1_pre;  // FFN pre-activation
    Matrix f1_act;  // FFN post-GELU
};

struct EncoderCache {
    std::vector<LayerCache> layers;
};

inline EncoderParams init_params(const EncoderConfig& cfg) {
    cfg.validate();
    Rng rng(cfg.seed);
    const double bound = 1.0 / std::sqrt(static_cast<double>(cfg.model_dim));
    auto fill = [&rng, bound](Matrix& m, std::size_t rows, std::size_t cols) {
        m = Matrix(rows, cols);
        for (double& v : m.data) v = rng.uniform(-bound, bound);
    };
    EncoderParams p;
    const auto d = static_cast<std::size_t>(cfg.model_dim);
    const auto f = static_cast<std::size_t>(cfg.ffn_dim);
    fill(p.tok_emb, static_cast<std::size_t>(cfg.vocab_size), d);
    fill(p.pos_emb, static_cast<std::size_t>(cfg.max_len), d);
    fill(p.seg_emb, 2, d);
    p.layers.resize(static_cast<std::size_t>(cfg.n_layers));
    for (auto& lp : p.layers) {
        fill(lp.wq, d, d);
        fill(lp.wk, d, d);
        fill(lp.wv, d, d);
        fill(lp.wo, d, d);
        fill(lp.w1, d, f);
        fill(lp.w2, f, d);
        lp.b1.assign(f, 0.0);
        lp.b2.assign(d, 0.0);
        lp.ln1_gain.assign(d, 1.0);
        lp.ln1_bias.assign(d, 0.0);
        lp.ln2_gain.assign(d, 1.0);
        lp.ln2_bias.assign(d, 0.0);
    }
    return p;
}

inline EncoderParams zero_params_like(const EncoderParams& p) {
    EncoderParams z;
    z.tok_emb = zeros_like(p.tok_emb);
    z.pos_emb = zeros_like(p.pos_emb);
    z.seg_emb = zeros_like(p.seg_emb);
    z.layers.resize(p.layers.size());
    for (std::size_t i = 0; i < p.layers.size(); ++i) {
        const auto& lp = p.layers[i];
        auto& zl = z.layers[i];
        zl.wq = zeros_like(lp.wq);
        zl.wk = zeros_like(lp.wk);
        zl.wv = zeros_like(lp.wv);
        zl.wo = zeros_like(lp.wo);
        zl.w1 = zeros_like(lp.w1);
        zl.w2 = zeros_like(lp.w2);
        zl.b1.assign(lp.b1.size(), 0.0);
        zl.b2.assign(lp.b2.size(), 0.0);
        zl.ln1_gain.assign(lp.ln1_gain.size(), 0.0);
        zl.ln1_bias.assign(lp.ln1_bias.size(), 0.0);
        zl.ln2_gain.assign(lp.ln2_gain.size(), 0.0);
        zl.ln2_bias.assign(lp.ln2_bias.size(), 0.0);
    }
    return z;
}

// Token + positional + segment embeddings, then n_layers of post-norm blocks:
// x <- LN(x + MHA(x)); x <- LN(x + FFN(x)).
inline HiddenStates encode(const FusedSequence& seq, const EncoderParams& params, const EncoderConfig& cfg,
                           EncoderCache* cache = nullptr) {
    cfg.validate();
    if (seq.size() != static_cast<std::size_t>(cfg.max_len))
        throw std::invalid_argument("encode: sequence length differs from max_len");

    const auto d = static_cast<std::size_t>(cfg.model_dim);
    Matrix x(static_cast<std::size_t>(cfg.max_len), d);
    for (std::size_t t = 0; t < x.rows; ++t) {
        const int id = seq.ids[t];
        if (id < 0 || id >= cfg.vocab_size) throw std::invalid_argument("encode: token id out of range");
        const double* tok = params.tok_emb.row(static_cast<std::size_t>(id));
        const double* pos = params.pos_emb.row(t);
        const double* seg = params.seg_emb.row(static_cast<std::size_t>(seq.segments[t]));
        double* xt = x.row(t);
        for (std::size_t j = 0; j < d; ++j) xt[j] = tok[j] + pos[j] + seg[j];
    }
    if (!all_finite(x)) throw std::runtime_error("encode: non-finite value in embedding sum");

    if (cache) cache->layers.resize(params.layers.size());
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        const LayerParams& lp = params.layers[l];
        LayerCache* lc = cache ? &cache->layers[l] : nullptr;
        MultiHeadCache local_mha;
        Matrix attn = multi_head(x, lp, cfg.n_heads, seq.mask, lc ? &lc->mha : &local_mha);

        Matrix r1 = x;
        add_inplace(r1, attn);
        Matrix h1 = nn::layer_norm(r1, lp.ln1_gain, lp.ln1_bias, lc ? &lc->ln1 : nullptr);

        Matrix f1 = matmul(h1, lp.w1);
        for (std::size_t i = 0; i < f1.rows; ++i)
            for (std::size_t j = 0; j < f1.cols; ++j) f1(i, j) += lp.b1[j];
        Matrix g = f1;
        for (double& v : g.data) v = nn::gelu(v);
        Matrix f2 = matmul(g, lp.w2);
        for (std::size_t i = 0; i < f2.rows; ++i)
            for (std::size_t j = 0; j < f2.cols; ++j) f2(i, j) += lp.b2[j];

        Matrix r2 = h1;
        add_inplace(r2, f2);
        Matrix out = nn::layer_norm(r2, lp.ln2_gain, lp.ln2_bias, lc ? &lc->ln2 : nullptr);

        if (!all_finite(out))
            throw std::runtime_error("encode: non-finite value produced in layer " + std::to_string(l));
        if (lc) {
            lc->x_in = std::move(x);
            lc->h1 = std::move(h1);
            lc->f1_pre = std::move(f1);
            lc->f1_act = std::move(g);
        }
        x = std::move(out);
    }
    return HiddenStates{std::move(x), seq.mask};
}

// Exact reverse-mode gradients for every parameter tensor, accumulated into
// `grads` (which must be zero_params_like-shaped). Requires the cache of the
// matching forward call.
inline void encoder_backward(const FusedSequence& seq, const EncoderParams& params, const EncoderConfig& cfg,
                             const EncoderCache& cache, const Matrix& d_states, EncoderParams& grads) {
    if (d_states.rows != static_cast<std::size_t>(cfg.max_len) ||
        d_states.cols != static_cast<std::size_t>(cfg.model_dim))
        throw std::invalid_argument("encoder_backward: upstream gradient shape mismatch");
    if (cache.layers.size() != params.layers.size())
        throw std::invalid_argument("encoder_backward: cache does not match forward pass");

    const int head_dim = cfg.head_dim();
    const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
    Matrix dx = d_states;

    for (std::size_t li = params.layers.size(); li-- > 0;) {
        const LayerParams& lp = params.layers[li];
        const LayerCache& lc = cache.layers[li];
        LayerParams& gl = grads.layers[li];

        // second sublayer: LN2(h1 + FFN(h1))
        Matrix dr2 = nn::layer_norm_backward(dx, lp.ln2_gain, lc.ln2, gl.ln2_gain, gl.ln2_bias);
        Matrix dh1 = dr2;                       // residual branch
        const Matrix& df2 = dr2;                // FFN branch

        matmul_atb_add(lc.f1_act, df2, gl.w2);
        for (std::size_t i = 0; i < df2.rows; ++i)
            for (std::size_t j = 0; j < df2.cols; ++j) gl.b2[j] += df2(i, j);
        Matrix df1 = matmul_abt(df2, lp.w2);
        for (std::size_t i = 0; i < df1.data.size(); ++i) df1.data[i] *= nn::gelu_grad(lc.f1_pre.data[i]);
        matmul_atb_add(lc.h1, df1, gl.w1);
        for (std::size_t i = 0; i < df1.rows; ++i)
            for (std::size_t j = 0; j < df1.cols; ++j) gl.b1[j] += df1(i, j);
        add_inplace(dh1, matmul_abt(df1, lp.w1));

        // first sublayer: LN1(x + MHA(x))
        Matrix dr1 = nn::layer_norm_backward(dh1, lp.ln1_gain, lc.ln1, gl.ln1_gain, gl.ln1_bias);
        dx = dr1;  // residual branch
        const Matrix& dattn = dr1;

        matmul_atb_add(lc.mha.concat, dattn, gl.wo);
        Matrix dconcat = matmul_abt(dattn, lp.wo);

        Matrix dq_full(dx.rows, dx.cols);
        Matrix dk_full(dx.rows, dx.cols);
        Matrix dv_full(dx.rows, dx.cols);
        for (int h = 0; h < cfg.n_heads; ++h) {
            const Matrix doh = detail::head_block(dconcat, h, head_dim);
            const Matrix kh = detail::head_block(lc.mha.k, h, head_dim);
            const Matrix qh = detail::head_block(lc.mha.q, h, head_dim);
            const Matrix vh = detail::head_block(lc.mha.v, h, head_dim);
            const Matrix& probs = lc.mha.probs[static_cast<std::size_t>(h)];

            Matrix dprobs = matmul_abt(doh, vh);
            Matrix dvh(vh.rows, vh.cols);
            matmul_atb_add(probs, doh, dvh);

            // softmax rows: ds = p .* (dp - sum(dp .* p)); masked columns have
            // p = 0, so their ds vanishes as well. The 1/sqrt(d_k) logit scale
            // is folded in here.
            Matrix ds(dprobs.rows, dprobs.cols);
            for (std::size_t i = 0; i < dprobs.rows; ++i) {
                double dot = 0.0;
                for (std::size_t j = 0; j < dprobs.cols; ++j) dot += dprobs(i, j) * probs(i, j);
                for (std::size_t j = 0; j < dprobs.cols; ++j)
                    ds(i, j) = probs(i, j) * (dprobs(i, j) - dot) * scale;
            }
            Matrix dqh = matmul(ds, kh);
            Matrix dkh(kh.rows, kh.cols);
            matmul_atb_add(ds, qh, dkh);

            detail::add_head_block(dq_full, dqh, h, head_dim);
            detail::add_head_block(dk_full, dkh, h, head_dim);
            detail::add_head_block(dv_full, dvh, h, head_dim);
        }
        matmul_atb_add(lc.x_in, dq_full, gl.wq);
        matmul_atb_add(lc.x_in, dk_full, gl.wk);
        matmul_atb_add(lc.x_in, dv_full, gl.wv);
        add_inplace(dx, matmul_abt(dq_full, lp.wq));
        add_inplace(dx, matmul_abt(dk_full, lp.wk));
        add_inplace(dx, matmul_abt(dv_full, lp.wv));
    }

    // embedding scatter
    for (std::size_t t = 0; t < dx.rows; ++t) {
        const double* dxt = dx.row(t);
        double* tok = grads.tok_emb.row(static_cast<std::size_t>(seq.ids[t]));
        double* pos = grads.pos_emb.row(t);
        double* seg = grads.seg_emb.row(static_cast<std::size_t>(seq.segments[t]));
        for (std::size_t j = 0; j < dx.cols; ++j) {
            tok[j] += dxt[j];
            pos[j] += dxt[j];
            seg[j] += dxt[j];
        }
    }
}

}  // namespace sbfd
