#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "sbfd/corpus.hpp"
#include "sbfd/encoder.hpp"
#include "sbfd/features.hpp"
#include "sbfd/flow.hpp"
#include "sbfd/optim.hpp"
#include "sbfd/pooling.hpp"

namespace sbfd {

struct TrainConfig {
    int batch_size = 32;
    double learning_rate = 1e-5;
    int epochs = 30;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::uint64_t seed = 1;
    int max_len = 32;
    bool use_domain_features = true;

    void validate() const {
        if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be at least 1");
        if (!(learning_rate > 0.0)) throw std::invalid_argument("TrainConfig: learning rate must be positive");
        if (epochs < 0) throw std::invalid_argument("TrainConfig: epochs must be non-negative");
        if (max_len < 4) throw std::invalid_argument("TrainConfig: max_len must be at least 4");
    }

    AdamConfig adam() const {
        AdamConfig a;
        a.learning_rate = learning_rate;
        a.beta1 = beta1;
        a.beta2 = beta2;
        a.eps = eps;
        return a;
    }
};

// Everything needed to turn raw pair text into model input ids.
struct FeaturePipeline {
    Vocabulary vocab;
    TfIdfModel tfidf;
    Gazetteer gazetteer;
    int keyword_k = 3;
};

// Twin-tower model. Both towers are the single `params` object — there is no
// second copy anywhere, so weight sharing holds by construction.
struct SiameseModel {
    EncoderConfig enc_cfg;
    EncoderParams params;
    std::optional<FlowParams> flow;
    FeaturePipeline features;
};

// Vocabulary and TF-IDF statistics come from the training texts only; domain
// strings and gazetteer tags are added so feature tokens are never
// out-of-vocabulary for in-domain data.
inline FeaturePipeline build_feature_pipeline(const std::vector<LabeledPair>& train_pairs, int keyword_k,
                                              const Gazetteer& gazetteer) {
    FeaturePipeline fp;
    fp.keyword_k = keyword_k;
    fp.gazetteer = gazetteer;
    std::vector<std::vector<std::string>> text_docs;
    std::vector<std::vector<std::string>> vocab_docs;
    for (const LabeledPair& p : train_pairs) {
        text_docs.push_back(tokenize(p.text_a));
        text_docs.push_back(tokenize(p.text_b));
        vocab_docs.push_back(text_docs[text_docs.size() - 2]);
        vocab_docs.push_back(text_docs.back());
        if (p.domain_a) vocab_docs.push_back(tokenize(*p.domain_a));
        if (p.domain_b) vocab_docs.push_back(tokenize(*p.domain_b));
    }
    for (const auto& [term, tag] : gazetteer) vocab_docs.push_back({tag});
    fp.vocab = build_vocabulary(vocab_docs);
    if (!text_docs.empty()) fp.tfidf = fit_tfidf(text_docs);
    return fp;
}

// One side of a pair -> fixed-length fused sequence. Domain information is
// consulted only when use_domain_features is set; without it the feature side
// falls back to the text's own keywords.
inline FusedSequence make_sequence(const FeaturePipeline& fp, const std::string& text,
                                   const std::optional<std::string>& domain, bool use_domain_features,
                                   int max_len) {
    const std::vector<std::string> text_tokens = tokenize(text);
    const std::optional<std::string> dom = use_domain_features ? domain : std::nullopt;
    const std::vector<std::string> feats =
        build_feature_tokens(text_tokens, dom, fp.tfidf, fp.keyword_k, fp.gazetteer);
    return fuse(text_tokens, feats, fp.vocab, max_len);
}

inline double cosine(const Vector& u, const Vector& v) {
    if (u.size() != v.size()) throw std::invalid_argument("cosine: dimension mismatch");
    double dot = 0.0, nu = 0.0, nv = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        dot += u[i] * v[i];
        nu += u[i] * u[i];
        nv += v[i] * v[i];
    }
    if (nu == 0.0 || nv == 0.0) throw std::invalid_argument("cosine: zero vector");
    const double c = dot / (std::sqrt(nu) * std::sqrt(nv));
    return std::clamp(c, -1.0, 1.0);
}

inline double pair_loss(double pred_cosine, double gold_normalized) {
    const double d = pred_cosine - gold_normalized;
    return d * d;
}

// Both towers run the same parameter object; when a flow is attached, both
// pooled vectors are standardized through it.
inline std::pair<Vector, Vector> forward_pair(const SiameseModel& model, const FusedSequence& a,
                                              const FusedSequence& b) {
    const HiddenStates ha = encode(a, model.params, model.enc_cfg);
    const HiddenStates hb = encode(b, model.params, model.enc_cfg);
    Vector u = mean_pool(ha.states, ha.mask);
    Vector v = mean_pool(hb.states, hb.mask);
    if (model.flow) {
        u = standardize(u, *model.flow);
        v = standardize(v, *model.flow);
    }
    return {std::move(u), std::move(v)};
}

// Loss and exact parameter gradients for one pair, differentiating through
// cosine, mean pooling and both encoder towers (which share one gradient
// accumulator, mirroring the shared weights). The flow never participates
// here: it is fitted afterwards on frozen embeddings.
inline double pair_loss_backward(const SiameseModel& model, const FusedSequence& a, const FusedSequence& b,
                                 double gold_normalized, EncoderParams& grads) {
    EncoderCache cache_a, cache_b;
    const HiddenStates ha = encode(a, model.params, model.enc_cfg, &cache_a);
    const HiddenStates hb = encode(b, model.params, model.enc_cfg, &cache_b);
    const Vector u = mean_pool(ha.states, ha.mask);
    const Vector v = mean_pool(hb.states, hb.mask);

    double dot = 0.0, nu_sq = 0.0, nv_sq = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        dot += u[i] * v[i];
        nu_sq += u[i] * u[i];
        nv_sq += v[i] * v[i];
    }
    if (nu_sq == 0.0 || nv_sq == 0.0) throw std::invalid_argument("pair_loss_backward: zero vector");
    const double nu = std::sqrt(nu_sq);
    const double nv = std::sqrt(nv_sq);
    const double pred = dot / (nu * nv);
    const double loss = pair_loss(pred, gold_normalized);

    const double dpred = 2.0 * (pred - gold_normalized);
    Vector du(u.size(), 0.0), dv(v.size(), 0.0);
    for (std::size_t i = 0; i < u.size(); ++i) {
        du[i] = dpred * (v[i] / (nu * nv) - pred * u[i] / nu_sq);
        dv[i] = dpred * (u[i] / (nu * nv) - pred * v[i] / nv_sq);
    }

    const Matrix dsa = mean_pool_backward(du, ha.states.rows, ha.mask);
    const Matrix dsb = mean_pool_backward(dv, hb.states.rows, hb.mask);
    encoder_backward(a, model.params, model.enc_cfg, cache_a, dsa, grads);
    encoder_backward(b, model.params, model.enc_cfg, cache_b, dsb, grads);
    return loss;
}

// Fresh model over the training pairs: feature pipeline fitted on them, an
// identically seeded encoder, no flow yet. Sub-seeds are derived from the
// root so init, shuffling and the flow can vary independently.
inline SiameseModel init_siamese(const std::vector<LabeledPair>& train_pairs, const EncoderConfig& enc_template,
                                 const TrainConfig& cfg, int keyword_k, const Gazetteer& gazetteer) {
    cfg.validate();
    SiameseModel model;
    model.features = build_feature_pipeline(train_pairs, keyword_k, gazetteer);
    model.enc_cfg = enc_template;
    model.enc_cfg.vocab_size = model.features.vocab.size();
    model.enc_cfg.max_len = cfg.max_len;
    model.enc_cfg.seed = Rng::derive(cfg.seed, 0);
    model.enc_cfg.validate();
    model.params = init_params(model.enc_cfg);
    return model;
}

struct TrainResult {
    SiameseModel model;
    std::vector<double> loss_history;    // mean pair loss per epoch
    std::vector<int> clipped_batches;    // per epoch: batches whose gradient was clipped
    std::vector<double> flow_history;    // flow NLL trajectory (initial + per epoch)
};

// Method: minibatch Adam over shuffled training pairs with the squared error
// between cosine similarity and the normalized gold score; then, with the
// encoder frozen, a normalizing flow is fitted by maximum likelihood to the
// pooled training embeddings and attached to the model.
inline TrainResult train(SiameseModel model, const Dataset& dataset, const FoldPlan& plan, int fold_index,
                         const TrainConfig& cfg, const FlowConfig& flow_template = FlowConfig{}) {
    cfg.validate();
    if (fold_index < 0 || fold_index >= plan.k) throw std::invalid_argument("train: fold index out of range");
    if (plan.assignments.size() != dataset.pairs.size())
        throw std::invalid_argument("train: fold plan does not match dataset");

    std::vector<const LabeledPair*> train_pairs;
    for (std::size_t i = 0; i < dataset.pairs.size(); ++i)
        if (plan.assignments[i] != fold_index) train_pairs.push_back(&dataset.pairs[i]);
    if (train_pairs.empty()) throw std::invalid_argument("train: training partition is empty");

    TrainResult result{std::move(model), {}, {}, {}};
    if (cfg.epochs == 0) return result;

    // Precompute fixed model inputs and normalized targets.
    std::vector<FusedSequence> seq_a, seq_b;
    std::vector<double> gold01;
    seq_a.reserve(train_pairs.size());
    seq_b.reserve(train_pairs.size());
    for (const LabeledPair* p : train_pairs) {
        seq_a.push_back(make_sequence(result.model.features, p->text_a, p->domain_a, cfg.use_domain_features,
                                      cfg.max_len));
        seq_b.push_back(make_sequence(result.model.features, p->text_b, p->domain_b, cfg.use_domain_features,
                                      cfg.max_len));
        gold01.push_back(normalize_gold(p->gold, dataset.scale_min, dataset.scale_max));
    }

    auto param_refs = tensor_refs(result.model.params);
    AdamState state = AdamState::init(param_refs);
    const AdamConfig adam = cfg.adam();
    Rng shuffle_rng(Rng::derive(cfg.seed, 1));
    std::vector<std::size_t> order(train_pairs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double epoch_loss = 0.0;
        int clipped = 0;
        for (std::size_t start = 0, batch_idx = 0; start < order.size();
             start += static_cast<std::size_t>(cfg.batch_size), ++batch_idx) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            EncoderParams grads = zero_params_like(result.model.params);
            double batch_loss = 0.0;
            for (std::size_t i = start; i < end; ++i) {
                const std::size_t j = order[i];
                batch_loss += pair_loss_backward(result.model, seq_a[j], seq_b[j], gold01[j], grads);
            }
            const double n = static_cast<double>(end - start);
            batch_loss /= n;
            if (!std::isfinite(batch_loss))
                throw std::runtime_error("train: non-finite loss at epoch " + std::to_string(epoch) +
                                         ", batch " + std::to_string(batch_idx));
            auto grad_refs = tensor_refs(grads);
            scale_all(grad_refs, 1.0 / n);
            if (clip_global_norm(grad_refs, 5.0)) ++clipped;
            adam_step(param_refs, grad_refs, state, adam);
            epoch_loss += batch_loss * n;
        }
        result.loss_history.push_back(epoch_loss / static_cast<double>(order.size()));
        result.clipped_batches.push_back(clipped);
    }

    // Post-hoc standardization stage: pooled embeddings of the (frozen)
    // trained encoder over all training sequences.
    std::vector<Vector> embeddings;
    embeddings.reserve(2 * train_pairs.size());
    for (std::size_t i = 0; i < train_pairs.size(); ++i) {
        const HiddenStates ha = encode(seq_a[i], result.model.params, result.model.enc_cfg);
        const HiddenStates hb = encode(seq_b[i], result.model.params, result.model.enc_cfg);
        embeddings.push_back(mean_pool(ha.states, ha.mask));
        embeddings.push_back(mean_pool(hb.states, hb.mask));
    }
    FlowConfig flow_cfg = flow_template;
    flow_cfg.seed = Rng::derive(cfg.seed, 2);
    result.model.flow = train_flow(embeddings, flow_cfg, &result.flow_history);
    return result;
}

// Cosine similarity of the standardized pooled embeddings, in input order.
inline std::vector<double> score_pairs(const SiameseModel& model, const std::vector<LabeledPair>& pairs,
                                       const TrainConfig& cfg) {
    std::vector<double> scores;
    scores.reserve(pairs.size());
    for (const LabeledPair& p : pairs) {
        const FusedSequence a =
            make_sequence(model.features, p.text_a, p.domain_a, cfg.use_domain_features, model.enc_cfg.max_len);
        const FusedSequence b =
            make_sequence(model.features, p.text_b, p.domain_b, cfg.use_domain_features, model.enc_cfg.max_len);
        const auto [u, v] = forward_pair(model, a, b);
        scores.push_back(cosine(u, v));
    }
    return scores;
}

}  // namespace sbfd
