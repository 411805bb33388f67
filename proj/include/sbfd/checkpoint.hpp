#pragma once

#include <bit>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "sbfd/siamese.hpp"
#include "sbfd/util.hpp"

namespace sbfd {

// Single-file model container: named blobs (manifest, fingerprint, vocabulary,
// TF-IDF table, gazetteer) followed by named f64 tensors for the encoder and,
// when present, the flow. Little-endian, fixed entry order, so identical
// models serialize byte-identically.
namespace ckpt {

constexpr std::string_view kMagic = "SBFDCKPT";
constexpr std::uint32_t kVersion = 1;
constexpr std::uint8_t kKindTensor = 0;
constexpr std::uint8_t kKindBlob = 1;

inline void put_u8(std::string& out, std::uint8_t v) { out.push_back(static_cast<char>(v)); }

inline void put_u16(std::string& out, std::uint16_t v) {
    for (int i = 0; i < 2; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

struct Reader {
    std::string_view data;
    std::size_t pos = 0;

    std::string_view take(std::size_t n) {
        if (pos + n > data.size()) throw std::runtime_error("checkpoint: truncated file");
        std::string_view s = data.substr(pos, n);
        pos += n;
        return s;
    }

    std::uint8_t u8() { return static_cast<std::uint8_t>(take(1)[0]); }

    std::uint16_t u16() {
        std::string_view s = take(2);
        std::uint16_t v = 0;
        for (int i = 1; i >= 0; --i) v = static_cast<std::uint16_t>((v << 8) | static_cast<unsigned char>(s[i]));
        return v;
    }

    std::uint32_t u32() {
        std::string_view s = take(4);
        std::uint32_t v = 0;
        for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(s[i]);
        return v;
    }

    std::uint64_t u64() {
        std::string_view s = take(8);
        std::uint64_t v = 0;
        for (int i = 7; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(s[i]);
        return v;
    }

    double f64() { return std::bit_cast<double>(u64()); }
};

struct Entry {
    std::uint8_t kind = kKindBlob;
    std::vector<std::uint64_t> dims;  // tensors only
    std::vector<double> values;      // tensors only
    std::string blob;                // blobs only
};

inline void write_blob(std::string& out, std::string_view name, std::string_view payload) {
    put_u8(out, kKindBlob);
    put_u16(out, static_cast<std::uint16_t>(name.size()));
    out += name;
    put_u64(out, payload.size());
    out += payload;
}

inline void write_tensor(std::string& out, std::string_view name, const std::vector<std::uint64_t>& dims,
                         const double* values, std::size_t count) {
    put_u8(out, kKindTensor);
    put_u16(out, static_cast<std::uint16_t>(name.size()));
    out += name;
    put_u8(out, static_cast<std::uint8_t>(dims.size()));
    std::uint64_t prod = 1;
    for (std::uint64_t d : dims) {
        put_u64(out, d);
        prod *= d;
    }
    if (prod != count) throw std::logic_error("checkpoint: tensor dims do not match element count");
    for (std::size_t i = 0; i < count; ++i) put_f64(out, values[i]);
}

inline void write_matrix(std::string& out, std::string_view name, const Matrix& m) {
    write_tensor(out, name, {m.rows, m.cols}, m.data.data(), m.data.size());
}

inline void write_vector(std::string& out, std::string_view name, const Vector& v) {
    write_tensor(out, name, {v.size()}, v.data(), v.size());
}

inline std::map<std::string, Entry> read_entries(std::string_view bytes) {
    Reader r{bytes};
    if (r.take(kMagic.size()) != kMagic) throw std::runtime_error("checkpoint: bad magic");
    if (r.u32() != kVersion) throw std::runtime_error("checkpoint: unsupported version");
    const std::uint32_t count = r.u32();
    std::map<std::string, Entry> entries;
    for (std::uint32_t i = 0; i < count; ++i) {
        Entry e;
        e.kind = r.u8();
        const std::uint16_t name_len = r.u16();
        const std::string name{r.take(name_len)};
        if (e.kind == kKindBlob) {
            const std::uint64_t len = r.u64();
            e.blob = std::string(r.take(len));
        } else if (e.kind == kKindTensor) {
            const std::uint8_t rank = r.u8();
            std::uint64_t prod = 1;
            for (std::uint8_t d = 0; d < rank; ++d) {
                e.dims.push_back(r.u64());
                prod *= e.dims.back();
            }
            e.values.reserve(prod);
            for (std::uint64_t v = 0; v < prod; ++v) e.values.push_back(r.f64());
        } else {
            throw std::runtime_error("checkpoint: unknown entry kind");
        }
        if (!entries.emplace(name, std::move(e)).second)
            throw std::runtime_error("checkpoint: duplicate entry '" + name + "'");
    }
    if (r.pos != bytes.size()) throw std::runtime_error("checkpoint: trailing bytes");
    return entries;
}

inline const Entry& need(const std::map<std::string, Entry>& entries, const std::string& name,
                         std::uint8_t kind) {
    auto it = entries.find(name);
    if (it == entries.end()) throw std::runtime_error("checkpoint: missing entry '" + name + "'");
    if (it->second.kind != kind) throw std::runtime_error("checkpoint: wrong kind for entry '" + name + "'");
    return it->second;
}

inline Matrix to_matrix(const Entry& e, const std::string& name) {
    if (e.dims.size() != 2) throw std::runtime_error("checkpoint: entry '" + name + "' is not a matrix");
    Matrix m(e.dims[0], e.dims[1]);
    m.data = e.values;
    return m;
}

inline Vector to_vector(const Entry& e, const std::string& name) {
    if (e.dims.size() != 1) throw std::runtime_error("checkpoint: entry '" + name + "' is not a vector");
    return e.values;
}

inline std::string serialize_gazetteer(const Gazetteer& g) {
    std::string out;
    for (const auto& [term, tag] : g) out += term + "\t" + tag + "\n";
    return out;
}

}  // namespace ckpt

// The manifest carries the scalar settings a scorer needs alongside the
// tensors: encoder shape, sequence length, featurization flags.
inline std::string save_model(const SiameseModel& model, bool use_domain_features,
                              const std::string& fingerprint) {
    std::string manifest;
    manifest += "model_dim = " + std::to_string(model.enc_cfg.model_dim) + "\n";
    manifest += "n_heads = " + std::to_string(model.enc_cfg.n_heads) + "\n";
    manifest += "ffn_dim = " + std::to_string(model.enc_cfg.ffn_dim) + "\n";
    manifest += "n_layers = " + std::to_string(model.enc_cfg.n_layers) + "\n";
    manifest += "max_len = " + std::to_string(model.enc_cfg.max_len) + "\n";
    manifest += "vocab_size = " + std::to_string(model.enc_cfg.vocab_size) + "\n";
    manifest += "keyword_k = " + std::to_string(model.features.keyword_k) + "\n";
    manifest += std::string("use_domain_features = ") + (use_domain_features ? "true" : "false") + "\n";
    manifest += std::string("has_flow = ") + (model.flow ? "true" : "false") + "\n";
    if (model.flow) {
        manifest += "flow_layers = " + std::to_string(model.flow->layers.size()) + "\n";
        manifest += "flow_s_max = " + format_double(model.flow->s_max) + "\n";
    }

    std::string body;
    std::uint32_t count = 0;
    auto blob = [&body, &count](std::string_view name, std::string_view payload) {
        ckpt::write_blob(body, name, payload);
        ++count;
    };
    auto mat = [&body, &count](const std::string& name, const Matrix& m) {
        ckpt::write_matrix(body, name, m);
        ++count;
    };
    auto vec = [&body, &count](const std::string& name, const Vector& v) {
        ckpt::write_vector(body, name, v);
        ++count;
    };

    blob("model", manifest);
    blob("config_fingerprint", fingerprint);
    blob("vocab", model.features.vocab.serialize());
    blob("tfidf", model.features.tfidf.serialize());
    blob("gazetteer", ckpt::serialize_gazetteer(model.features.gazetteer));

    mat("encoder.tok_emb", model.params.tok_emb);
    mat("encoder.pos_emb", model.params.pos_emb);
    mat("encoder.seg_emb", model.params.seg_emb);
    for (std::size_t l = 0; l < model.params.layers.size(); ++l) {
        const LayerParams& lp = model.params.layers[l];
        const std::string p = "encoder.layers." + std::to_string(l) + ".";
        mat(p + "wq", lp.wq);
        mat(p + "wk", lp.wk);
        mat(p + "wv", lp.wv);
        mat(p + "wo", lp.wo);
        mat(p + "w1", lp.w1);
        vec(p + "b1", lp.b1);
        mat(p + "w2", lp.w2);
        vec(p + "b2", lp.b2);
        vec(p + "ln1_gain", lp.ln1_gain);
        vec(p + "ln1_bias", lp.ln1_bias);
        vec(p + "ln2_gain", lp.ln2_gain);
        vec(p + "ln2_bias", lp.ln2_bias);
    }
    if (model.flow) {
        for (std::size_t l = 0; l < model.flow->layers.size(); ++l) {
            const CouplingLayer& cl = model.flow->layers[l];
            const std::string p = "flow.layers." + std::to_string(l) + ".";
            mat(p + "w_scale_hidden", cl.w_scale_hidden);
            vec(p + "b_scale_hidden", cl.b_scale_hidden);
            mat(p + "w_scale_out", cl.w_scale_out);
            vec(p + "b_scale_out", cl.b_scale_out);
            mat(p + "w_shift_hidden", cl.w_shift_hidden);
            vec(p + "b_shift_hidden", cl.b_shift_hidden);
            mat(p + "w_shift_out", cl.w_shift_out);
            vec(p + "b_shift_out", cl.b_shift_out);
        }
    }

    std::string out;
    out.reserve(body.size() + 16);
    out += ckpt::kMagic;
    ckpt::put_u32(out, ckpt::kVersion);
    ckpt::put_u32(out, count);
    out += body;
    return out;
}

struct LoadedModel {
    SiameseModel model;
    bool use_domain_features = true;
    std::string config_fingerprint;
};

inline LoadedModel load_model(std::string_view bytes) {
    const auto entries = ckpt::read_entries(bytes);
    LoadedModel out;

    // manifest
    std::map<std::string, std::string> mf;
    const std::string manifest = ckpt::need(entries, "model", ckpt::kKindBlob).blob;
    for (std::string_view raw : split_lines(manifest)) {
        const std::string_view line = trim(raw);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string_view::npos) throw std::runtime_error("checkpoint: malformed manifest line");
        mf[std::string(trim(line.substr(0, eq)))] = std::string(trim(line.substr(eq + 1)));
    }
    auto mf_int = [&mf](const std::string& key) {
        auto it = mf.find(key);
        if (it == mf.end()) throw std::runtime_error("checkpoint: manifest missing '" + key + "'");
        return static_cast<int>(parse_long(it->second, "checkpoint manifest '" + key + "'"));
    };
    EncoderConfig& cfg = out.model.enc_cfg;
    cfg.model_dim = mf_int("model_dim");
    cfg.n_heads = mf_int("n_heads");
    cfg.ffn_dim = mf_int("ffn_dim");
    cfg.n_layers = mf_int("n_layers");
    cfg.max_len = mf_int("max_len");
    cfg.vocab_size = mf_int("vocab_size");
    cfg.validate();
    out.model.features.keyword_k = mf_int("keyword_k");
    out.use_domain_features = mf.at("use_domain_features") == "true";
    out.config_fingerprint = ckpt::need(entries, "config_fingerprint", ckpt::kKindBlob).blob;

    out.model.features.vocab = Vocabulary::parse(ckpt::need(entries, "vocab", ckpt::kKindBlob).blob);
    if (out.model.features.vocab.size() != cfg.vocab_size)
        throw std::runtime_error("checkpoint: vocabulary size disagrees with manifest");
    out.model.features.tfidf = TfIdfModel::parse(ckpt::need(entries, "tfidf", ckpt::kKindBlob).blob);
    out.model.features.gazetteer =
        parse_gazetteer(ckpt::need(entries, "gazetteer", ckpt::kKindBlob).blob, "checkpoint gazetteer");

    auto mat = [&entries](const std::string& name) {
        return ckpt::to_matrix(ckpt::need(entries, name, ckpt::kKindTensor), name);
    };
    auto vec = [&entries](const std::string& name) {
        return ckpt::to_vector(ckpt::need(entries, name, ckpt::kKindTensor), name);
    };
    out.model.params.tok_emb = mat("encoder.tok_emb");
    out.model.params.pos_emb = mat("encoder.pos_emb");
    out.model.params.seg_emb = mat("encoder.seg_emb");
    out.model.params.layers.resize(static_cast<std::size_t>(cfg.n_layers));
    for (std::size_t l = 0; l < out.model.params.layers.size(); ++l) {
        LayerParams& lp = out.model.params.layers[l];
        const std::string p = "encoder.layers." + std::to_string(l) + ".";
        lp.wq = mat(p + "wq");
        lp.wk = mat(p + "wk");
        lp.wv = mat(p + "wv");
        lp.wo = mat(p + "wo");
        lp.w1 = mat(p + "w1");
        lp.b1 = vec(p + "b1");
        lp.w2 = mat(p + "w2");
        lp.b2 = vec(p + "b2");
        lp.ln1_gain = vec(p + "ln1_gain");
        lp.ln1_bias = vec(p + "ln1_bias");
        lp.ln2_gain = vec(p + "ln2_gain");
        lp.ln2_bias = vec(p + "ln2_bias");
    }

    if (mf.at("has_flow") == "true") {
        FlowParams flow;
        flow.dim = cfg.model_dim;
        flow.s_max = parse_double(mf.at("flow_s_max"), "checkpoint manifest 'flow_s_max'");
        flow.layers.resize(static_cast<std::size_t>(mf_int("flow_layers")));
        for (std::size_t l = 0; l < flow.layers.size(); ++l) {
            CouplingLayer& cl = flow.layers[l];
            cl.transform_upper = (l % 2 == 0);
            const std::string p = "flow.layers." + std::to_string(l) + ".";
            cl.w_scale_hidden = mat(p + "w_scale_hidden");
            cl.b_scale_hidden = vec(p + "b_scale_hidden");
            cl.w_scale_out = mat(p + "w_scale_out");
            cl.b_scale_out = vec(p + "b_scale_out");
            cl.w_shift_hidden = mat(p + "w_shift_hidden");
            cl.b_shift_hidden = vec(p + "b_shift_hidden");
            cl.w_shift_out = mat(p + "w_shift_out");
            cl.b_shift_out = vec(p + "b_shift_out");
        }
        if (flow.dim % 2 != 0 || flow.layers.empty())
            throw std::runtime_error("checkpoint: invalid flow parameters");
        out.model.flow = std::move(flow);
    }
    return out;
}

}  // namespace sbfd
