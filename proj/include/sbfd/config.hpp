#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "sbfd/util.hpp"

namespace sbfd {

// Plain-text "key = value" run configuration. Every key has a documented
// default; unknown and duplicate keys are rejected so a config file can never
// silently misspell a setting. The canonical serialization (all keys, schema
// order) is fingerprinted into every output artifact.
class RunConfig {
  public:
    struct Entry {
        const char* key;
        const char* default_value;
        const char* doc;
    };

    static const std::vector<Entry>& schema() {
        static const std::vector<Entry> s = {
            {"dataset_kind", "synthetic", "data source: 'synthetic' (generated) or 'tsv' (read dataset_path)"},
            {"dataset_path", "", "TSV file with labeled pairs; required when dataset_kind = tsv"},
            {"dataset_name", "synthetic", "name recorded in reports"},
            {"scale_min", "0", "gold score lower bound for TSV datasets"},
            {"scale_max", "5", "gold score upper bound for TSV datasets"},
            {"synthetic_pairs", "300", "number of generated pairs when dataset_kind = synthetic"},
            {"synthetic_vocab", "40", "token inventory size of the generator"},
            {"synthetic_domains", "4", "distinct domain labels of the generator"},
            {"gazetteer_path", "", "optional term -> tag table fused as features"},
            {"model_dim", "32", "encoder embedding width (even, divisible by n_heads)"},
            {"n_heads", "4", "attention heads"},
            {"ffn_dim", "64", "feed-forward hidden width"},
            {"n_layers", "2", "encoder depth"},
            {"max_len", "32", "fused sequence length"},
            {"batch_size", "32", "training minibatch size"},
            {"learning_rate", "1e-05", "Adam learning rate for the encoder"},
            {"epochs", "30", "encoder training epochs"},
            {"keyword_k", "3", "keywords per document on the feature side"},
            {"use_domain_features", "true", "fuse domain tokens (false = keywords only)"},
            {"cv_folds", "5", "cross-validation fold count"},
            {"train_fold", "0", "held-out fold index for the train command"},
            {"seed", "1", "root seed; all randomness derives from it"},
            {"flow_layers", "4", "coupling layers in the standardization flow"},
            {"flow_hidden", "32", "hidden width of the coupling nets"},
            {"flow_s_max", "2", "log-scale bound of the couplings"},
            {"flow_learning_rate", "0.01", "Adam learning rate for the flow"},
            {"flow_epochs", "200", "flow training epochs"},
            {"flow_batch_size", "64", "flow minibatch size"},
            {"eval_scorer", "model", "'model' trains per fold; 'planted' scores with the synthetic rule"},
            {"sweep_sizes", "8,16,32,64,128", "comma-separated batch sizes for the sweep"},
        };
        return s;
    }

    RunConfig() {
        for (const Entry& e : schema()) values_[e.key] = e.default_value;
    }

    static RunConfig parse(std::string_view text, const std::string& source) {
        RunConfig cfg;
        std::map<std::string, bool> seen;
        const auto lines = split_lines(text);
        for (std::size_t i = 0; i < lines.size(); ++i) {
            const std::string_view line = trim(lines[i]);
            if (line.empty() || line.starts_with("#")) continue;
            const std::size_t eq = line.find('=');
            if (eq == std::string_view::npos)
                throw std::runtime_error(source + ":" + std::to_string(i + 1) + ": expected 'key = value'");
            const std::string key{trim(line.substr(0, eq))};
            const std::string value{trim(line.substr(eq + 1))};
            if (!cfg.values_.count(key))
                throw std::runtime_error(source + ":" + std::to_string(i + 1) + ": unknown key '" + key + "'");
            if (seen[key])
                throw std::runtime_error(source + ":" + std::to_string(i + 1) + ": duplicate key '" + key + "'");
            seen[key] = true;
            cfg.values_[key] = value;
        }
        return cfg;
    }

    static RunConfig load(const std::string& path) { return parse(read_file(path), path); }

    void set(const std::string& key, const std::string& value) {
        auto it = values_.find(key);
        if (it == values_.end()) throw std::runtime_error("config: unknown key '" + key + "'");
        it->second = value;
    }

    const std::string& get(const std::string& key) const {
        auto it = values_.find(key);
        if (it == values_.end()) throw std::runtime_error("config: unknown key '" + key + "'");
        return it->second;
    }

    long get_int(const std::string& key) const { return parse_long(get(key), "config key '" + key + "'"); }

    double get_double(const std::string& key) const {
        return parse_double(get(key), "config key '" + key + "'");
    }

    bool get_bool(const std::string& key) const {
        const std::string& v = get(key);
        if (v == "true" || v == "1") return true;
        if (v == "false" || v == "0") return false;
        throw std::runtime_error("config key '" + key + "': expected true/false, got '" + v + "'");
    }

    std::uint64_t get_seed(const std::string& key) const {
        const long v = get_int(key);
        if (v < 0) throw std::runtime_error("config key '" + key + "': seed must be non-negative");
        return static_cast<std::uint64_t>(v);
    }

    std::vector<int> get_int_list(const std::string& key) const {
        std::vector<int> out;
        for (std::string_view cell : split(get(key), ',')) {
            out.push_back(static_cast<int>(parse_long(cell, "config key '" + key + "'")));
        }
        return out;
    }

    // All keys in schema order with current values — the identity of a run.
    std::string canonical() const {
        std::string out;
        for (const Entry& e : schema()) out += std::string(e.key) + " = " + values_.at(e.key) + "\n";
        return out;
    }

    std::string fingerprint() const { return hex64(fnv1a64(canonical())); }

    bool operator==(const RunConfig& o) const { return values_ == o.values_; }

  private:
    std::map<std::string, std::string> values_;
};

}  // namespace sbfd
