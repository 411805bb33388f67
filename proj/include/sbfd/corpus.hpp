#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "sbfd/rng.hpp"
#include "sbfd/util.hpp"

namespace sbfd {

struct LabeledPair {
    std::string text_a;
    std::string text_b;
    std::optional<std::string> domain_a;
    std::optional<std::string> domain_b;
    double gold = 0.0;

    bool operator==(const LabeledPair&) const = default;
};

struct Dataset {
    std::string name;
    double scale_min = 0.0;
    double scale_max = 5.0;
    std::vector<LabeledPair> pairs;

    bool operator==(const Dataset&) const = default;
};

// k disjoint folds covering all pair indices, sizes differing by at most one.
struct FoldPlan {
    int k = 0;
    std::vector<int> assignments;  // pair index -> fold in [0, k)
};

namespace detail {

inline std::string line_err(const std::string& path, std::size_t lineno, const std::string& msg) {
    return path + ":" + std::to_string(lineno) + ": " + msg;
}

inline double parse_gold(std::string_view field, const std::string& path, std::size_t lineno,
                         double scale_min, double scale_max) {
    double g;
    try {
        g = parse_double(field, "gold");
    } catch (const std::exception& e) {
        throw std::runtime_error(line_err(path, lineno, e.what()));
    }
    if (!(g >= scale_min && g <= scale_max))
        throw std::runtime_error(line_err(path, lineno,
                                          "gold " + format_double(g) + " outside scale [" +
                                              format_double(scale_min) + ", " + format_double(scale_max) + "]"));
    return g;
}

inline std::string require_text(std::string_view field, const std::string& path, std::size_t lineno,
                                const char* which) {
    std::string t(trim(field));
    if (t.empty()) throw std::runtime_error(line_err(path, lineno, std::string(which) + " is empty"));
    return t;
}

// Whitespace split used by the synthetic generator's scoring rule.
inline std::vector<std::string> ws_split(std::string_view s) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
        std::size_t start = i;
        while (i < s.size() && s[i] != ' ' && s[i] != '\t') ++i;
        if (i > start) out.emplace_back(s.substr(start, i - start));
    }
    return out;
}

}  // namespace detail

inline void validate_scale(double scale_min, double scale_max) {
    if (!(scale_min < scale_max)) throw std::invalid_argument("scale_min must be below scale_max");
}

// TSV with at least three tab-separated fields per line: text_a, text_b, gold.
// '#' lines are comments; empty lines are skipped; extra fields are ignored.
inline Dataset load_sts_tsv(const std::string& path, double scale_min, double scale_max) {
    validate_scale(scale_min, scale_max);
    Dataset ds;
    ds.name = path;
    ds.scale_min = scale_min;
    ds.scale_max = scale_max;
    const std::string content = read_file(path);
    const auto lines = split_lines(content);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        std::string_view line = lines[i];
        if (trim(line).empty() || line.front() == '#') continue;
        const auto fields = split(line, '\t');
        if (fields.size() < 3)
            throw std::runtime_error(detail::line_err(path, i + 1, "expected at least 3 tab-separated fields, got " +
                                                                       std::to_string(fields.size())));
        LabeledPair p;
        p.text_a = detail::require_text(fields[0], path, i + 1, "text_a");
        p.text_b = detail::require_text(fields[1], path, i + 1, "text_b");
        p.gold = detail::parse_gold(fields[2], path, i + 1, scale_min, scale_max);
        ds.pairs.push_back(std::move(p));
    }
    return ds;
}

// TSV with exactly five fields: title_a, domain_a, title_b, domain_b, gold.
inline Dataset load_conference_tsv(const std::string& path, double scale_min, double scale_max) {
    validate_scale(scale_min, scale_max);
    Dataset ds;
    ds.name = path;
    ds.scale_min = scale_min;
    ds.scale_max = scale_max;
    const std::string content = read_file(path);
    const auto lines = split_lines(content);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        std::string_view line = lines[i];
        if (trim(line).empty() || line.front() == '#') continue;
        const auto fields = split(line, '\t');
        if (fields.size() != 5)
            throw std::runtime_error(detail::line_err(
                path, i + 1, "expected 5 tab-separated fields, got " + std::to_string(fields.size())));
        LabeledPair p;
        p.text_a = detail::require_text(fields[0], path, i + 1, "title_a");
        p.domain_a = std::string(trim(fields[1]));
        p.text_b = detail::require_text(fields[2], path, i + 1, "title_b");
        p.domain_b = std::string(trim(fields[3]));
        p.gold = detail::parse_gold(fields[4], path, i + 1, scale_min, scale_max);
        ds.pairs.push_back(std::move(p));
    }
    return ds;
}

// Serialized back to the format the pairs came from: five fields when every
// pair carries both domains, three otherwise.
inline std::string dataset_to_tsv(const Dataset& ds) {
    bool all_domains = !ds.pairs.empty();
    for (const auto& p : ds.pairs)
        if (!p.domain_a || !p.domain_b) all_domains = false;
    std::string out;
    for (const auto& p : ds.pairs) {
        if (all_domains) {
            out += p.text_a;
            out += '\t';
            out += *p.domain_a;
            out += '\t';
            out += p.text_b;
            out += '\t';
            out += *p.domain_b;
            out += '\t';
        } else {
            out += p.text_a;
            out += '\t';
            out += p.text_b;
            out += '\t';
        }
        out += format_double(p.gold);
        out += '\n';
    }
    return out;
}

inline void save_tsv(const Dataset& ds, const std::string& path) { write_file(path, dataset_to_tsv(ds)); }

inline double normalize_gold(double gold, double scale_min, double scale_max) {
    validate_scale(scale_min, scale_max);
    if (!(gold >= scale_min && gold <= scale_max))
        throw std::invalid_argument("gold " + format_double(gold) + " outside scale");
    return (gold - scale_min) / (scale_max - scale_min);
}

inline FoldPlan k_fold_split(const Dataset& ds, int k, std::uint64_t seed) {
    const std::size_t n = ds.pairs.size();
    if (k < 2 || static_cast<std::size_t>(k) > n)
        throw std::invalid_argument("k_fold_split: k must be in [2, " + std::to_string(n) + "]");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);
    rng.shuffle(order);
    FoldPlan plan;
    plan.k = k;
    plan.assignments.resize(n);
    for (std::size_t i = 0; i < n; ++i) plan.assignments[order[i]] = static_cast<int>(i % static_cast<std::size_t>(k));
    return plan;
}

inline std::string fold_plan_csv(const FoldPlan& plan) {
    std::string out = "index,fold\n";
    for (std::size_t i = 0; i < plan.assignments.size(); ++i)
        out += std::to_string(i) + "," + std::to_string(plan.assignments[i]) + "\n";
    return out;
}

// The scoring rule planted by generate_synthetic, exposed so an exact scorer
// exists for the generated data: 0.7 * Jaccard(token sets) + 0.3 * [domains equal],
// tokens split on whitespace. Returns a value in [0, 1]; gold = scale_max * value.
inline double planted_similarity(const LabeledPair& p) {
    const auto ta = detail::ws_split(p.text_a);
    const auto tb = detail::ws_split(p.text_b);
    const std::set<std::string> sa(ta.begin(), ta.end());
    const std::set<std::string> sb(tb.begin(), tb.end());
    std::size_t inter = 0;
    for (const auto& t : sa) inter += sb.count(t);
    const std::size_t uni = sa.size() + sb.size() - inter;
    const double jaccard = uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
    const bool same_domain = p.domain_a.value_or("") == p.domain_b.value_or("");
    return 0.7 * jaccard + 0.3 * (same_domain ? 1.0 : 0.0);
}

// Labeled pairs with a planted, exactly recoverable similarity: token overlap
// and domain agreement are sampled, and gold follows planted_similarity by
// construction. Scale is [0, 5].
inline Dataset generate_synthetic(int n_pairs, int vocab_size, int n_domains, std::uint64_t seed) {
    if (n_pairs <= 0 || vocab_size <= 0 || n_domains <= 0)
        throw std::invalid_argument("generate_synthetic: all arguments must be positive");
    Dataset ds;
    ds.name = "synthetic";
    ds.scale_min = 0.0;
    ds.scale_max = 5.0;
    Rng rng(seed);

    const int len_max = std::max(1, std::min(8, vocab_size / 2));
    const int len_min = std::min(3, len_max);

    std::vector<int> pool(static_cast<std::size_t>(vocab_size));
    std::iota(pool.begin(), pool.end(), 0);

    auto token_name = [](int id) {
        std::string s = std::to_string(id);
        return "w" + std::string(s.size() < 3 ? 3 - s.size() : 0, '0') + s;
    };

    for (int i = 0; i < n_pairs; ++i) {
        const int len_a = len_min + static_cast<int>(rng.index(static_cast<std::size_t>(len_max - len_min + 1)));
        const int len_b = len_min + static_cast<int>(rng.index(static_cast<std::size_t>(len_max - len_min + 1)));
        const int shared = static_cast<int>(rng.index(static_cast<std::size_t>(std::min(len_a, len_b) + 1)));
        const int distinct = len_a + len_b - shared;

        // Partial Fisher-Yates: the first `distinct` entries of pool become a
        // uniform sample without replacement.
        for (int j = 0; j < distinct; ++j) {
            const std::size_t r = static_cast<std::size_t>(j) + rng.index(static_cast<std::size_t>(vocab_size - j));
            std::swap(pool[static_cast<std::size_t>(j)], pool[r]);
        }
        std::vector<std::string> tokens_a, tokens_b;
        for (int j = 0; j < shared; ++j) {
            tokens_a.push_back(token_name(pool[static_cast<std::size_t>(j)]));
            tokens_b.push_back(token_name(pool[static_cast<std::size_t>(j)]));
        }
        for (int j = shared; j < len_a; ++j) tokens_a.push_back(token_name(pool[static_cast<std::size_t>(j)]));
        for (int j = len_a; j < distinct; ++j) tokens_b.push_back(token_name(pool[static_cast<std::size_t>(j)]));
        rng.shuffle(tokens_a);
        rng.shuffle(tokens_b);

        const bool same_domain = n_domains == 1 || rng.uniform() < 0.5;
        const int dom_a = static_cast<int>(rng.index(static_cast<std::size_t>(n_domains)));
        const int dom_b = same_domain
                              ? dom_a
                              : static_cast<int>((static_cast<std::size_t>(dom_a) + 1 +
                                                  rng.index(static_cast<std::size_t>(n_domains - 1))) %
                                                 static_cast<std::size_t>(n_domains));

        LabeledPair p;
        for (std::size_t j = 0; j < tokens_a.size(); ++j) {
            if (j) p.text_a += ' ';
            p.text_a += tokens_a[j];
        }
        for (std::size_t j = 0; j < tokens_b.size(); ++j) {
            if (j) p.text_b += ' ';
            p.text_b += tokens_b[j];
        }
        p.domain_a = "field" + std::to_string(dom_a);
        p.domain_b = "field" + std::to_string(dom_b);
        p.gold = ds.scale_max * planted_similarity(p);
        ds.pairs.push_back(std::move(p));
    }
    return ds;
}

}  // namespace sbfd
