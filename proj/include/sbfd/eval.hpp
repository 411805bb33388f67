#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sbfd/corpus.hpp"
#include "sbfd/siamese.hpp"
#include "sbfd/util.hpp"

namespace sbfd {

namespace eval_detail {

inline void check_series(const std::vector<double>& xs, const std::vector<double>& ys, const char* name) {
    if (xs.size() != ys.size()) throw std::invalid_argument(std::string(name) + ": length mismatch");
    if (xs.size() < 2) throw std::invalid_argument(std::string(name) + ": need at least 2 points");
    auto constant = [](const std::vector<double>& s) {
        for (double v : s)
            if (v != s.front()) return false;
        return true;
    };
    if (constant(xs) || constant(ys))
        throw std::invalid_argument(std::string(name) + ": correlation undefined for a constant series");
}

}  // namespace eval_detail

// Sample covariance over the product of sample standard deviations.
inline double pearson(const std::vector<double>& xs, const std::vector<double>& ys) {
    eval_detail::check_series(xs, ys, "pearson");
    const double n = static_cast<double>(xs.size());
    const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
    const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double dx = xs[i] - mx;
        const double dy = ys[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    // Clamped against rounding so perfectly (anti)monotone data cannot land
    // a hair outside [-1, 1].
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

// 1-based ranks; tied values all receive the average of the rank positions
// they span (fractional ranks).
inline std::vector<double> average_ranks(const std::vector<double>& xs) {
    std::vector<std::size_t> order(xs.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&xs](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
    std::vector<double> ranks(xs.size(), 0.0);
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && xs[order[j + 1]] == xs[order[i]]) ++j;
        const double avg = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = avg;
        i = j + 1;
    }
    return ranks;
}

// Pearson correlation of average-tied ranks.
inline double spearman(const std::vector<double>& xs, const std::vector<double>& ys) {
    eval_detail::check_series(xs, ys, "spearman");
    return pearson(average_ranks(xs), average_ranks(ys));
}

struct FoldResult {
    int fold = 0;
    double pearson = 0.0;
    double spearman = 0.0;
    bool valid = true;  // false when the held-out gold was constant

    bool operator==(const FoldResult&) const = default;
};

struct EvalReport {
    std::string dataset_name;
    std::string config_fingerprint;
    std::vector<FoldResult> folds;
    double avg_pearson = 0.0;
    double avg_spearman = 0.0;
    double seconds = 0.0;

    // Equality is over the results, not the timing: two runs of the same
    // configuration are "the same report" regardless of wall-clock.
    bool operator==(const EvalReport& o) const {
        return dataset_name == o.dataset_name && config_fingerprint == o.config_fingerprint && folds == o.folds &&
               avg_pearson == o.avg_pearson && avg_spearman == o.avg_spearman;
    }
};

// scorer(train_partition, held_out, fold_index, fold_seed) -> one score per
// held-out pair, in order.
using FoldScorer = std::function<std::vector<double>(const std::vector<LabeledPair>&,
                                                     const std::vector<LabeledPair>&, int, std::uint64_t)>;

// Cross-validated evaluation: for every fold, score the held-out pairs with a
// model of the complement (or any scorer) and correlate against gold. Folds
// whose gold is constant are flagged and excluded from the averages.
inline EvalReport evaluate_with_scorer(const Dataset& dataset, int k, std::uint64_t seed,
                                       const FoldScorer& scorer) {
    const auto t0 = std::chrono::steady_clock::now();
    const FoldPlan plan = k_fold_split(dataset, k, Rng::derive(seed, 7));
    EvalReport report;
    report.dataset_name = dataset.name;

    double sum_p = 0.0, sum_s = 0.0;
    int valid_folds = 0;
    for (int f = 0; f < k; ++f) {
        std::vector<LabeledPair> train_part, test_part;
        for (std::size_t i = 0; i < dataset.pairs.size(); ++i)
            (plan.assignments[i] == f ? test_part : train_part).push_back(dataset.pairs[i]);

        FoldResult fr;
        fr.fold = f;
        bool constant_gold = true;  // folds of size < 2 count as constant too
        for (const LabeledPair& p : test_part)
            if (p.gold != test_part.front().gold) {
                constant_gold = false;
                break;
            }
        if (constant_gold) {
            fr.valid = false;
            report.folds.push_back(fr);
            continue;
        }

        const std::vector<double> scores = scorer(train_part, test_part, f, Rng::derive(seed, 100 + f));
        if (scores.size() != test_part.size())
            throw std::runtime_error("evaluate: scorer returned wrong number of scores");
        std::vector<double> gold;
        gold.reserve(test_part.size());
        for (const LabeledPair& p : test_part) gold.push_back(p.gold);
        fr.pearson = pearson(scores, gold);
        fr.spearman = spearman(scores, gold);
        report.folds.push_back(fr);
        sum_p += fr.pearson;
        sum_s += fr.spearman;
        ++valid_folds;
    }
    if (valid_folds == 0) throw std::runtime_error("evaluate: every fold had constant gold");
    report.avg_pearson = sum_p / static_cast<double>(valid_folds);
    report.avg_spearman = sum_s / static_cast<double>(valid_folds);
    report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

// Full protocol: per fold, train a fresh model on the complement (seeded from
// (seed, fold)), then score the held-out pairs.
inline EvalReport evaluate(const Dataset& dataset, const EncoderConfig& enc_template, const TrainConfig& train_cfg,
                           int k, std::uint64_t seed, int keyword_k = 3, const Gazetteer& gazetteer = {},
                           const FlowConfig& flow_template = FlowConfig{}) {
    const FoldPlan plan = k_fold_split(dataset, k, Rng::derive(seed, 7));
    FoldScorer scorer = [&](const std::vector<LabeledPair>& train_part, const std::vector<LabeledPair>& test_part,
                            int fold, std::uint64_t fold_seed) {
        TrainConfig cfg = train_cfg;
        cfg.seed = fold_seed;
        SiameseModel model = init_siamese(train_part, enc_template, cfg, keyword_k, gazetteer);
        TrainResult tr = train(std::move(model), dataset, plan, fold, cfg, flow_template);
        return score_pairs(tr.model, test_part, cfg);
    };
    return evaluate_with_scorer(dataset, k, seed, scorer);
}

struct SweepResult {
    std::vector<std::pair<int, double>> points;  // (batch_size, averaged spearman)

    bool operator==(const SweepResult&) const = default;
};

// Re-runs the cross-validated evaluation once per batch size, all else fixed.
inline SweepResult batch_size_sweep(const Dataset& dataset, const EncoderConfig& enc_template,
                                    const TrainConfig& base_cfg, const std::vector<int>& sizes, int k,
                                    std::uint64_t seed, int keyword_k = 3, const Gazetteer& gazetteer = {},
                                    const FlowConfig& flow_template = FlowConfig{}) {
    if (sizes.empty()) throw std::invalid_argument("batch_size_sweep: no batch sizes given");
    for (std::size_t i = 1; i < sizes.size(); ++i)
        if (sizes[i] <= sizes[i - 1])
            throw std::invalid_argument("batch_size_sweep: batch sizes must be strictly increasing");
    const std::size_t n = dataset.pairs.size();
    const std::size_t max_fold = (n + static_cast<std::size_t>(k) - 1) / static_cast<std::size_t>(k);
    const std::size_t min_train = n - max_fold;
    for (int s : sizes)
        if (s < 1 || static_cast<std::size_t>(s) > min_train)
            throw std::invalid_argument("batch_size_sweep: batch size " + std::to_string(s) +
                                        " exceeds the training partition (" + std::to_string(min_train) + ")");
    SweepResult result;
    for (int s : sizes) {
        TrainConfig cfg = base_cfg;
        cfg.batch_size = s;
        const EvalReport rep = evaluate(dataset, enc_template, cfg, k, seed, keyword_k, gazetteer, flow_template);
        result.points.emplace_back(s, rep.avg_spearman);
    }
    return result;
}

// ---- serialization ----------------------------------------------------

inline std::string eval_report_csv(const EvalReport& r) {
    std::string out;
    out += "# dataset: " + r.dataset_name + "\n";
    out += "# config: " + r.config_fingerprint + "\n";
    out += "fold,pearson,spearman,valid\n";
    for (const FoldResult& f : r.folds) {
        out += std::to_string(f.fold) + ",";
        if (f.valid)
            out += format_double(f.pearson) + "," + format_double(f.spearman) + ",1\n";
        else
            out += ",,0\n";
    }
    out += "average," + format_double(r.avg_pearson) + "," + format_double(r.avg_spearman) + ",\n";
    return out;
}

inline EvalReport parse_eval_report_csv(std::string_view text) {
    EvalReport r;
    bool saw_header = false, saw_average = false;
    for (std::string_view raw : split_lines(text)) {
        const std::string_view line = trim(raw);
        if (line.empty()) continue;
        if (line.starts_with("# dataset:")) {
            r.dataset_name = trim(line.substr(10));
            continue;
        }
        if (line.starts_with("# config:")) {
            r.config_fingerprint = trim(line.substr(9));
            continue;
        }
        if (line.starts_with("#")) continue;
        if (line == "fold,pearson,spearman,valid") {
            saw_header = true;
            continue;
        }
        const auto cells = split(line, ',');
        if (cells.size() != 4) throw std::runtime_error("eval report: malformed row: " + std::string(line));
        if (cells[0] == "average") {
            r.avg_pearson = parse_double(cells[1], "eval report average pearson");
            r.avg_spearman = parse_double(cells[2], "eval report average spearman");
            saw_average = true;
            continue;
        }
        FoldResult f;
        f.fold = static_cast<int>(parse_long(cells[0], "eval report fold index"));
        f.valid = trim(cells[3]) == "1";
        if (f.valid) {
            f.pearson = parse_double(cells[1], "eval report fold pearson");
            f.spearman = parse_double(cells[2], "eval report fold spearman");
        }
        r.folds.push_back(f);
    }
    if (!saw_header || !saw_average) throw std::runtime_error("eval report: missing header or average row");
    return r;
}

inline std::string sweep_csv(const SweepResult& s, const std::string& fingerprint) {
    std::string out;
    out += "# config: " + fingerprint + "\n";
    out += "batch_size,spearman\n";
    for (const auto& [b, v] : s.points) out += std::to_string(b) + "," + format_double(v) + "\n";
    return out;
}

inline SweepResult parse_sweep_csv(std::string_view text) {
    SweepResult s;
    for (std::string_view raw : split_lines(text)) {
        const std::string_view line = trim(raw);
        if (line.empty() || line.starts_with("#") || line == "batch_size,spearman") continue;
        const auto cells = split(line, ',');
        if (cells.size() != 2) throw std::runtime_error("sweep: malformed row: " + std::string(line));
        s.points.emplace_back(static_cast<int>(parse_long(cells[0], "sweep batch size")),
                              parse_double(cells[1], "sweep spearman"));
    }
    return s;
}

// Two whitespace-separated columns, directly consumable by plotting tools.
inline std::string sweep_plot_data(const SweepResult& s, const std::string& fingerprint) {
    std::string out;
    out += "# config: " + fingerprint + "\n";
    for (const auto& [b, v] : s.points) out += std::to_string(b) + " " + format_double(v) + "\n";
    return out;
}

}  // namespace sbfd
