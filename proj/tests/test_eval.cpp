#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "helpers.hpp"
#include "sbfd/eval.hpp"

using namespace sbfd;

namespace {

// Independent O(n^2) fractional ranking: rank = 1 + #smaller + (#equal-1)/2.
std::vector<double> oracle_ranks(const std::vector<double>& xs) {
    std::vector<double> ranks(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        std::size_t smaller = 0, equal = 0;
        for (std::size_t j = 0; j < xs.size(); ++j) {
            smaller += xs[j] < xs[i] ? 1 : 0;
            equal += xs[j] == xs[i] ? 1 : 0;
        }
        ranks[i] = static_cast<double>(smaller) + 1.0 + (static_cast<double>(equal) - 1.0) / 2.0;
    }
    return ranks;
}

// Independent textbook Pearson, written directly from the definition.
double oracle_pearson(const std::vector<double>& xs, const std::vector<double>& ys) {
    const double n = static_cast<double>(xs.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxy += (xs[i] - mx) * (ys[i] - my);
        sxx += (xs[i] - mx) * (xs[i] - mx);
        syy += (ys[i] - my) * (ys[i] - my);
    }
    return sxy / (std::sqrt(sxx) * std::sqrt(syy));
}

bool is_constant(const std::vector<double>& v) {
    for (double x : v)
        if (x != v.front()) return false;
    return true;
}

EncoderConfig tiny_encoder() {
    EncoderConfig cfg;
    cfg.model_dim = 8;
    cfg.n_heads = 2;
    cfg.ffn_dim = 8;
    cfg.n_layers = 1;
    return cfg;
}

TrainConfig tiny_train() {
    TrainConfig cfg;
    cfg.batch_size = 8;
    cfg.learning_rate = 1e-3;
    cfg.epochs = 1;
    cfg.max_len = 10;
    return cfg;
}

FlowConfig tiny_flow() {
    FlowConfig cfg;
    cfg.epochs = 2;
    cfg.hidden_dim = 4;
    return cfg;
}

}  // namespace

TEST_CASE("pearson matches hand-derived values", "[eval]") {
    CHECK(pearson({1.0, 2.0, 3.0}, {1.0, 2.0, 4.0}) ==
          Catch::Approx(9.0 / std::sqrt(84.0)).epsilon(1e-14));
    CHECK(pearson({1.0, 2.0, 3.0}, {1.0, 2.0, 4.0}) == Catch::Approx(0.9819805060619657).margin(1e-14));

    // Affine relations saturate the bounds.
    const std::vector<double> x = {0.5, -1.0, 2.0, 3.25, -0.75};
    std::vector<double> y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = 2.0 * x[i] + 3.0;
    CHECK(pearson(x, y) == Catch::Approx(1.0).margin(1e-12));
    CHECK(pearson(x, y) <= 1.0);  // the clamp guarantees the bound exactly
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = -0.5 * x[i] + 1.0;
    CHECK(pearson(x, y) == Catch::Approx(-1.0).margin(1e-12));
    CHECK(pearson(x, y) >= -1.0);
}

TEST_CASE("pearson is symmetric and affine-invariant", "[eval]") {
    Rng rng(7);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 3 + rng.index(20);
        const std::vector<double> x = test_util::random_vector(n, rng, -5.0, 5.0);
        const std::vector<double> y = test_util::random_vector(n, rng, -5.0, 5.0);

        const double r = pearson(x, y);
        REQUIRE(r >= -1.0);
        REQUIRE(r <= 1.0);
        REQUIRE(pearson(y, x) == r);  // exact symmetry

        std::vector<double> xs(n), ys(n);
        const double a = 0.1 + rng.uniform(0.0, 3.0), b = rng.uniform(-2.0, 2.0);
        for (std::size_t i = 0; i < n; ++i) {
            xs[i] = a * x[i] + b;
            ys[i] = 1.5 * y[i] - 4.0;
        }
        REQUIRE(pearson(xs, ys) == Catch::Approx(r).margin(1e-10));

        for (std::size_t i = 0; i < n; ++i) xs[i] = -a * x[i] + b;  // negative scaling flips sign
        REQUIRE(pearson(xs, y) == Catch::Approx(-r).margin(1e-10));
    }
}

TEST_CASE("pearson rejects degenerate inputs", "[eval]") {
    CHECK_THROWS(pearson({1.0, 2.0}, {1.0, 2.0, 3.0}));  // length mismatch
    CHECK_THROWS(pearson({1.0}, {2.0}));                 // too short
    CHECK_THROWS(pearson({3.0, 3.0, 3.0}, {1.0, 2.0, 3.0}));
    CHECK_THROWS(pearson({1.0, 2.0, 3.0}, {5.0, 5.0, 5.0}));
}

TEST_CASE("average_ranks assigns 1-based fractional ranks", "[eval]") {
    CHECK(average_ranks({10.0, 20.0, 30.0}) == std::vector<double>{1.0, 2.0, 3.0});
    CHECK(average_ranks({30.0, 10.0, 20.0}) == std::vector<double>{3.0, 1.0, 2.0});
    CHECK(average_ranks({5.0, 5.0, 9.0}) == std::vector<double>{1.5, 1.5, 3.0});
    CHECK(average_ranks({7.0, 7.0, 7.0}) == std::vector<double>{2.0, 2.0, 2.0});
    CHECK(average_ranks({4.0}) == std::vector<double>{1.0});
    CHECK(average_ranks({2.0, 1.0, 2.0, 1.0}) == std::vector<double>{3.5, 1.5, 3.5, 1.5});
}

TEST_CASE("spearman matches hand-derived values including ties", "[eval]") {
    CHECK(spearman({1.0, 2.0, 3.0, 4.0}, {2.0, 1.0, 4.0, 3.0}) == Catch::Approx(0.6).margin(1e-12));

    // Tied y-values: ranks become [1.5, 1.5, 3], correlation sqrt(3)/2.
    CHECK(spearman({1.0, 2.0, 3.0}, {5.0, 5.0, 9.0}) ==
          Catch::Approx(std::sqrt(3.0) / 2.0).margin(1e-12));

    // Monotone agreement and disagreement hit the bounds.
    const double up = spearman({1.0, 5.0, 9.0, 20.0}, {0.1, 0.2, 0.3, 0.4});
    CHECK(up >= 1.0 - 1e-12);
    CHECK(up <= 1.0);
    const double down = spearman({1.0, 5.0, 9.0, 20.0}, {0.4, 0.3, 0.2, 0.1});
    CHECK(down <= -1.0 + 1e-12);
    CHECK(down >= -1.0);
}

TEST_CASE("spearman equals Pearson of brute-force ranks over 10000 trials", "[eval]") {
    Rng rng(2026);
    int tie_trials = 0;
    for (int trial = 0; trial < 10000; ++trial) {
        const std::size_t n = 2 + rng.index(39);
        std::vector<double> x(n), y(n);
        const bool tie_prone = trial % 2 == 0;
        for (std::size_t i = 0; i < n; ++i) {
            x[i] = tie_prone ? static_cast<double>(rng.index(5)) : rng.uniform(-10.0, 10.0);
            y[i] = tie_prone ? static_cast<double>(rng.index(5)) : rng.uniform(-10.0, 10.0);
        }
        if (is_constant(x) || is_constant(y)) {
            REQUIRE_THROWS(spearman(x, y));
            continue;
        }
        if (tie_prone) ++tie_trials;

        const double got = spearman(x, y);
        const double want = oracle_pearson(oracle_ranks(x), oracle_ranks(y));
        REQUIRE(got == Catch::Approx(want).margin(1e-12));

        // Ranks are what matter: a strictly increasing transform changes nothing.
        std::vector<double> tx(n);
        for (std::size_t i = 0; i < n; ++i) tx[i] = x[i] * x[i] * x[i] + 2.0 * x[i];
        REQUIRE(spearman(tx, y) == got);

        // Symmetry.
        REQUIRE(spearman(y, x) == got);
    }
    CHECK(tie_trials > 1000);  // the tie-handling path was genuinely exercised
}

TEST_CASE("tie-free spearman matches the closed-form rank-difference formula", "[eval]") {
    Rng rng(404);
    for (int trial = 0; trial < 2000; ++trial) {
        const std::size_t n = 3 + rng.index(30);
        std::vector<double> x = test_util::random_vector(n, rng, -100.0, 100.0);
        std::vector<double> y = test_util::random_vector(n, rng, -100.0, 100.0);

        const auto rx = average_ranks(x), ry = average_ranks(y);
        // Continuous draws: ties have probability zero, but guard anyway.
        std::set<double> sx(x.begin(), x.end()), sy(y.begin(), y.end());
        if (sx.size() != n || sy.size() != n) continue;

        double d_sq = 0.0;
        for (std::size_t i = 0; i < n; ++i) d_sq += (rx[i] - ry[i]) * (rx[i] - ry[i]);
        const double nn = static_cast<double>(n);
        const double closed = 1.0 - 6.0 * d_sq / (nn * (nn * nn - 1.0));
        REQUIRE(spearman(x, y) == Catch::Approx(closed).margin(1e-12));
    }
}

TEST_CASE("cross-validation with the planted scorer is a perfect oracle", "[eval]") {
    const Dataset ds = generate_synthetic(100, 40, 4, 7);
    const FoldScorer planted = [](const std::vector<LabeledPair>&, const std::vector<LabeledPair>& test,
                                  int, std::uint64_t) {
        std::vector<double> scores;
        for (const LabeledPair& p : test) scores.push_back(planted_similarity(p));
        return scores;
    };

    const EvalReport report = evaluate_with_scorer(ds, 5, 123, planted);
    CHECK(report.dataset_name == "synthetic");
    REQUIRE(report.folds.size() == 5);
    for (const FoldResult& f : report.folds) {
        REQUIRE(f.valid);
        REQUIRE(f.spearman >= 1.0 - 1e-12);
        REQUIRE(f.spearman <= 1.0);
        REQUIRE(f.pearson >= 1.0 - 1e-12);
    }
    CHECK(report.avg_spearman >= 1.0 - 1e-12);
    CHECK(report.avg_pearson >= 1.0 - 1e-12);
    CHECK(report.seconds >= 0.0);

    // Averages are the plain mean over valid folds.
    double sp = 0.0, ss = 0.0;
    for (const FoldResult& f : report.folds) {
        sp += f.pearson;
        ss += f.spearman;
    }
    CHECK(report.avg_pearson == Catch::Approx(sp / 5.0).margin(1e-15));
    CHECK(report.avg_spearman == Catch::Approx(ss / 5.0).margin(1e-15));

    // Determinism: equality deliberately ignores wall-clock time.
    const EvalReport again = evaluate_with_scorer(ds, 5, 123, planted);
    CHECK(again == report);
}

TEST_CASE("k=2 on ten pairs yields exactly two folds covering everything", "[eval]") {
    const Dataset ds = generate_synthetic(10, 30, 3, 11);
    std::vector<std::size_t> seen_train, seen_test;
    std::vector<std::uint64_t> fold_seeds;
    const FoldScorer spy = [&](const std::vector<LabeledPair>& train, const std::vector<LabeledPair>& test,
                               int, std::uint64_t fold_seed) {
        seen_train.push_back(train.size());
        seen_test.push_back(test.size());
        fold_seeds.push_back(fold_seed);
        std::vector<double> scores;
        for (const LabeledPair& p : test) scores.push_back(planted_similarity(p));
        return scores;
    };
    const EvalReport report = evaluate_with_scorer(ds, 2, 9, spy);
    REQUIRE(report.folds.size() == 2);
    CHECK(report.folds[0].fold == 0);
    CHECK(report.folds[1].fold == 1);
    REQUIRE(seen_train.size() == 2);
    CHECK(seen_train[0] + seen_test[0] == 10);
    CHECK(seen_train[1] + seen_test[1] == 10);
    CHECK(seen_test[0] == 5);
    CHECK(seen_test[1] == 5);
    CHECK(fold_seeds[0] != fold_seeds[1]);  // per-fold derived seeds differ
}

TEST_CASE("folds with constant gold are flagged and excluded from averages", "[eval]") {
    Dataset ds;
    ds.name = "constants";
    ds.scale_min = 0.0;
    ds.scale_max = 5.0;
    for (int i = 0; i < 6; ++i) {
        LabeledPair p;
        p.text_a = "a" + std::to_string(i);
        p.text_b = "b" + std::to_string(i);
        p.gold = i == 0 ? 4.0 : 2.0;  // one odd pair; folds without it are constant
        ds.pairs.push_back(p);
    }
    const FoldScorer index_scorer = [](const std::vector<LabeledPair>&, const std::vector<LabeledPair>& test,
                                       int, std::uint64_t) {
        std::vector<double> scores;
        for (std::size_t i = 0; i < test.size(); ++i) scores.push_back(static_cast<double>(i));
        return scores;
    };

    const EvalReport report = evaluate_with_scorer(ds, 3, 77, index_scorer);
    REQUIRE(report.folds.size() == 3);
    int valid = 0;
    double vp = 0.0, vs = 0.0;
    for (const FoldResult& f : report.folds) {
        if (f.valid) {
            ++valid;
            vp = f.pearson;
            vs = f.spearman;
        } else {
            CHECK(f.pearson == 0.0);
            CHECK(f.spearman == 0.0);
        }
    }
    REQUIRE(valid == 1);  // only the fold containing the 4.0 pair survives
    CHECK(report.avg_pearson == vp);
    CHECK(report.avg_spearman == vs);

    // Entirely constant gold: no usable fold anywhere.
    for (LabeledPair& p : ds.pairs) p.gold = 2.0;
    CHECK_THROWS(evaluate_with_scorer(ds, 3, 77, index_scorer));
}

TEST_CASE("a scorer returning the wrong count is rejected", "[eval]") {
    const Dataset ds = generate_synthetic(12, 30, 3, 19);
    const FoldScorer bad = [](const std::vector<LabeledPair>&, const std::vector<LabeledPair>&, int,
                              std::uint64_t) { return std::vector<double>{1.0}; };
    CHECK_THROWS(evaluate_with_scorer(ds, 3, 5, bad));
}

TEST_CASE("model-based evaluation runs the full per-fold protocol deterministically", "[eval]") {
    const Dataset ds = generate_synthetic(30, 20, 3, 99);
    const EvalReport r1 = evaluate(ds, tiny_encoder(), tiny_train(), 3, 55, 3, {}, tiny_flow());
    REQUIRE(r1.folds.size() == 3);
    for (const FoldResult& f : r1.folds) {
        REQUIRE(f.valid);
        REQUIRE(std::abs(f.pearson) <= 1.0);
        REQUIRE(std::abs(f.spearman) <= 1.0);
    }
    const EvalReport r2 = evaluate(ds, tiny_encoder(), tiny_train(), 3, 55, 3, {}, tiny_flow());
    CHECK(r1 == r2);

    const EvalReport r3 = evaluate(ds, tiny_encoder(), tiny_train(), 3, 56, 3, {}, tiny_flow());
    CHECK_FALSE(r1 == r3);  // the seed reshuffles folds and reinitializes weights
}

TEST_CASE("eval report CSV round-trips including invalid folds", "[eval]") {
    EvalReport r;
    r.dataset_name = "conference titles";
    r.config_fingerprint = "00ff00ff00ff00ff";
    r.folds.push_back({0, 0.25, 0.5, true});
    r.folds.push_back({1, 0.0, 0.0, false});
    r.folds.push_back({2, -0.125, 0.0625, true});
    r.avg_pearson = 0.0625;
    r.avg_spearman = 0.28125;
    r.seconds = 123.0;  // deliberately not serialized

    const std::string csv = eval_report_csv(r);
    const EvalReport back = parse_eval_report_csv(csv);
    CHECK(back == r);
    CHECK(back.seconds == 0.0);
    CHECK(eval_report_csv(back) == csv);

    CHECK_THROWS(parse_eval_report_csv("fold,pearson,spearman,valid\n0,0.5,0.5,1\n"));  // no average row
    CHECK_THROWS(parse_eval_report_csv("# config: x\nfold,pearson,spearman,valid\njunk\naverage,0,0,\n"));
}

TEST_CASE("sweep serialization round-trips in both formats", "[eval]") {
    SweepResult s;
    s.points = {{8, 0.41}, {16, 0.4375}, {32, 0.5}, {64, 0.46875}};
    const std::string csv = sweep_csv(s, "abcdef0123456789");
    CHECK(csv.find("# config: abcdef0123456789") != std::string::npos);
    CHECK(parse_sweep_csv(csv) == s);

    const std::string plot = sweep_plot_data(s, "abcdef0123456789");
    const auto lines = split_lines(plot);
    REQUIRE(lines.size() == 5);
    CHECK(lines[0] == "# config: abcdef0123456789");
    CHECK(lines[1] == "8 0.41");
    CHECK(lines[3] == "32 0.5");

    CHECK_THROWS(parse_sweep_csv("batch_size,spearman\n32\n"));
}

TEST_CASE("batch size sweep validates sizes and evaluates each point", "[eval]") {
    const Dataset ds = generate_synthetic(30, 20, 3, 41);

    CHECK_THROWS(batch_size_sweep(ds, tiny_encoder(), tiny_train(), {}, 3, 1, 3, {}, tiny_flow()));
    CHECK_THROWS(batch_size_sweep(ds, tiny_encoder(), tiny_train(), {8, 8}, 3, 1, 3, {}, tiny_flow()));
    CHECK_THROWS(batch_size_sweep(ds, tiny_encoder(), tiny_train(), {8, 4}, 3, 1, 3, {}, tiny_flow()));
    // min train partition = 30 - ceil(30/3) = 20
    CHECK_THROWS(batch_size_sweep(ds, tiny_encoder(), tiny_train(), {4, 21}, 3, 1, 3, {}, tiny_flow()));

    const SweepResult s = batch_size_sweep(ds, tiny_encoder(), tiny_train(), {4, 8}, 3, 1, 3, {}, tiny_flow());
    REQUIRE(s.points.size() == 2);
    CHECK(s.points[0].first == 4);
    CHECK(s.points[1].first == 8);
    for (const auto& [b, v] : s.points) {
        REQUIRE(std::abs(v) <= 1.0);
    }

    const SweepResult again =
        batch_size_sweep(ds, tiny_encoder(), tiny_train(), {4, 8}, 3, 1, 3, {}, tiny_flow());
    CHECK(again == s);
}
