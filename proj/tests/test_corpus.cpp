#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "sbfd/corpus.hpp"
#include "sbfd/util.hpp"

using namespace sbfd;
using test_util::TempFile;

TEST_CASE("load_sts_tsv parses three-field lines and skips comments", "[corpus]") {
    TempFile tmp("sts");
    write_file(tmp.path,
               "# comment line\n"
               "a man is playing a guitar\ta person plays guitar\t4.8\n"
               "\n"
               "cold brew coffee\tquantum gravity\t0.2\textra-ignored\n");
    const Dataset ds = load_sts_tsv(tmp.path, 0.0, 5.0);
    REQUIRE(ds.pairs.size() == 2);
    CHECK(ds.scale_min == 0.0);
    CHECK(ds.scale_max == 5.0);
    CHECK(ds.pairs[0].text_a == "a man is playing a guitar");
    CHECK(ds.pairs[0].text_b == "a person plays guitar");
    CHECK(ds.pairs[0].gold == 4.8);
    CHECK_FALSE(ds.pairs[0].domain_a.has_value());
    CHECK_FALSE(ds.pairs[0].domain_b.has_value());
    CHECK(ds.pairs[1].gold == 0.2);
}

TEST_CASE("load_sts_tsv reports the offending line on errors", "[corpus]") {
    TempFile tmp("sts_err");

    SECTION("gold outside the scale") {
        write_file(tmp.path, "ok one\tok two\t3.0\nbad one\tbad two\t6.0\n");
        try {
            load_sts_tsv(tmp.path, 0.0, 5.0);
            FAIL("expected an exception");
        } catch (const std::exception& e) {
            const std::string msg = e.what();
            CHECK(msg.find(":2:") != std::string::npos);
            CHECK(msg.find("6") != std::string::npos);
        }
    }
    SECTION("too few fields") {
        write_file(tmp.path, "only two fields\t1.0\n");
        CHECK_THROWS(load_sts_tsv(tmp.path, 0.0, 5.0));
    }
    SECTION("empty text") {
        write_file(tmp.path, "\tright side\t1.0\n");
        CHECK_THROWS(load_sts_tsv(tmp.path, 0.0, 5.0));
    }
    SECTION("non-numeric gold") {
        write_file(tmp.path, "a\tb\thigh\n");
        CHECK_THROWS(load_sts_tsv(tmp.path, 0.0, 5.0));
    }
    SECTION("inverted scale bounds rejected up front") {
        write_file(tmp.path, "a\tb\t1.0\n");
        CHECK_THROWS(load_sts_tsv(tmp.path, 5.0, 0.0));
    }
}

TEST_CASE("load_conference_tsv parses exactly five fields per line", "[corpus]") {
    TempFile tmp("conf");
    write_file(tmp.path,
               "deep residual learning for image recognition\tcv\t"
               "identity mappings in residual networks\tcv\t4.5\n"
               "attention based translation\tnlp\tprotein folding dynamics\tbio\t0.5\n");
    const Dataset ds = load_conference_tsv(tmp.path, 0.0, 5.0);
    REQUIRE(ds.pairs.size() == 2);
    CHECK(ds.pairs[0].text_a == "deep residual learning for image recognition");
    CHECK(ds.pairs[0].domain_a == "cv");
    CHECK(ds.pairs[0].text_b == "identity mappings in residual networks");
    CHECK(ds.pairs[0].domain_b == "cv");
    CHECK(ds.pairs[0].gold == 4.5);
    CHECK(ds.pairs[1].domain_a == "nlp");
    CHECK(ds.pairs[1].domain_b == "bio");

    SECTION("four fields is an error, not a fallback") {
        write_file(tmp.path, "a title\tcv\tanother title\t3.0\n");
        CHECK_THROWS(load_conference_tsv(tmp.path, 0.0, 5.0));
    }
    SECTION("six fields is an error") {
        write_file(tmp.path, "a\tcv\tb\tcv\t3.0\tx\n");
        CHECK_THROWS(load_conference_tsv(tmp.path, 0.0, 5.0));
    }
}

TEST_CASE("dataset round-trips through TSV serialization", "[corpus]") {
    SECTION("with domains (five fields)") {
        Dataset ds = generate_synthetic(40, 30, 3, 9);
        TempFile tmp("rt5");
        save_tsv(ds, tmp.path);
        const Dataset back = load_conference_tsv(tmp.path, ds.scale_min, ds.scale_max);
        CHECK(back.pairs == ds.pairs);
        CHECK(back.scale_min == ds.scale_min);
        CHECK(back.scale_max == ds.scale_max);

        // Serializing the reloaded dataset reproduces the same bytes.
        CHECK(dataset_to_tsv(back) == dataset_to_tsv(ds));
    }
    SECTION("without domains (three fields)") {
        Dataset ds;
        ds.scale_min = 0.0;
        ds.scale_max = 1.0;
        ds.pairs.push_back({"alpha beta", "beta gamma", std::nullopt, std::nullopt, 0.75});
        ds.pairs.push_back({"one", "two", std::nullopt, std::nullopt, 0.0});
        TempFile tmp("rt3");
        save_tsv(ds, tmp.path);
        const Dataset back = load_sts_tsv(tmp.path, 0.0, 1.0);
        CHECK(back.pairs == ds.pairs);
    }
}

TEST_CASE("normalize_gold maps the scale onto [0,1]", "[corpus]") {
    CHECK(normalize_gold(0.0, 0.0, 5.0) == 0.0);
    CHECK(normalize_gold(5.0, 0.0, 5.0) == 1.0);
    CHECK(normalize_gold(2.5, 0.0, 5.0) == 0.5);
    CHECK(normalize_gold(4.8, 0.0, 5.0) == Catch::Approx(0.96).epsilon(1e-15));
    CHECK(normalize_gold(-1.0, -1.0, 1.0) == 0.0);
    CHECK(normalize_gold(0.0, -1.0, 1.0) == 0.5);

    CHECK_THROWS(normalize_gold(5.1, 0.0, 5.0));
    CHECK_THROWS(normalize_gold(-0.1, 0.0, 5.0));
    CHECK_THROWS(normalize_gold(1.0, 2.0, 2.0));  // zero-width scale

    // Monotone: larger gold never maps lower.
    Rng rng(3);
    for (int i = 0; i < 500; ++i) {
        double a = rng.uniform(0.0, 5.0), b = rng.uniform(0.0, 5.0);
        if (a > b) std::swap(a, b);
        CHECK(normalize_gold(a, 0.0, 5.0) <= normalize_gold(b, 0.0, 5.0));
    }
}

TEST_CASE("k_fold_split partitions all pairs into balanced folds", "[corpus]") {
    Rng rng(17);
    for (int trial = 0; trial < 60; ++trial) {
        const int n = 2 + static_cast<int>(rng.index(60));
        const int k = 2 + static_cast<int>(rng.index(static_cast<std::size_t>(n - 1)));
        Dataset ds = generate_synthetic(n, 20, 2, 1000 + static_cast<std::uint64_t>(trial));
        const FoldPlan plan = k_fold_split(ds, k, 77);

        REQUIRE(plan.k == k);
        REQUIRE(plan.assignments.size() == static_cast<std::size_t>(n));
        std::vector<int> sizes(static_cast<std::size_t>(k), 0);
        for (int f : plan.assignments) {
            REQUIRE(f >= 0);
            REQUIRE(f < k);
            ++sizes[static_cast<std::size_t>(f)];
        }
        const int lo = *std::min_element(sizes.begin(), sizes.end());
        const int hi = *std::max_element(sizes.begin(), sizes.end());
        CHECK(lo >= 1);
        CHECK(hi - lo <= 1);
    }
}

TEST_CASE("k_fold_split is seed-deterministic and validates k", "[corpus]") {
    const Dataset ds = generate_synthetic(24, 20, 2, 5);
    const FoldPlan a = k_fold_split(ds, 4, 123);
    const FoldPlan b = k_fold_split(ds, 4, 123);
    CHECK(a.assignments == b.assignments);

    const FoldPlan c = k_fold_split(ds, 4, 124);
    CHECK(a.assignments != c.assignments);

    CHECK_THROWS(k_fold_split(ds, 1, 1));
    CHECK_THROWS(k_fold_split(ds, 0, 1));
    CHECK_THROWS(k_fold_split(ds, 25, 1));
    CHECK_NOTHROW(k_fold_split(ds, 24, 1));  // k == n is allowed
}

TEST_CASE("fold_plan_csv lists one assignment per pair", "[corpus]") {
    const Dataset ds = generate_synthetic(5, 20, 2, 5);
    const FoldPlan plan = k_fold_split(ds, 2, 9);
    const std::string csv = fold_plan_csv(plan);
    const auto lines = split_lines(csv);
    REQUIRE(lines.size() == 6);
    CHECK(lines[0] == "index,fold");
    for (std::size_t i = 0; i < 5; ++i) {
        const auto fields = split(lines[i + 1], ',');
        REQUIRE(fields.size() == 2);
        CHECK(parse_long(fields[0], "index") == static_cast<long>(i));
        CHECK(parse_long(fields[1], "fold") == plan.assignments[i]);
    }
}

TEST_CASE("planted_similarity encodes overlap and domain agreement", "[corpus]") {
    LabeledPair p;
    p.text_a = "alpha beta gamma";
    p.text_b = "alpha beta gamma";
    p.domain_a = "cv";
    p.domain_b = "cv";
    CHECK(planted_similarity(p) == 1.0);  // identical multiset, same domain

    p.domain_b = "nlp";
    CHECK(planted_similarity(p) == Catch::Approx(0.7).epsilon(1e-15));

    p.text_b = "delta epsilon";
    CHECK(planted_similarity(p) == 0.0);  // disjoint tokens, different domain

    p.domain_b = "cv";
    CHECK(planted_similarity(p) == Catch::Approx(0.3).epsilon(1e-15));

    // Half overlap, same domain: 0.7 * (1/3) + 0.3.
    p.text_a = "a b";
    p.text_b = "b c";
    CHECK(planted_similarity(p) == Catch::Approx(0.7 / 3.0 + 0.3).epsilon(1e-15));
}

TEST_CASE("generate_synthetic is deterministic and self-consistent", "[corpus]") {
    const Dataset a = generate_synthetic(120, 40, 4, 2024);
    const Dataset b = generate_synthetic(120, 40, 4, 2024);
    CHECK(a == b);

    const Dataset c = generate_synthetic(120, 40, 4, 2025);
    CHECK(a.pairs != c.pairs);

    CHECK(a.scale_min == 0.0);
    CHECK(a.scale_max == 5.0);
    REQUIRE(a.pairs.size() == 120);

    bool saw_same_domain = false, saw_diff_domain = false;
    for (const LabeledPair& p : a.pairs) {
        REQUIRE(!p.text_a.empty());
        REQUIRE(!p.text_b.empty());
        REQUIRE(p.domain_a.has_value());
        REQUIRE(p.domain_b.has_value());
        REQUIRE(p.gold >= 0.0);
        REQUIRE(p.gold <= 5.0);
        // The planted rule reproduces every gold label exactly.
        REQUIRE(p.gold == a.scale_max * planted_similarity(p));
        saw_same_domain = saw_same_domain || (*p.domain_a == *p.domain_b);
        saw_diff_domain = saw_diff_domain || (*p.domain_a != *p.domain_b);
    }
    CHECK(saw_same_domain);
    CHECK(saw_diff_domain);

    CHECK_THROWS(generate_synthetic(0, 40, 4, 1));
    CHECK_THROWS(generate_synthetic(10, 0, 4, 1));
    CHECK_THROWS(generate_synthetic(10, 40, 0, 1));
}
