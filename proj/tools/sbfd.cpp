// Command-line front end for the similarity pipeline: keyword extraction,
// training, cross-validated evaluation, scoring, and the batch-size sweep.
// All outputs embed the run-config fingerprint and are byte-deterministic
// given identical inputs and seeds.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sbfd/checkpoint.hpp"
#include "sbfd/config.hpp"
#include "sbfd/corpus.hpp"
#include "sbfd/eval.hpp"
#include "sbfd/features.hpp"
#include "sbfd/siamese.hpp"

namespace {

using namespace sbfd;

struct GlobalFlags {
    std::string config_path;
    std::string out_dir = ".";
    std::optional<long> seed;
    std::string use_domain_features;  // "", "true" or "false"
};

RunConfig effective_config(const GlobalFlags& g) {
    RunConfig cfg = g.config_path.empty() ? RunConfig{} : RunConfig::load(g.config_path);
    if (g.seed) cfg.set("seed", std::to_string(*g.seed));
    if (!g.use_domain_features.empty()) cfg.set("use_domain_features", g.use_domain_features);
    return cfg;
}

Dataset load_dataset(const RunConfig& cfg) {
    const std::string kind = cfg.get("dataset_kind");
    if (kind == "synthetic") {
        Dataset ds = generate_synthetic(static_cast<int>(cfg.get_int("synthetic_pairs")),
                                        static_cast<int>(cfg.get_int("synthetic_vocab")),
                                        static_cast<int>(cfg.get_int("synthetic_domains")),
                                        Rng::derive(cfg.get_seed("seed"), 11));
        ds.name = cfg.get("dataset_name");
        return ds;
    }
    if (kind == "tsv") {
        const std::string path = cfg.get("dataset_path");
        if (path.empty()) throw std::runtime_error("config: dataset_kind = tsv requires dataset_path");
        const double lo = cfg.get_double("scale_min");
        const double hi = cfg.get_double("scale_max");
        // Peek at the first data row: five tab-separated fields means the
        // domain-annotated layout, otherwise the plain (a, b, gold) layout.
        for (std::string_view raw : split_lines(read_file(path))) {
            const std::string_view line = trim(raw);
            if (line.empty() || line.starts_with("#")) continue;
            Dataset ds = split(line, '\t').size() == 5 ? load_conference_tsv(path, lo, hi)
                                                       : load_sts_tsv(path, lo, hi);
            ds.name = cfg.get("dataset_name");
            return ds;
        }
        throw std::runtime_error("dataset file has no data rows: " + path);
    }
    throw std::runtime_error("config: dataset_kind must be 'synthetic' or 'tsv', got '" + kind + "'");
}

Gazetteer load_gazetteer_if_any(const RunConfig& cfg) {
    const std::string path = cfg.get("gazetteer_path");
    return path.empty() ? Gazetteer{} : load_gazetteer(path);
}

EncoderConfig encoder_template(const RunConfig& cfg) {
    EncoderConfig e;
    e.model_dim = static_cast<int>(cfg.get_int("model_dim"));
    e.n_heads = static_cast<int>(cfg.get_int("n_heads"));
    e.ffn_dim = static_cast<int>(cfg.get_int("ffn_dim"));
    e.n_layers = static_cast<int>(cfg.get_int("n_layers"));
    e.max_len = static_cast<int>(cfg.get_int("max_len"));
    e.vocab_size = 4;  // placeholder until the vocabulary is built
    return e;
}

TrainConfig train_config(const RunConfig& cfg) {
    TrainConfig t;
    t.batch_size = static_cast<int>(cfg.get_int("batch_size"));
    t.learning_rate = cfg.get_double("learning_rate");
    t.epochs = static_cast<int>(cfg.get_int("epochs"));
    t.seed = cfg.get_seed("seed");
    t.max_len = static_cast<int>(cfg.get_int("max_len"));
    t.use_domain_features = cfg.get_bool("use_domain_features");
    t.validate();
    return t;
}

FlowConfig flow_config(const RunConfig& cfg) {
    FlowConfig f;
    f.n_layers = static_cast<int>(cfg.get_int("flow_layers"));
    f.hidden_dim = static_cast<int>(cfg.get_int("flow_hidden"));
    f.s_max = cfg.get_double("flow_s_max");
    f.learning_rate = cfg.get_double("flow_learning_rate");
    f.epochs = static_cast<int>(cfg.get_int("flow_epochs"));
    f.batch_size = static_cast<int>(cfg.get_int("flow_batch_size"));
    f.validate();
    return f;
}

std::string out_path(const GlobalFlags& g, const std::string& name) {
    std::filesystem::create_directories(g.out_dir);
    return (std::filesystem::path(g.out_dir) / name).string();
}

// Scoring input: one pair per line, tab-separated. Accepted layouts per row:
// (a, b), (a, b, gold) or (a, domain_a, b, domain_b, gold); gold is ignored.
std::vector<LabeledPair> load_score_pairs(const std::string& path) {
    std::vector<LabeledPair> pairs;
    const std::string text = read_file(path);
    const auto lines = split_lines(text);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const std::string_view line = lines[i];
        if (trim(line).empty() || trim(line).starts_with("#")) continue;
        const auto f = split(line, '\t');
        LabeledPair p;
        if (f.size() == 2 || f.size() == 3) {
            p.text_a = std::string(f[0]);
            p.text_b = std::string(f[1]);
        } else if (f.size() == 5) {
            p.text_a = std::string(f[0]);
            p.domain_a = std::string(f[1]);
            p.text_b = std::string(f[2]);
            p.domain_b = std::string(f[3]);
        } else {
            throw std::runtime_error(path + ":" + std::to_string(i + 1) +
                                     ": expected 2, 3 or 5 tab-separated fields");
        }
        if (trim(p.text_a).empty() || trim(p.text_b).empty())
            throw std::runtime_error(path + ":" + std::to_string(i + 1) + ": empty text field");
        pairs.push_back(std::move(p));
    }
    if (pairs.empty()) throw std::runtime_error(path + ": no pairs to score");
    return pairs;
}

int cmd_keywords(const GlobalFlags& g, const std::string& input, int k, std::string out_file) {
    const RunConfig cfg = effective_config(g);
    if (out_file.empty()) out_file = out_path(g, "keywords.tsv");
    const std::string text = read_file(input);

    // One document per line (comments and blank lines skipped); tabs within a
    // line are ordinary whitespace to the tokenizer. Document ids are 1-based
    // positions among the kept lines.
    std::vector<std::vector<std::string>> docs;
    for (std::string_view line : split_lines(text)) {
        if (trim(line).empty() || trim(line).starts_with("#")) continue;
        docs.push_back(tokenize(line));
    }
    if (docs.empty()) throw std::runtime_error(input + ": no documents");
    const TfIdfModel model = fit_tfidf(docs);

    std::string out = "# config: " + cfg.fingerprint() + "\n";
    for (std::size_t d = 0; d < docs.size(); ++d) {
        if (docs[d].empty()) continue;
        for (const Keyword& kw : extract_keywords(model, docs[d], k))
            out += std::to_string(d + 1) + "\t" + kw.term + "\t" + format_double(kw.weight) + "\n";
    }
    write_file(out_file, out);
    std::cout << "wrote " << out_file << "\n";
    return 0;
}

int cmd_train(const GlobalFlags& g) {
    const RunConfig cfg = effective_config(g);
    const Dataset ds = load_dataset(cfg);
    const Gazetteer gaz = load_gazetteer_if_any(cfg);
    const TrainConfig tc = train_config(cfg);
    const FlowConfig fc = flow_config(cfg);
    const int k = static_cast<int>(cfg.get_int("cv_folds"));
    const int fold = static_cast<int>(cfg.get_int("train_fold"));
    const FoldPlan plan = k_fold_split(ds, k, Rng::derive(tc.seed, 7));

    std::vector<LabeledPair> train_part;
    for (std::size_t i = 0; i < ds.pairs.size(); ++i)
        if (plan.assignments[i] != fold) train_part.push_back(ds.pairs[i]);

    SiameseModel model =
        init_siamese(train_part, encoder_template(cfg), tc, static_cast<int>(cfg.get_int("keyword_k")), gaz);
    TrainResult result = train(std::move(model), ds, plan, fold, tc, fc);

    const std::string ckpt_path = out_path(g, "checkpoint.bin");
    write_file(ckpt_path, save_model(result.model, tc.use_domain_features, cfg.fingerprint()));

    std::string loss_csv = "# config: " + cfg.fingerprint() + "\n";
    loss_csv += "epoch,loss,clipped\n";
    for (std::size_t e = 0; e < result.loss_history.size(); ++e)
        loss_csv += std::to_string(e) + "," + format_double(result.loss_history[e]) + "," +
                    std::to_string(result.clipped_batches[e]) + "\n";
    const std::string loss_path = out_path(g, "loss.csv");
    write_file(loss_path, loss_csv);

    std::string flow_csv = "# config: " + cfg.fingerprint() + "\n";
    flow_csv += "epoch,nll\n";
    for (std::size_t e = 0; e < result.flow_history.size(); ++e)
        flow_csv += std::to_string(e) + "," + format_double(result.flow_history[e]) + "\n";
    const std::string flow_path = out_path(g, "flow_loss.csv");
    write_file(flow_path, flow_csv);

    if (!result.loss_history.empty())
        std::cout << "final loss: " << format_double(result.loss_history.back()) << "\n";
    else
        std::cout << "final loss: n/a (epochs = 0)\n";
    std::cout << "wrote " << ckpt_path << "\n";
    std::cout << "wrote " << loss_path << "\n";
    std::cout << "wrote " << flow_path << "\n";
    return 0;
}

int cmd_eval(const GlobalFlags& g) {
    const RunConfig cfg = effective_config(g);
    const Dataset ds = load_dataset(cfg);
    const int k = static_cast<int>(cfg.get_int("cv_folds"));
    const std::uint64_t seed = cfg.get_seed("seed");
    const std::string scorer_kind = cfg.get("eval_scorer");

    EvalReport report;
    if (scorer_kind == "planted") {
        report = evaluate_with_scorer(ds, k, seed,
                                      [](const std::vector<LabeledPair>&, const std::vector<LabeledPair>& test,
                                         int, std::uint64_t) {
                                          std::vector<double> s;
                                          s.reserve(test.size());
                                          for (const LabeledPair& p : test) s.push_back(planted_similarity(p));
                                          return s;
                                      });
    } else if (scorer_kind == "model") {
        report = evaluate(ds, encoder_template(cfg), train_config(cfg), k, seed,
                          static_cast<int>(cfg.get_int("keyword_k")), load_gazetteer_if_any(cfg),
                          flow_config(cfg));
    } else {
        throw std::runtime_error("config: eval_scorer must be 'model' or 'planted', got '" + scorer_kind + "'");
    }
    report.config_fingerprint = cfg.fingerprint();

    const std::string path = out_path(g, "eval_report.csv");
    write_file(path, eval_report_csv(report));
    std::cout << "average pearson:  " << format_double(report.avg_pearson) << "\n";
    std::cout << "average spearman: " << format_double(report.avg_spearman) << "\n";
    std::cout << "elapsed seconds:  " << format_double(report.seconds) << "\n";
    std::cout << "wrote " << path << "\n";
    return 0;
}

int cmd_score(const GlobalFlags& g, const std::string& ckpt_path, const std::string& pairs_path,
              std::string out_file) {
    if (out_file.empty()) out_file = out_path(g, "scores.csv");
    LoadedModel loaded = load_model(read_file(ckpt_path));
    const std::vector<LabeledPair> pairs = load_score_pairs(pairs_path);

    TrainConfig sc;
    sc.use_domain_features =
        g.use_domain_features.empty() ? loaded.use_domain_features : (g.use_domain_features == "true");
    sc.max_len = loaded.model.enc_cfg.max_len;
    const std::vector<double> scores = score_pairs(loaded.model, pairs, sc);

    std::string out = "# config: " + loaded.config_fingerprint + "\n";
    out += "index,score\n";
    for (std::size_t i = 0; i < scores.size(); ++i)
        out += std::to_string(i) + "," + format_double(scores[i]) + "\n";
    write_file(out_file, out);
    std::cout << "wrote " << out_file << "\n";
    return 0;
}

int cmd_sweep(const GlobalFlags& g, const std::string& sizes_flag) {
    RunConfig cfg = effective_config(g);
    if (!sizes_flag.empty()) cfg.set("sweep_sizes", sizes_flag);
    const std::vector<int> sizes = cfg.get_int_list("sweep_sizes");
    const Dataset ds = load_dataset(cfg);
    const SweepResult result =
        batch_size_sweep(ds, encoder_template(cfg), train_config(cfg), sizes,
                         static_cast<int>(cfg.get_int("cv_folds")), cfg.get_seed("seed"),
                         static_cast<int>(cfg.get_int("keyword_k")), load_gazetteer_if_any(cfg),
                         flow_config(cfg));

    const std::string csv_path = out_path(g, "sweep.csv");
    const std::string dat_path = out_path(g, "sweep.dat");
    write_file(csv_path, sweep_csv(result, cfg.fingerprint()));
    write_file(dat_path, sweep_plot_data(result, cfg.fingerprint()));
    std::cout << "wrote " << csv_path << "\n";
    std::cout << "wrote " << dat_path << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Semantic similarity pipeline: fused-feature Siamese encoder with flow standardization"};
    app.require_subcommand(1);

    GlobalFlags g;
    long seed_value = 0;
    auto* seed_opt = app.add_option("--seed", seed_value, "root seed (overrides the config)");
    app.add_option("--config", g.config_path, "run configuration file (key = value lines)");
    app.add_option("--out-dir", g.out_dir, "directory for output artifacts")->capture_default_str();
    app.add_option("--use-domain-features", g.use_domain_features,
                   "override domain-feature fusion (true/false)")
        ->check(CLI::IsMember({"true", "false"}));

    auto* kw = app.add_subcommand("keywords", "top-k keywords per document of a corpus file");
    kw->fallthrough();
    std::string kw_input, kw_out;
    int kw_k = 3;
    kw->add_option("--input", kw_input, "corpus file, one document per line")->required();
    kw->add_option("-k,--k", kw_k, "keywords per document")->check(CLI::Range(1, 1 << 20));
    kw->add_option("--out", kw_out, "output TSV (default <out-dir>/keywords.tsv)");

    auto* tr = app.add_subcommand("train", "train a model and write checkpoint + loss history");
    tr->fallthrough();

    auto* ev = app.add_subcommand("eval", "cross-validated correlation report");
    ev->fallthrough();

    auto* sc = app.add_subcommand("score", "score pairs with a saved checkpoint");
    sc->fallthrough();
    std::string sc_ckpt, sc_pairs, sc_out;
    sc->add_option("--checkpoint", sc_ckpt, "model checkpoint file")->required();
    sc->add_option("--pairs", sc_pairs, "TSV of pairs to score")->required();
    sc->add_option("--out", sc_out, "output CSV (default <out-dir>/scores.csv)");

    auto* sw = app.add_subcommand("sweep", "evaluate across a grid of batch sizes");
    sw->fallthrough();
    std::string sw_sizes;
    sw->add_option("--sizes", sw_sizes, "comma-separated batch sizes (overrides the config)");

    CLI11_PARSE(app, argc, argv);
    if (*seed_opt) {
        if (seed_value < 0) {
            std::cerr << "error: --seed must be non-negative\n";
            return 1;
        }
        g.seed = seed_value;
    }

    try {
        if (*kw) return cmd_keywords(g, kw_input, kw_k, kw_out);
        if (*tr) return cmd_train(g);
        if (*ev) return cmd_eval(g);
        if (*sc) return cmd_score(g, sc_ckpt, sc_pairs, sc_out);
        if (*sw) return cmd_sweep(g, sw_sizes);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    std::cerr << "error: no subcommand\n";
    return 1;
}
