#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ijat/attribution.hpp"
#include "ijat/attribution_io.hpp"
#include "ijat/dataset.hpp"
#include "ijat/model_io.hpp"
#include "ijat/probes.hpp"
#include "ijat/svg.hpp"
#include "ijat/synth.hpp"
#include "ijat/training.hpp"

namespace ijat::cli {

namespace fs = std::filesystem;

inline std::string default_out_dir() {
    if (const char* env = std::getenv("IJAT_OUT_DIR")) {
        if (*env) return env;
    }
    return "ijat_out";
}

inline fs::path ensure_dir(const std::string& dir) {
    fs::path p(dir);
    fs::create_directories(p);
    return p;
}

// Written files are re-read and checked against their schema before the
// command reports success.
inline void validate_json_file(const fs::path& path,
                               const std::vector<std::string>& required) {
    std::ifstream in(path);
    if (!in) throw IoError("output missing: " + path.string());
    nlohmann::json j = nlohmann::json::parse(in, nullptr, true);
    for (const std::string& key : required) {
        if (!j.contains(key)) {
            throw IoError("output " + path.string() + " lacks key '" + key +
                          "'");
        }
    }
}

inline void write_report(const ProbeReport& report, const fs::path& dir) {
    fs::path report_path = dir / (report.probe + "_report.json");
    write_text_file(report_path.string(), report.dump() + "\n");
    validate_json_file(report_path, {"schema_version", "probe", "parameters",
                                     "items", "aggregates"});
    for (const auto& [name, series] : report.plot_data.items()) {
        if (!series.is_object()) continue;
        std::ostringstream os;
        std::vector<double> xs_num, ys_num;
        bool bars = false;
        if (series.contains("x") && series.contains("y")) {
            os << "x,y\n";
            const auto& xs = series["x"];
            const auto& ys = series["y"];
            for (std::size_t i = 0; i < xs.size() && i < ys.size(); ++i) {
                os << detail::csv_num(xs[i].get<double>()) << ','
                   << detail::csv_num(ys[i].get<double>()) << '\n';
                xs_num.push_back(xs[i].get<double>());
                ys_num.push_back(ys[i].get<double>());
            }
            bars = name.find("hist") != std::string::npos;
        } else if (series.contains("labels") && series.contains("y")) {
            os << "label,y\n";
            const auto& ls = series["labels"];
            const auto& ys = series["y"];
            for (std::size_t i = 0; i < ls.size() && i < ys.size(); ++i) {
                os << detail::csv_field(ls[i].get<std::string>()) << ','
                   << detail::csv_num(ys[i].get<double>()) << '\n';
                xs_num.push_back(static_cast<double>(i));
                ys_num.push_back(ys[i].get<double>());
            }
            bars = true;
        } else {
            continue;
        }
        write_text_file((dir / (report.probe + "_" + name + ".csv")).string(),
                        os.str());
        write_text_file((dir / (report.probe + "_" + name + ".svg")).string(),
                        render_series_svg(report.probe + ": " + name, xs_num,
                                          ys_num, bars));
    }
    std::cout << "wrote " << report_path.string() << "\n";
}

inline int parse_layer_flag(const std::string& layer, const EncoderConfig& c) {
    if (layer.empty() || layer == "default") {
        return -1;  // second-to-last block
    }
    if (layer == "pooled") return c.num_layers;
    try {
        return std::stoi(layer);
    } catch (const std::exception&) {
        throw ConfigError("bad --layer value '" + layer +
                          "' (integer or 'pooled')");
    }
}

inline AttributionMode parse_mode_flag(const std::string& mode,
                                       const EncoderConfig& c) {
    if (mode == "exact") return AttributionMode::kExact;
    if (mode == "approximate" || mode == "approx") {
        return AttributionMode::kApproximate;
    }
    if (mode == "auto") {
        return c.shift_mode == ShiftMode::kReferenceShift
                   ? AttributionMode::kExact
                   : AttributionMode::kApproximate;
    }
    throw ConfigError("bad --mode value '" + mode + "'");
}

// ---- gen-corpus -----------------------------------------------------------

struct GenCorpusArgs {
    std::string out;
    std::size_t size = 1000;
    std::uint64_t seed = 0;
    bool header = false;
};

inline int cmd_gen_corpus(const GenCorpusArgs& args) {
    PairDataset ds = generate_synthetic_corpus(args.seed, args.size);
    fs::path out(args.out);
    fs::path base = out.parent_path() / out.stem();
    fs::create_directories(out.parent_path().empty() ? "."
                                                     : out.parent_path());
    save_pairs_tsv(ds.all(), out.string(), args.header);
    save_pairs_tsv(ds.train, base.string() + ".train.tsv", args.header);
    save_pairs_tsv(ds.dev, base.string() + ".dev.tsv", args.header);
    save_pairs_tsv(ds.test, base.string() + ".test.tsv", args.header);
    std::cout << "wrote " << out.string() << " (" << ds.size() << " pairs; "
              << ds.train.size() << "/" << ds.dev.size() << "/"
              << ds.test.size() << " train/dev/test)\n";
    return 0;
}

// ---- train ------------------------------------------------------------------

struct TrainArgs {
    std::string data;
    std::string dev;
    std::string out;
    bool header = false;
    int epochs = 5;
    int batch_size = 16;
    double learning_rate = 1e-3;
    double weight_decay = 0.1;
    double warmup = 0.10;
    std::uint64_t seed = 0;
    std::string shift = "none";
    std::string head = "cosine";
    int layers = 4;
    int dim = 32;
    int heads = 4;
    int ffn = 64;
    int max_seq_len = 64;
};

inline int cmd_train(const TrainArgs& args) {
    std::vector<PairRecord> train_records =
        load_pairs_tsv(args.data, args.header);
    PairDataset ds;
    if (!args.dev.empty()) {
        ds.train = std::move(train_records);
        ds.dev = load_pairs_tsv(args.dev, args.header);
    } else {
        for (std::size_t i = 0; i < train_records.size(); ++i) {
            (i % 10 == 9 ? ds.dev : ds.train)
                .push_back(std::move(train_records[i]));
        }
    }
    if (ds.train.empty()) throw ConfigError("train: no training records");

    std::vector<std::string> sentences;
    for (const PairRecord& r : ds.train) {
        sentences.push_back(r.sentence_a);
        sentences.push_back(r.sentence_b);
    }
    Vocab vocab = build_vocab(sentences);

    EncoderConfig config;
    config.num_layers = args.layers;
    config.model_dim = args.dim;
    config.num_heads = args.heads;
    config.ffn_dim = args.ffn;
    config.max_seq_len = args.max_seq_len;
    config.head = args.head == "dot" ? SimilarityHead::kDot
                                     : SimilarityHead::kCosine;
    if (args.shift == "reference") {
        config.shift_mode = ShiftMode::kReferenceShift;
    } else if (args.shift == "none") {
        config.shift_mode = ShiftMode::kNone;
    } else {
        throw ConfigError("bad --shift value '" + args.shift +
                          "' (none or reference)");
    }
    config.seed = args.seed;

    TrainConfig tc;
    tc.epochs = args.epochs;
    tc.batch_size = args.batch_size;
    tc.learning_rate = args.learning_rate;
    tc.weight_decay = args.weight_decay;
    tc.warmup_fraction = args.warmup;
    tc.seed = args.seed;

    SiameseEncoder init(config, vocab);
    auto [model, report] = train(init, ds, tc);

    fs::path dir = ensure_dir(args.out);
    save_model(model, (dir / "model.ijat").string());

    std::ostringstream curve;
    curve << "epoch,mean_train_mse\n";
    for (std::size_t e = 0; e < report.epoch_mean_loss.size(); ++e) {
        curve << e + 1 << ',' << detail::csv_num(report.epoch_mean_loss[e])
              << '\n';
    }
    write_text_file((dir / "loss_curve.csv").string(), curve.str());

    nlohmann::ordered_json metrics;
    metrics["epochs"] = args.epochs;
    metrics["steps"] = report.steps;
    metrics["epoch_mean_loss"] = report.epoch_mean_loss;
    if (!ds.dev.empty()) {
        try {
            metrics["dev_spearman"] = evaluate_spearman(model, ds.dev);
        } catch (const DegenerateInputError& e) {
            metrics["dev_spearman"] = nullptr;
            metrics["dev_spearman_error"] = e.what();
        }
    } else {
        metrics["dev_spearman"] = nullptr;
    }
    write_text_file((dir / "metrics.json").string(), metrics.dump(2) + "\n");
    validate_json_file(dir / "metrics.json", {"epochs", "epoch_mean_loss"});

    std::cout << "wrote " << (dir / "model.ijat").string();
    if (metrics["dev_spearman"].is_number()) {
        std::cout << "  dev_spearman="
                  << metrics["dev_spearman"].get<double>();
    }
    std::cout << "\n";
    return 0;
}

// ---- attribute ---------------------------------------------------------------

struct AttributeArgs {
    std::string model;
    std::string sentence_a;
    std::string sentence_b;
    std::string pairs_file;
    std::string out;
    std::string layer = "default";
    std::string mode = "auto";
    std::string reduce = "token";
    int steps = 100;
    bool header = false;
};

inline void write_attribution_outputs(const AttributionResult& res,
                                      const fs::path& dir,
                                      const std::string& stem) {
    fs::path record = dir / (stem + "_record.json");
    write_text_file(record.string(), attribution_to_json(res).dump(2) + "\n");
    write_text_file((dir / (stem + "_matrix.csv")).string(),
                    attribution_to_csv(res));
    write_text_file((dir / (stem + "_heatmap.svg")).string(),
                    attribution_to_svg(res));
    validate_json_file(record, {"format_version", "mode", "matrix", "score",
                                "attribution_error"});
}

inline int cmd_attribute(const AttributeArgs& args) {
    SiameseEncoder model = load_model(args.model);
    AttributionRequest req;
    req.layer_index = parse_layer_flag(args.layer, model.config());
    req.steps = args.steps;
    req.mode = parse_mode_flag(args.mode, model.config());
    if (args.reduce == "token") req.reduce = Reduce::kToken;
    else if (args.reduce == "word") req.reduce = Reduce::kWord;
    else if (args.reduce == "feature") req.reduce = Reduce::kFeature;
    else throw ConfigError("bad --reduce value '" + args.reduce + "'");

    fs::path dir = ensure_dir(args.out);
    if (!args.pairs_file.empty()) {
        std::vector<PairRecord> pairs =
            load_pairs_tsv(args.pairs_file, args.header);
        for (std::size_t i = 0; i < pairs.size(); ++i) {
            TokenSeq a = tokenize(pairs[i].sentence_a, model.vocab());
            TokenSeq b = tokenize(pairs[i].sentence_b, model.vocab());
            AttributionResult res = attribute_pair(model, a, b, req);
            char stem[32];
            std::snprintf(stem, sizeof(stem), "pair_%04zu", i);
            write_attribution_outputs(res, dir, stem);
        }
        std::cout << "wrote " << pairs.size() << " attribution records to "
                  << dir.string() << "\n";
        return 0;
    }
    if (args.sentence_a.empty() || args.sentence_b.empty()) {
        throw ConfigError("attribute: need --a and --b (or --pairs)");
    }
    TokenSeq a = tokenize(args.sentence_a, model.vocab());
    TokenSeq b = tokenize(args.sentence_b, model.vocab());
    AttributionResult res = attribute_pair(model, a, b, req);
    write_attribution_outputs(res, dir, "attribution");
    std::cout << "score=" << res.score
              << " total=" << res.total
              << " error=" << res.attribution_error << "\n"
              << "wrote " << (dir / "attribution_record.json").string()
              << "\n";
    return 0;
}

// ---- probes -------------------------------------------------------------------

struct ProbeArgs {
    std::string model;      // primary model (or exact model for agreement)
    std::string model_b;    // second model where applicable
    std::string data;
    std::string sentences_file;
    std::string roles_file;
    std::string out;
    std::string layer = "default";
    std::string layers;     // agreement: comma-separated list
    std::string mode = "auto";
    int steps = 100;
    int threads = 1;
    bool header = false;
    double band = 0.1;
    double ref_threshold = 0.9;
    std::size_t min_count = 30;
    bool include_references = true;
    double top_fraction = 0.10;
    double score_cut = 0.5;
};

inline std::vector<PairRecord> probe_records(const ProbeArgs& args) {
    if (args.data.empty()) throw ConfigError("probe: --data is required");
    return load_pairs_tsv(args.data, args.header);
}

inline ProbeOptions probe_options(const ProbeArgs& args,
                                  const EncoderConfig& config) {
    ProbeOptions opt;
    opt.layer_index = parse_layer_flag(args.layer, config);
    opt.steps = args.steps;
    opt.threads = args.threads;
    return opt;
}

inline int cmd_probe_reference(const ProbeArgs& args) {
    SiameseEncoder model = load_model(args.model);
    ProbeReport report =
        reference_contribution_probe(model, probe_records(args), args.band,
                                     args.ref_threshold, args.threads);
    write_report(report, ensure_dir(args.out));
    return 0;
}

inline int cmd_probe_agreement(const ProbeArgs& args) {
    if (args.model_b.empty()) {
        throw ConfigError("probe agreement: need --a (exact) and --b (tuned)");
    }
    SiameseEncoder exact = load_model(args.model);
    SiameseEncoder tuned = load_model(args.model_b);
    std::vector<int> layers;
    if (args.layers.empty()) {
        for (int l = 1; l <= exact.config().num_layers; ++l) {
            layers.push_back(l);
        }
        if (layers.empty()) layers.push_back(0);
    } else {
        std::stringstream ss(args.layers);
        std::string item;
        while (std::getline(ss, item, ',')) {
            layers.push_back(parse_layer_flag(item, exact.config()));
        }
    }
    ProbeReport report =
        agreement_probe(exact, tuned, probe_records(args), layers, args.steps,
                        args.threads, args.score_cut);
    write_report(report, ensure_dir(args.out));
    return 0;
}

inline int cmd_probe_posneg(const ProbeArgs& args) {
    SiameseEncoder model = load_model(args.model);
    AttributionMode mode = parse_mode_flag(args.mode, model.config());
    ProbeReport report = pos_neg_probe(model, probe_records(args), mode,
                                       probe_options(args, model.config()));
    write_report(report, ensure_dir(args.out));
    return 0;
}

inline int cmd_probe_negation(const ProbeArgs& args) {
    SiameseEncoder model = load_model(args.model);
    std::vector<std::string> sentences;
    if (!args.sentences_file.empty()) {
        std::ifstream in(args.sentences_file);
        if (!in) throw IoError("cannot read: " + args.sentences_file);
        std::string line;
        while (std::getline(in, line)) {
            if (!line.empty()) sentences.push_back(line);
        }
    } else {
        std::set<std::string> seen;
        for (const PairRecord& r : probe_records(args)) {
            for (const std::string* s : {&r.sentence_a, &r.sentence_b}) {
                for (const std::string& piece : detail::split_pieces(*s)) {
                    if (piece == "not" && seen.insert(*s).second) {
                        sentences.push_back(*s);
                        break;
                    }
                }
            }
        }
    }
    ProbeReport report = negation_probe(model, sentences,
                                        probe_options(args, model.config()));
    write_report(report, ensure_dir(args.out));
    return 0;
}

inline int cmd_probe_adjectives(const ProbeArgs& args) {
    SiameseEncoder model = load_model(args.model);
    ProbeReport report = adjective_probe(model, adjective_triplets(),
                                         probe_options(args, model.config()));
    write_report(report, ensure_dir(args.out));
    return 0;
}

inline int cmd_probe_lexical(const ProbeArgs& args) {
    SiameseEncoder model = load_model(args.model);
    std::optional<SiameseEncoder> other;
    if (!args.model_b.empty()) other = load_model(args.model_b);
    ProbeReport report = lexical_probe(
        model, probe_records(args), args.min_count,
        probe_options(args, model.config()), args.include_references,
        other ? &*other : nullptr);
    write_report(report, ensure_dir(args.out));
    return 0;
}

inline std::vector<RoleAnnotation> load_role_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read role file: " + path);
    std::vector<RoleAnnotation> anns;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::size_t tab = line.find('\t');
        if (tab == std::string::npos) {
            throw IoError("role file: expected words<TAB>roles at line " +
                          std::to_string(anns.size() + 1));
        }
        auto split_pipe = [](const std::string& s) {
            std::vector<std::string> out;
            std::string cur;
            for (char c : s) {
                if (c == '|') {
                    out.push_back(cur);
                    cur.clear();
                } else {
                    cur.push_back(c);
                }
            }
            out.push_back(cur);
            return out;
        };
        RoleAnnotation ann;
        ann.words = split_pipe(line.substr(0, tab));
        ann.roles = split_pipe(line.substr(tab + 1));
        anns.push_back(std::move(ann));
    }
    return anns;
}

inline int cmd_probe_syntactic(const ProbeArgs& args) {
    if (args.roles_file.empty()) {
        throw ConfigError(
            "probe syntactic: --roles <file> is required (tab-separated, one "
            "line per sentence: words|...<TAB>roles|...)");
    }
    SiameseEncoder model = load_model(args.model);
    std::optional<SiameseEncoder> other;
    if (!args.model_b.empty()) other = load_model(args.model_b);
    ProbeReport report = syntactic_role_probe(
        model, probe_records(args), load_role_file(args.roles_file),
        probe_options(args, model.config()), args.top_fraction,
        other ? &*other : nullptr);
    write_report(report, ensure_dir(args.out));
    return 0;
}

// ---- entry point ----------------------------------------------------------

inline int run(int argc, const char* const* argv) {
    CLI::App app{
        "integrated-Jacobian attributions for Siamese text encoders"};
    app.require_subcommand(1);

    GenCorpusArgs gen;
    auto* gen_cmd = app.add_subcommand(
        "gen-corpus", "generate a synthetic similarity corpus");
    gen_cmd->add_option("--out", gen.out, "output TSV path")->required();
    gen_cmd->add_option("--size", gen.size, "number of pairs");
    gen_cmd->add_option("--seed", gen.seed, "RNG seed");
    gen_cmd->add_flag("--head", gen.header, "write a header line");

    TrainArgs tr;
    tr.out = default_out_dir();
    auto* train_cmd =
        app.add_subcommand("train", "train a toy Siamese encoder");
    train_cmd->add_option("--data", tr.data, "train TSV")->required();
    train_cmd->add_option("--dev", tr.dev, "dev TSV (default: every 10th "
                                           "train record held out)");
    train_cmd->add_option("--out", tr.out, "output directory");
    train_cmd->add_flag("--header", tr.header, "data files carry a header");
    train_cmd->add_option("--epochs", tr.epochs);
    train_cmd->add_option("--batch-size", tr.batch_size);
    train_cmd->add_option("--lr", tr.learning_rate);
    train_cmd->add_option("--weight-decay", tr.weight_decay);
    train_cmd->add_option("--warmup", tr.warmup, "warm-up fraction");
    train_cmd->add_option("--seed", tr.seed);
    train_cmd->add_option("--shift", tr.shift, "none | reference");
    train_cmd->add_option("--similarity-head", tr.head, "dot | cosine");
    train_cmd->add_option("--num-layers", tr.layers);
    train_cmd->add_option("--dim", tr.dim);
    train_cmd->add_option("--num-heads", tr.heads);
    train_cmd->add_option("--ffn", tr.ffn);
    train_cmd->add_option("--max-seq-len", tr.max_seq_len);

    AttributeArgs at;
    at.out = default_out_dir();
    auto* attr_cmd = app.add_subcommand(
        "attribute", "token-token attribution for a sentence pair");
    attr_cmd->add_option("--model", at.model)->required();
    attr_cmd->add_option("--a", at.sentence_a, "first sentence");
    attr_cmd->add_option("--b", at.sentence_b, "second sentence");
    attr_cmd->add_option("--pairs", at.pairs_file, "TSV of sentence pairs");
    attr_cmd->add_option("--out", at.out, "output directory");
    attr_cmd->add_option("--layer", at.layer, "tap layer (int or 'pooled')");
    attr_cmd->add_option("--steps", at.steps, "interpolation steps N");
    attr_cmd->add_option("--mode", at.mode, "exact | approximate | auto");
    attr_cmd->add_option("--reduce", at.reduce, "token | word | feature");
    attr_cmd->add_flag("--header", at.header);

    ProbeArgs pr;
    pr.out = default_out_dir();
    auto* probe_cmd =
        app.add_subcommand("probe", "analysis suites over a dataset");
    probe_cmd->require_subcommand(1);
    std::string probe_name;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--data", pr.data, "pairs TSV");
        sub->add_option("--out", pr.out, "output directory");
        sub->add_option("--layer", pr.layer, "tap layer (int or 'pooled')");
        sub->add_option("--steps", pr.steps, "interpolation steps N");
        sub->add_option("--threads", pr.threads, "worker threads");
        sub->add_flag("--header", pr.header);
    };
    auto* p_ref = probe_cmd->add_subcommand(
        "reference", "reference similarity / reference term distributions");
    p_ref->add_option("--model", pr.model)->required();
    p_ref->add_option("--band", pr.band, "zero band half-width");
    p_ref->add_option("--ref-threshold", pr.ref_threshold);
    add_common(p_ref);
    auto* p_agr = probe_cmd->add_subcommand(
        "agreement", "exact vs approximate attribution agreement");
    p_agr->add_option("--a", pr.model, "exact (shifted) model")->required();
    p_agr->add_option("--b", pr.model_b, "tuned (unshifted) model")
        ->required();
    p_agr->add_option("--layers", pr.layers,
                      "comma-separated tap layers (default: all blocks)");
    p_agr->add_option("--score-cut", pr.score_cut,
                      "aggregate only pairs with mean score above this");
    add_common(p_agr);
    auto* p_pn = probe_cmd->add_subcommand(
        "posneg", "positive / negative attribution mass");
    p_pn->add_option("--model", pr.model)->required();
    p_pn->add_option("--mode", pr.mode, "exact | approximate | auto");
    add_common(p_pn);
    auto* p_neg = probe_cmd->add_subcommand(
        "negation", "attributions to the not-token");
    p_neg->add_option("--model", pr.model)->required();
    p_neg->add_option("--sentences", pr.sentences_file,
                      "file with one sentence per line");
    add_common(p_neg);
    auto* p_adj = probe_cmd->add_subcommand(
        "adjectives", "synonym vs opposite adjective attributions");
    p_adj->add_option("--model", pr.model)->required();
    add_common(p_adj);
    auto* p_lex = probe_cmd->add_subcommand(
        "lexical", "same-token attribution ranking");
    p_lex->add_option("--model", pr.model)->required();
    p_lex->add_option("--model-b", pr.model_b, "optional second model");
    p_lex->add_option("--min-count", pr.min_count);
    p_lex->add_flag("--include-references,!--no-references",
                    pr.include_references,
                    "also attribute each pair's reference pair");
    add_common(p_lex);
    auto* p_syn = probe_cmd->add_subcommand(
        "syntactic", "role pairs behind the top attributions");
    p_syn->add_option("--model", pr.model)->required();
    p_syn->add_option("--model-b", pr.model_b, "optional second model");
    p_syn->add_option("--roles", pr.roles_file, "role annotation file");
    p_syn->add_option("--top-fraction", pr.top_fraction);
    add_common(p_syn);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (*gen_cmd) return cmd_gen_corpus(gen);
        if (*train_cmd) return cmd_train(tr);
        if (*attr_cmd) return cmd_attribute(at);
        if (*p_ref) return cmd_probe_reference(pr);
        if (*p_agr) return cmd_probe_agreement(pr);
        if (*p_pn) return cmd_probe_posneg(pr);
        if (*p_neg) return cmd_probe_negation(pr);
        if (*p_adj) return cmd_probe_adjectives(pr);
        if (*p_lex) return cmd_probe_lexical(pr);
        if (*p_syn) return cmd_probe_syntactic(pr);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}

}  // namespace ijat::cli
