#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "ijat/attribution.hpp"
#include "ijat/dataset.hpp"
#include "ijat/encoder.hpp"
#include "ijat/error.hpp"
#include "ijat/metrics.hpp"
#include "ijat/parallel.hpp"
#include "ijat/triplets.hpp"
#include "ijat/vocab.hpp"

namespace ijat {

using json = nlohmann::ordered_json;

// Carrier for the analysis suites: versioned, deterministic, and with every
// aggregate recomputable from the per-item records.
struct ProbeReport {
    static constexpr int kSchemaVersion = 1;

    std::string probe;
    json parameters = json::object();
    json items = json::array();
    json aggregates = json::object();
    json plot_data = json::object();

    json to_json() const {
        json j;
        j["schema_version"] = kSchemaVersion;
        j["probe"] = probe;
        j["parameters"] = parameters;
        j["items"] = items;
        j["aggregates"] = aggregates;
        j["plot_data"] = plot_data;
        return j;
    }

    std::string dump() const { return to_json().dump(2); }
};

struct ProbeOptions {
    int layer_index = -1;  // -1: second-to-last block
    int steps = 100;
    int threads = 1;
};

namespace detail {

inline double median(std::vector<double> v) {
    if (v.empty()) throw DegenerateInputError("median: no values");
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline json summary_json(const DistributionSummary& s) {
    json j;
    j["count"] = s.count;
    j["mean"] = s.mean;
    j["stdev"] = s.stdev;
    j["min"] = s.min;
    j["max"] = s.max;
    j["bin_edges"] = s.bin_edges;
    j["bin_counts"] = s.bin_counts;
    if (!s.thresholds.empty()) {
        j["thresholds"] = s.thresholds;
        j["cumulative"] = s.cumulative;
    }
    return j;
}

inline json histogram_series(const DistributionSummary& s) {
    json j;
    std::vector<double> centers(s.bin_counts.size());
    for (std::size_t i = 0; i < centers.size(); ++i) {
        centers[i] = 0.5 * (s.bin_edges[i] + s.bin_edges[i + 1]);
    }
    j["x"] = centers;
    j["y"] = s.bin_counts;
    return j;
}

inline std::vector<TokenSeq> tokenize_column(
    const std::vector<PairRecord>& records, const Vocab& vocab, bool first) {
    std::vector<TokenSeq> out;
    out.reserve(records.size());
    for (const PairRecord& r : records) {
        out.push_back(tokenize(first ? r.sentence_a : r.sentence_b, vocab));
    }
    return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Reference contributions: distributions of f(a, r_b), f(b, r_a) and
// f(r_a, r_b), with the fraction of reference similarities inside a +-band
// around zero and the fraction of reference terms below a threshold.
// ---------------------------------------------------------------------------
inline ProbeReport reference_contribution_probe(
    const SiameseEncoder& model, const std::vector<PairRecord>& records,
    double band = 0.1, double ref_term_threshold = 0.9, int threads = 1) {
    if (records.empty()) {
        throw ConfigError("reference_contribution_probe: empty dataset");
    }
    struct Row {
        double ref_sim_a, ref_sim_b, ref_term;
    };
    std::vector<Row> rows(records.size());
    parallel_for(records.size(), threads, [&](std::size_t i) {
        TokenSeq a = tokenize(records[i].sentence_a, model.vocab());
        TokenSeq b = tokenize(records[i].sentence_b, model.vocab());
        Tensor ea = model.encode(a).embedding;
        Tensor eb = model.encode(b).embedding;
        Tensor era = model.encode(make_reference(a)).embedding;
        Tensor erb = model.encode(make_reference(b)).embedding;
        rows[i] = {model.head_score(ea, erb), model.head_score(eb, era),
                   model.head_score(era, erb)};
    });

    ProbeReport report;
    report.probe = "reference_contribution";
    report.parameters = {{"pairs", records.size()},
                         {"band", band},
                         {"ref_term_threshold", ref_term_threshold}};
    std::vector<double> ref_sims, ref_terms;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        report.items.push_back({{"index", i},
                                {"ref_sim_a", rows[i].ref_sim_a},
                                {"ref_sim_b", rows[i].ref_sim_b},
                                {"ref_term", rows[i].ref_term}});
        ref_sims.push_back(rows[i].ref_sim_a);
        ref_sims.push_back(rows[i].ref_sim_b);
        ref_terms.push_back(rows[i].ref_term);
    }
    DistributionSummary sim_summary = summarize(ref_sims);
    DistributionSummary term_summary = summarize(ref_terms);
    report.aggregates["ref_similarities"] = detail::summary_json(sim_summary);
    report.aggregates["ref_terms"] = detail::summary_json(term_summary);
    report.aggregates["fraction_ref_sims_within_band"] =
        fraction_within(ref_sims, -band, band);
    report.aggregates["fraction_ref_terms_below_threshold"] =
        fraction_below(ref_terms, ref_term_threshold);
    report.plot_data["ref_similarities_hist"] =
        detail::histogram_series(sim_summary);
    report.plot_data["ref_terms_hist"] = detail::histogram_series(term_summary);
    return report;
}

// ---------------------------------------------------------------------------
// Agreement between exact attributions (shifted model) and approximate ones
// (unshifted model): per pair and per layer, rank / linear correlation and
// top-k overlap of the token matrices.
// ---------------------------------------------------------------------------
inline ProbeReport agreement_probe(const SiameseEncoder& model_exact,
                                   const SiameseEncoder& model_tuned,
                                   const std::vector<PairRecord>& records,
                                   const std::vector<int>& layers, int steps,
                                   int threads = 1,
                                   double score_cut = 0.5) {
    if (!model_exact.same_tokenizer(model_tuned)) {
        throw ConfigError("agreement_probe: models use different tokenizers");
    }
    if (model_exact.config().shift_mode != ShiftMode::kReferenceShift) {
        throw ConfigError("agreement_probe: exact model must be shifted");
    }
    if (records.empty()) throw ConfigError("agreement_probe: empty dataset");

    struct Cell {
        int layer;
        double spearman_r = 0.0, pearson_r = 0.0;
        double jaccard3 = 0.0, jaccard10 = 0.0;
        std::size_t k3 = 3, k10 = 10;
        double mean_score = 0.0;
        bool degenerate = false;
    };
    // the tuned side runs approximate attribution unless it is itself a
    // shifted model (then both sides are exact and agree perfectly)
    const AttributionMode tuned_mode =
        model_tuned.config().shift_mode == ShiftMode::kReferenceShift
            ? AttributionMode::kExact
            : AttributionMode::kApproximate;
    std::vector<std::vector<Cell>> grid(records.size());
    parallel_for(records.size(), threads, [&](std::size_t i) {
        TokenSeq a = tokenize(records[i].sentence_a, model_exact.vocab());
        TokenSeq b = tokenize(records[i].sentence_b, model_exact.vocab());
        for (int layer : layers) {
            AttributionRequest req_exact{layer, steps,
                                         AttributionMode::kExact,
                                         Reduce::kToken};
            AttributionRequest req_appr{layer, steps, tuned_mode,
                                        Reduce::kToken};
            AttributionResult ra = attribute_pair(model_exact, a, b, req_exact);
            AttributionResult rb = attribute_pair(model_tuned, a, b, req_appr);
            Cell cell;
            cell.layer = layer;
            cell.mean_score = 0.5 * (ra.score + rb.score);
            const std::size_t cells = ra.matrix.numel();
            cell.k3 = std::min<std::size_t>(3, cells);
            cell.k10 = std::min<std::size_t>(10, cells);
            try {
                cell.spearman_r =
                    spearman(ra.matrix.values(), rb.matrix.values());
                cell.pearson_r =
                    pearson(ra.matrix.values(), rb.matrix.values());
                cell.jaccard3 = jaccard_topk(ra.matrix, rb.matrix, cell.k3);
                cell.jaccard10 = jaccard_topk(ra.matrix, rb.matrix, cell.k10);
            } catch (const DegenerateInputError&) {
                cell.degenerate = true;  // constant matrix (e.g. a == r_a)
            }
            grid[i].push_back(cell);
        }
    });

    ProbeReport report;
    report.probe = "agreement";
    report.parameters = {{"pairs", records.size()},
                         {"layers", layers},
                         {"steps", steps},
                         {"score_cut", score_cut}};
    std::map<int, std::vector<const Cell*>> by_layer;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        for (const Cell& c : grid[i]) {
            json item = {{"index", i},
                         {"layer", c.layer},
                         {"mean_score", c.mean_score},
                         {"degenerate", c.degenerate}};
            if (!c.degenerate) {
                item["spearman"] = c.spearman_r;
                item["pearson"] = c.pearson_r;
                item["jaccard_top3"] = c.jaccard3;
                item["jaccard_top10"] = c.jaccard10;
                item["k3"] = c.k3;
                item["k10"] = c.k10;
            }
            report.items.push_back(std::move(item));
            if (!c.degenerate) by_layer[c.layer].push_back(&c);
        }
    }
    json layer_stats = json::array();
    for (const auto& [layer, cells] : by_layer) {
        std::vector<double> sp, pe, j3, j10;
        for (const Cell* c : cells) {
            if (c->mean_score <= score_cut) continue;
            sp.push_back(c->spearman_r);
            pe.push_back(c->pearson_r);
            j3.push_back(c->jaccard3);
            j10.push_back(c->jaccard10);
        }
        json row = {{"layer", layer}, {"pairs_used", sp.size()}};
        if (!sp.empty()) {
            row["median_spearman"] = detail::median(sp);
            row["median_pearson"] = detail::median(pe);
            row["median_jaccard_top3"] = detail::median(j3);
            row["median_jaccard_top10"] = detail::median(j10);
        }
        layer_stats.push_back(std::move(row));
    }
    report.aggregates["per_layer"] = std::move(layer_stats);

    // scatter: agreement vs. predicted similarity, deepest requested layer
    if (!layers.empty()) {
        const int scatter_layer = layers.back();
        std::vector<double> xs, ys;
        for (const auto& row : grid) {
            for (const Cell& c : row) {
                if (c.layer == scatter_layer && !c.degenerate) {
                    xs.push_back(c.mean_score);
                    ys.push_back(c.spearman_r);
                }
            }
        }
        report.plot_data["spearman_vs_score"] = {{"layer", scatter_layer},
                                                 {"x", xs},
                                                 {"y", ys}};
    }
    return report;
}

// ---------------------------------------------------------------------------
// Positive / negative mass of attribution matrices and how often the
// positive mass exceeds the score maximum (1 exact, 2 approximate).
// ---------------------------------------------------------------------------
inline ProbeReport pos_neg_probe(const SiameseEncoder& model,
                                 const std::vector<PairRecord>& records,
                                 AttributionMode mode,
                                 const ProbeOptions& opt = {}) {
    if (records.empty()) throw ConfigError("pos_neg_probe: empty dataset");
    struct Row {
        double pos = 0.0, neg = 0.0, score = 0.0;
    };
    std::vector<Row> rows(records.size());
    parallel_for(records.size(), opt.threads, [&](std::size_t i) {
        TokenSeq a = tokenize(records[i].sentence_a, model.vocab());
        TokenSeq b = tokenize(records[i].sentence_b, model.vocab());
        AttributionRequest req{opt.layer_index, opt.steps, mode,
                               Reduce::kToken};
        AttributionResult res = attribute_pair(model, a, b, req);
        Row row;
        row.score = res.score;
        for (double v : res.matrix.values()) {
            if (v > 0) row.pos += v;
            if (v < 0) row.neg += v;
        }
        rows[i] = row;
    });

    const double score_max = mode == AttributionMode::kExact ? 1.0 : 2.0;
    ProbeReport report;
    report.probe = "pos_neg";
    report.parameters = {{"pairs", records.size()},
                         {"mode", to_string(mode)},
                         {"layer", opt.layer_index},
                         {"steps", opt.steps},
                         {"score_max", score_max}};
    std::vector<double> pos, neg;
    std::size_t exceed = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        report.items.push_back({{"index", i},
                                {"positive_sum", rows[i].pos},
                                {"negative_sum", rows[i].neg},
                                {"score", rows[i].score}});
        pos.push_back(rows[i].pos);
        neg.push_back(rows[i].neg);
        if (rows[i].pos > score_max) ++exceed;
    }
    DistributionSummary pos_summary = summarize(pos);
    report.aggregates["positive_sums"] = detail::summary_json(pos_summary);
    report.aggregates["negative_sums"] = detail::summary_json(summarize(neg));
    report.aggregates["fraction_positive_above_score_max"] =
        static_cast<double>(exceed) / static_cast<double>(rows.size());
    report.plot_data["pos_vs_neg"] = {{"x", pos}, {"y", neg}};
    report.plot_data["positive_sums_hist"] =
        detail::histogram_series(pos_summary);
    return report;
}

// ---------------------------------------------------------------------------
// Negation: each sentence containing exactly one "not" is paired with its
// not-removed version; reports the signed distribution of the not-row totals
// on the word-level matrix and their share of the prediction.
// ---------------------------------------------------------------------------
inline ProbeReport negation_probe(const SiameseEncoder& model,
                                  const std::vector<std::string>& sentences,
                                  const ProbeOptions& opt = {},
                                  std::vector<double> share_thresholds = {
                                      0.08, 0.14}) {
    if (sentences.empty()) throw ConfigError("negation_probe: no sentences");
    struct Row {
        bool skipped = false;
        std::string warning;
        double not_row_total = 0.0;
        double not_peak_cell = 0.0;
        std::string not_peak_partner;
        double score = 0.0;
        double total = 0.0;
        double rest_total = 0.0;
        double relative_share = 0.0;
    };
    std::vector<Row> rows(sentences.size());
    parallel_for(sentences.size(), opt.threads, [&](std::size_t i) {
        Row row;
        std::vector<std::string> pieces =
            detail::split_pieces(sentences[i]);
        std::size_t not_count = 0, not_pos = 0;
        for (std::size_t w = 0; w < pieces.size(); ++w) {
            if (pieces[w] == "not") {
                ++not_count;
                not_pos = w;
            }
        }
        if (not_count != 1) {
            row.skipped = true;
            row.warning = not_count == 0 ? "no not-token"
                                         : "multiple not-tokens";
            rows[i] = row;
            return;
        }
        std::string without;
        for (std::size_t w = 0; w < pieces.size(); ++w) {
            if (w == not_pos) continue;
            if (!without.empty()) without += ' ';
            without += pieces[w];
        }
        TokenSeq a = tokenize(sentences[i], model.vocab());
        TokenSeq b = tokenize(without, model.vocab());
        AttributionRequest req{opt.layer_index, opt.steps,
                               model.config().shift_mode ==
                                       ShiftMode::kReferenceShift
                                   ? AttributionMode::kExact
                                   : AttributionMode::kApproximate,
                               Reduce::kWord};
        AttributionResult res = attribute_pair(model, a, b, req);
        // unit index: CLS is unit 0, word w is unit w + 1
        const std::size_t not_unit = not_pos + 1;
        const Tensor& sum_matrix = res.matrix_sum;
        double row_total = 0.0;
        double peak = 0.0;
        std::size_t peak_j = 0;
        for (std::size_t j = 0; j < sum_matrix.cols(); ++j) {
            const double v = sum_matrix.at(not_unit, j);
            row_total += v;
            if (std::abs(v) > std::abs(peak)) {
                peak = v;
                peak_j = j;
            }
        }
        row.not_row_total = row_total;
        row.not_peak_cell = peak;
        row.not_peak_partner =
            peak_j == 0 ? "[CLS]"
                        : (peak_j + 1 == sum_matrix.cols()
                               ? "[EOS]"
                               : detail::split_pieces(
                                     without)[peak_j - 1]);
        row.score = res.score;
        row.total = res.total;
        row.rest_total = sum_matrix.sum() - row_total;
        row.relative_share =
            res.score != 0.0 ? std::abs(row_total) / std::abs(res.score) : 0.0;
        rows[i] = row;
    });

    ProbeReport report;
    report.probe = "negation";
    report.parameters = {{"sentences", sentences.size()},
                         {"layer", opt.layer_index},
                         {"steps", opt.steps},
                         {"share_thresholds", share_thresholds}};
    std::vector<double> totals, shares;
    std::size_t used = 0, skipped = 0, negative = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const Row& r = rows[i];
        json item = {{"index", i}, {"sentence", sentences[i]}};
        if (r.skipped) {
            item["skipped"] = true;
            item["warning"] = r.warning;
            ++skipped;
        } else {
            item["not_row_total"] = r.not_row_total;
            item["not_peak_cell"] = r.not_peak_cell;
            item["not_peak_partner"] = r.not_peak_partner;
            item["score"] = r.score;
            item["matrix_total"] = r.total;
            item["rest_total"] = r.rest_total;
            item["relative_share"] = r.relative_share;
            totals.push_back(r.not_row_total);
            shares.push_back(r.relative_share);
            if (r.not_row_total < 0.0) ++negative;
            ++used;
        }
        report.items.push_back(std::move(item));
    }
    report.aggregates["used"] = used;
    report.aggregates["skipped"] = skipped;
    if (used > 0) {
        DistributionSummary total_summary = summarize(totals);
        report.aggregates["not_attributions"] =
            detail::summary_json(total_summary);
        report.aggregates["fraction_negative"] =
            static_cast<double>(negative) / static_cast<double>(used);
        report.aggregates["relative_share"] = detail::summary_json(
            summarize(shares, share_thresholds));
        std::vector<double> sorted_shares = shares;
        std::sort(sorted_shares.begin(), sorted_shares.end());
        std::vector<double> cdf(sorted_shares.size());
        for (std::size_t i = 0; i < cdf.size(); ++i) {
            cdf[i] = static_cast<double>(i + 1) /
                     static_cast<double>(cdf.size());
        }
        report.plot_data["share_cdf"] = {{"x", sorted_shares}, {"y", cdf}};
        report.plot_data["not_attributions_hist"] =
            detail::histogram_series(total_summary);
    }
    return report;
}

// ---------------------------------------------------------------------------
// Adjectives as predicates: template pairs from anchor/synonym/opposite
// triplets; compares the adjective-adjective word cell across pair kinds.
// ---------------------------------------------------------------------------
inline ProbeReport adjective_probe(
    const SiameseEncoder& model,
    const std::vector<AdjectiveTriplet>& triplets = adjective_triplets(),
    const ProbeOptions& opt = {},
    const std::string& template_prefix = "this house is ") {
    if (triplets.empty()) throw ConfigError("adjective_probe: no triplets");
    const AttributionMode mode =
        model.config().shift_mode == ShiftMode::kReferenceShift
            ? AttributionMode::kExact
            : AttributionMode::kApproximate;

    struct Row {
        double syn_attr = 0.0, opp_attr = 0.0;
    };
    std::vector<Row> rows(triplets.size());
    parallel_for(triplets.size(), opt.threads, [&](std::size_t i) {
        const AdjectiveTriplet& t = triplets[i];
        auto build = [&](const std::string& adj) {
            return template_prefix + adj + ".";
        };
        auto adj_unit = [&](const TokenSeq& seq, const std::string& adj,
                            const std::string& sentence) {
            std::vector<std::string> pieces = detail::split_pieces(
                sentence);
            for (std::size_t w = 0; w < pieces.size(); ++w) {
                if (pieces[w] == adj) return w + 1;  // unit 0 is CLS
            }
            throw ConfigError("adjective_probe: adjective '" + adj +
                              "' not found in tokenized sentence (triplet " +
                              t.anchor + "/" + t.synonym + "/" + t.opposite +
                              ")");
        };
        auto cell = [&](const std::string& adj_b) {
            std::string sa = build(t.anchor);
            std::string sb = build(adj_b);
            TokenSeq a = tokenize(sa, model.vocab());
            TokenSeq b = tokenize(sb, model.vocab());
            AttributionRequest req{opt.layer_index, opt.steps, mode,
                                   Reduce::kWord};
            AttributionResult res = attribute_pair(model, a, b, req);
            return res.matrix.at(adj_unit(a, t.anchor, sa),
                                 adj_unit(b, adj_b, sb));
        };
        rows[i] = {cell(t.synonym), cell(t.opposite)};
    });

    ProbeReport report;
    report.probe = "adjective";
    report.parameters = {{"triplets", triplets.size()},
                         {"layer", opt.layer_index},
                         {"steps", opt.steps},
                         {"mode", to_string(mode)},
                         {"template", template_prefix + "<adjective>."}};
    std::vector<double> syn, opp;
    std::size_t opp_negative = 0;
    for (std::size_t i = 0; i < triplets.size(); ++i) {
        report.items.push_back({{"anchor", triplets[i].anchor},
                                {"synonym", triplets[i].synonym},
                                {"opposite", triplets[i].opposite},
                                {"synonym_attr", rows[i].syn_attr},
                                {"opposite_attr", rows[i].opp_attr}});
        syn.push_back(rows[i].syn_attr);
        opp.push_back(rows[i].opp_attr);
        if (rows[i].opp_attr < 0.0) ++opp_negative;
    }
    DistributionSummary syn_summary = summarize(syn);
    DistributionSummary opp_summary = summarize(opp);
    report.aggregates["synonym_attr"] = detail::summary_json(syn_summary);
    report.aggregates["opposite_attr"] = detail::summary_json(opp_summary);
    report.aggregates["fraction_opposite_negative"] =
        static_cast<double>(opp_negative) /
        static_cast<double>(triplets.size());
    report.plot_data["synonym_hist"] = detail::histogram_series(syn_summary);
    report.plot_data["opposite_hist"] = detail::histogram_series(opp_summary);
    return report;
}

// ---------------------------------------------------------------------------
// Lexical bias: same-token attribution cells collected across a corpus,
// ranked by mean. Each pair's length-matched reference pair is included by
// default so the padding token has observations (references are the only
// context it occurs in); those matrices are identically zero.
// ---------------------------------------------------------------------------
inline ProbeReport lexical_probe(const SiameseEncoder& model,
                                 const std::vector<PairRecord>& records,
                                 std::size_t min_count = 30,
                                 const ProbeOptions& opt = {},
                                 bool include_reference_pairs = true,
                                 const SiameseEncoder* second_model = nullptr) {
    if (min_count < 1) throw ConfigError("lexical_probe: min_count < 1");
    if (records.empty()) throw ConfigError("lexical_probe: empty dataset");
    if (second_model && !model.same_tokenizer(*second_model)) {
        throw ConfigError("lexical_probe: models use different tokenizers");
    }

    const AttributionMode mode =
        model.config().shift_mode == ShiftMode::kReferenceShift
            ? AttributionMode::kExact
            : AttributionMode::kApproximate;

    struct TokenStats {
        std::size_t count = 0;
        double sum = 0.0, sum_sq = 0.0;
    };
    auto collect = [&](const SiameseEncoder& m) {
        const AttributionMode mmode =
            m.config().shift_mode == ShiftMode::kReferenceShift
                ? AttributionMode::kExact
                : AttributionMode::kApproximate;
        std::vector<std::map<std::string, TokenStats>> partial(records.size());
        parallel_for(records.size(), opt.threads, [&](std::size_t i) {
            auto accumulate = [&](const TokenSeq& a, const TokenSeq& b) {
                AttributionRequest req{opt.layer_index, opt.steps, mmode,
                                       Reduce::kToken};
                AttributionResult res = attribute_pair(m, a, b, req);
                std::vector<std::string> sa = a.surface(m.vocab());
                std::vector<std::string> sb = b.surface(m.vocab());
                for (std::size_t r = 0; r < sa.size(); ++r) {
                    for (std::size_t c = 0; c < sb.size(); ++c) {
                        if (sa[r] != sb[c]) continue;
                        TokenStats& ts = partial[i][sa[r]];
                        const double v = res.matrix.at(r, c);
                        ++ts.count;
                        ts.sum += v;
                        ts.sum_sq += v * v;
                    }
                }
            };
            TokenSeq a = tokenize(records[i].sentence_a, m.vocab());
            TokenSeq b = tokenize(records[i].sentence_b, m.vocab());
            accumulate(a, b);
            if (include_reference_pairs) {
                accumulate(make_reference(a), make_reference(b));
            }
        });
        std::map<std::string, TokenStats> merged;
        for (const auto& p : partial) {
            for (const auto& [token, ts] : p) {
                TokenStats& m2 = merged[token];
                m2.count += ts.count;
                m2.sum += ts.sum;
                m2.sum_sq += ts.sum_sq;
            }
        }
        return merged;
    };

    auto stats_a = collect(model);

    struct Ranked {
        std::string token;
        std::size_t count;
        double mean, stdev;
    };
    auto rank_table = [&](const std::map<std::string, TokenStats>& stats) {
        std::vector<Ranked> table;
        for (const auto& [token, ts] : stats) {
            if (ts.count < min_count) continue;
            const double mean = ts.sum / static_cast<double>(ts.count);
            const double var =
                std::max(0.0, ts.sum_sq / static_cast<double>(ts.count) -
                                   mean * mean);
            table.push_back({token, ts.count, mean, std::sqrt(var)});
        }
        std::sort(table.begin(), table.end(), [](const auto& a, const auto& b) {
            if (a.mean != b.mean) return a.mean > b.mean;
            return a.token < b.token;
        });
        return table;
    };
    std::vector<Ranked> table = rank_table(stats_a);

    ProbeReport report;
    report.probe = "lexical";
    report.parameters = {{"pairs", records.size()},
                         {"min_count", min_count},
                         {"layer", opt.layer_index},
                         {"steps", opt.steps},
                         {"mode", to_string(mode)},
                         {"include_reference_pairs", include_reference_pairs},
                         {"two_models", second_model != nullptr}};
    if (table.empty()) {
        report.aggregates["warning"] =
            "no token reaches min_count; table is empty";
        report.aggregates["ranked_tokens"] = 0;
        return report;
    }

    std::map<std::string, double> mean_b;
    if (second_model) {
        for (const Ranked& r : rank_table(collect(*second_model))) {
            mean_b[r.token] = r.mean;
        }
    }
    for (std::size_t rank = 0; rank < table.size(); ++rank) {
        const Ranked& r = table[rank];
        json item = {{"rank", rank + 1},
                     {"token", r.token},
                     {"count", r.count},
                     {"mean", r.mean},
                     {"stdev", r.stdev}};
        if (second_model && mean_b.count(r.token)) {
            item["mean_other"] = mean_b.at(r.token);
        }
        report.items.push_back(std::move(item));
    }
    report.aggregates["ranked_tokens"] = table.size();
    if (second_model) {
        std::vector<double> xs, ys;
        for (const Ranked& r : table) {
            auto it = mean_b.find(r.token);
            if (it == mean_b.end()) continue;
            xs.push_back(r.mean);
            ys.push_back(it->second);
        }
        if (xs.size() >= 2) {
            try {
                report.aggregates["rank_agreement_spearman"] =
                    spearman(xs, ys);
            } catch (const DegenerateInputError&) {
                report.aggregates["rank_agreement_spearman"] = nullptr;
            }
        }
    }
    return report;
}

// ---------------------------------------------------------------------------
// Syntactic roles: role labels of the word pairs behind the top 10% of
// attribution cells, aggregated over unordered role pairs.
// ---------------------------------------------------------------------------
struct RoleAnnotation {
    std::vector<std::string> words;
    std::vector<std::string> roles;
};

inline ProbeReport syntactic_role_probe(
    const SiameseEncoder& model, const std::vector<PairRecord>& records,
    const std::vector<RoleAnnotation>& annotations,  // 2 per pair: a then b
    const ProbeOptions& opt = {}, double top_fraction = 0.10,
    const SiameseEncoder* second_model = nullptr) {
    if (records.empty()) throw ConfigError("syntactic_role_probe: empty dataset");
    if (annotations.size() != records.size() * 2) {
        throw ConfigError("syntactic_role_probe: need exactly two role lines "
                          "per pair, got " +
                          std::to_string(annotations.size()) + " for " +
                          std::to_string(records.size()) + " pairs");
    }

    struct PairTop {
        bool skipped = false;
        std::string warning;
        // ordered (role_a, role_b, value) triples of the top cells
        std::vector<std::tuple<std::string, std::string, double>> cells;
        std::vector<std::tuple<std::string, std::string, double>> cells_other;
    };

    auto unit_roles = [](const TokenSeq& seq, const RoleAnnotation& ann,
                         const std::string& sentence) {
        std::vector<std::string> pieces =
            detail::split_pieces(sentence);
        if (ann.words.size() != ann.roles.size() ||
            ann.roles.size() != pieces.size()) {
            throw ConfigError("role count " + std::to_string(ann.roles.size()) +
                              " does not match word count " +
                              std::to_string(pieces.size()));
        }
        for (std::size_t w = 0; w < pieces.size(); ++w) {
            if (ann.words[w] != pieces[w]) {
                throw ConfigError("role annotation word '" + ann.words[w] +
                                  "' does not match sentence word '" +
                                  pieces[w] + "'");
            }
        }
        std::vector<std::string> roles;
        roles.push_back("special");  // CLS
        roles.insert(roles.end(), ann.roles.begin(), ann.roles.end());
        roles.push_back("special");  // EOS
        if (roles.size() != seq.ids.size()) {
            throw ConfigError("role/word units do not cover the sequence");
        }
        return roles;
    };

    auto run_model = [&](const SiameseEncoder& m, std::size_t i,
                         const std::vector<std::string>& roles_a,
                         const std::vector<std::string>& roles_b) {
        const AttributionMode mmode =
            m.config().shift_mode == ShiftMode::kReferenceShift
                ? AttributionMode::kExact
                : AttributionMode::kApproximate;
        TokenSeq a = tokenize(records[i].sentence_a, m.vocab());
        TokenSeq b = tokenize(records[i].sentence_b, m.vocab());
        AttributionRequest req{opt.layer_index, opt.steps, mmode,
                               Reduce::kWord};
        AttributionResult res = attribute_pair(m, a, b, req);
        const Tensor& matrix = res.matrix;
        const std::size_t cells = matrix.numel();
        const std::size_t k = static_cast<std::size_t>(
            std::ceil(top_fraction * static_cast<double>(cells)));
        std::vector<std::size_t> top = topk_cells(matrix, std::max<std::size_t>(
                                                              1, k));
        std::vector<std::tuple<std::string, std::string, double>> out;
        for (std::size_t idx : top) {
            const std::size_t r = idx / matrix.cols();
            const std::size_t c = idx % matrix.cols();
            out.emplace_back(roles_a[r], roles_b[c], matrix[idx]);
        }
        return out;
    };

    std::vector<PairTop> tops(records.size());
    parallel_for(records.size(), opt.threads, [&](std::size_t i) {
        PairTop top;
        try {
            TokenSeq a = tokenize(records[i].sentence_a, model.vocab());
            TokenSeq b = tokenize(records[i].sentence_b, model.vocab());
            auto roles_a =
                unit_roles(a, annotations[2 * i], records[i].sentence_a);
            auto roles_b =
                unit_roles(b, annotations[2 * i + 1], records[i].sentence_b);
            top.cells = run_model(model, i, roles_a, roles_b);
            if (second_model) {
                top.cells_other =
                    run_model(*second_model, i, roles_a, roles_b);
            }
        } catch (const ConfigError& e) {
            top.skipped = true;  // per-record annotation problem
            top.warning = e.what();
        }
        tops[i] = top;
    });

    ProbeReport report;
    report.probe = "syntactic_role";
    report.parameters = {{"pairs", records.size()},
                         {"layer", opt.layer_index},
                         {"steps", opt.steps},
                         {"top_fraction", top_fraction},
                         {"two_models", second_model != nullptr}};
    auto pair_key = [](std::string x, std::string y) {
        if (y < x) std::swap(x, y);
        return x + "--" + y;
    };
    std::map<std::string, std::size_t> freq, freq_other;
    std::size_t used = 0, skipped = 0, total_cells = 0, total_other = 0;
    for (std::size_t i = 0; i < tops.size(); ++i) {
        const PairTop& t = tops[i];
        json item = {{"index", i}};
        if (t.skipped) {
            item["skipped"] = true;
            item["warning"] = t.warning;
            ++skipped;
        } else {
            json cells = json::array();
            for (const auto& [ra, rb, v] : t.cells) {
                cells.push_back({{"role_a", ra}, {"role_b", rb}, {"value", v}});
                ++freq[pair_key(ra, rb)];
                ++total_cells;
            }
            item["top_cells"] = std::move(cells);
            if (second_model) {
                json cells2 = json::array();
                for (const auto& [ra, rb, v] : t.cells_other) {
                    cells2.push_back(
                        {{"role_a", ra}, {"role_b", rb}, {"value", v}});
                    ++freq_other[pair_key(ra, rb)];
                    ++total_other;
                }
                item["top_cells_other"] = std::move(cells2);
            }
            ++used;
        }
        report.items.push_back(std::move(item));
    }
    report.aggregates["used"] = used;
    report.aggregates["skipped"] = skipped;
    std::vector<std::pair<std::string, std::size_t>> sorted_freq(freq.begin(),
                                                                 freq.end());
    std::sort(sorted_freq.begin(), sorted_freq.end(),
              [](const auto& a, const auto& b) {
                  if (a.second != b.second) return a.second > b.second;
                  return a.first < b.first;
              });
    json dist = json::array();
    for (const auto& [key, count] : sorted_freq) {
        json row = {{"role_pair", key},
                    {"count", count},
                    {"fraction", total_cells
                                     ? static_cast<double>(count) /
                                           static_cast<double>(total_cells)
                                     : 0.0}};
        if (second_model) {
            const std::size_t other =
                freq_other.count(key) ? freq_other.at(key) : 0;
            row["count_other"] = other;
            row["fraction_other"] =
                total_other ? static_cast<double>(other) /
                                  static_cast<double>(total_other)
                            : 0.0;
        }
        dist.push_back(std::move(row));
    }
    report.aggregates["role_pair_distribution"] = std::move(dist);
    {
        std::vector<std::string> labels;
        std::vector<double> fractions;
        for (const auto& [key, count] : sorted_freq) {
            labels.push_back(key);
            fractions.push_back(total_cells
                                    ? static_cast<double>(count) /
                                          static_cast<double>(total_cells)
                                    : 0.0);
        }
        report.plot_data["role_pair_fractions"] = {{"labels", labels},
                                                   {"y", fractions}};
    }
    return report;
}

}  // namespace ijat
