#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "ijat/encoder.hpp"
#include "ijat/error.hpp"
#include "ijat/tape.hpp"
#include "ijat/tensor.hpp"
#include "ijat/vocab.hpp"

namespace ijat {

enum class AttributionMode : std::uint8_t { kExact = 0, kApproximate = 1 };
enum class Reduce : std::uint8_t { kFeature = 0, kToken = 1, kWord = 2 };

inline const char* to_string(AttributionMode m) {
    return m == AttributionMode::kExact ? "exact" : "approximate";
}
inline const char* to_string(Reduce r) {
    switch (r) {
        case Reduce::kFeature: return "feature";
        case Reduce::kToken: return "token";
        default: return "word";
    }
}

struct AttributionRequest {
    int layer_index = -1;  // -1: second-to-last block (pooling tap for L=0)
    int steps = 100;       // interpolation steps N
    AttributionMode mode = AttributionMode::kExact;
    Reduce reduce = Reduce::kToken;

    int resolve_layer(const EncoderConfig& c) const {
        int l = layer_index;
        if (l < 0) l = c.num_layers > 0 ? c.num_layers - 1 : 0;
        if (l > c.num_layers) {
            throw ConfigError("attribution: layer " + std::to_string(l) +
                              " outside [0, " +
                              std::to_string(c.num_layers) + "]");
        }
        return l;
    }

    void validate(const EncoderConfig& c) const {
        if (steps < 1) throw ConfigError("attribution: steps must be >= 1");
        if (mode == AttributionMode::kExact &&
            c.shift_mode != ShiftMode::kReferenceShift) {
            throw ConfigError(
                "attribution: exact mode requires a reference-shifted model");
        }
        resolve_layer(c);
    }
};

// Path-averaged Jacobian of the similarity-ready encoder map for one input:
// D x (T * d) where D is the embedding width.
struct IntegratedJacobian {
    Tensor values;
    int layer_index = 0;
    int steps = 0;
};

struct AttributionResult {
    Tensor matrix;             // per requested reduction (word: mean cells)
    Tensor matrix_sum;         // word reduction only: sum cells, conserves total
    Reduce reduce = Reduce::kToken;
    double score = 0.0;        // s = f(a, b)
    double ref_sim_a = 0.0;    // f(a, r_b)
    double ref_sim_b = 0.0;    // f(b, r_a)
    double ref_term = 0.0;     // f(r_a, r_b)
    double attribution_error = 0.0;
    double total = 0.0;        // sum over the feature-pair matrix
    double score_plus_one_gap = 0.0;  // approximate mode: total - (s + 1)
    int steps = 0;
    int layer_index = 0;
    AttributionMode mode = AttributionMode::kExact;
    std::vector<std::string> tokens_a, tokens_b;
    std::vector<std::pair<std::size_t, std::size_t>> word_spans_a,
        word_spans_b;
};

// Interpolation points x(alpha_n) = r + alpha_n (x - r) with alpha_n = n/N,
// n = 1..N. The reference end (alpha = 0) is never emitted.
inline std::vector<Tensor> interpolation_path(const Tensor& x, const Tensor& r,
                                              int steps) {
    if (!x.same_shape(r)) {
        throw ShapeError("interpolation_path: " +
                         Tensor::shape_str(x.shape()) + " vs " +
                         Tensor::shape_str(r.shape()));
    }
    if (steps < 1) throw ConfigError("interpolation_path: N must be >= 1");
    std::vector<Tensor> points;
    points.reserve(static_cast<std::size_t>(steps));
    for (int n = 1; n <= steps; ++n) {
        const double alpha =
            static_cast<double>(n) / static_cast<double>(steps);
        Tensor p = r;
        for (std::size_t i = 0; i < p.numel(); ++i) {
            p[i] = r[i] + alpha * (x[i] - r[i]);
        }
        points.push_back(std::move(p));
    }
    return points;
}

namespace detail {

// The map whose Jacobian is integrated, on a tape. In exact mode the shifted
// tail is divided by the frozen norm of the input's own embedding (constant
// w.r.t. the interpolated activation), so references stay at the zero vector
// and the boundary terms vanish identically. In approximate mode the cosine
// normalization is part of the map, so the boundary terms are the model's
// literal reference similarities.
struct AttributionTarget {
    const SiameseEncoder* model = nullptr;
    int layer_index = 0;
    AttributionMode mode = AttributionMode::kExact;
    Tensor shift;        // e'(reference), used when the model shifts
    double frozen_norm = 1.0;  // exact cosine: || e(input) ||

    Var map(Tape& tape, Var act) const {
        const Tensor* shift_ptr =
            model->config().shift_mode == ShiftMode::kReferenceShift ? &shift
                                                                     : nullptr;
        Var emb = model->tail_map(tape, act, layer_index, shift_ptr);
        if (model->config().head == SimilarityHead::kCosine) {
            if (mode == AttributionMode::kExact) {
                emb = tape.scale(emb, 1.0 / frozen_norm);
            } else {
                emb = tape.l2_normalize(emb);
            }
        }
        return emb;
    }
};

}  // namespace detail

// J = (1/N) sum_n d(map)/d(activation) at x(alpha_n), the straight line from
// the reference's layer activation to the input's. Throws when any step
// yields a non-finite Jacobian (the cosine singularity guard), naming
// alpha_n.
inline IntegratedJacobian integrated_jacobian_of(
    const detail::AttributionTarget& target, const Tensor& input_act,
    const Tensor& reference_act, int steps) {
    if (!input_act.same_shape(reference_act)) {
        throw ShapeError("integrated_jacobian: activation " +
                         Tensor::shape_str(input_act.shape()) +
                         " vs reference " +
                         Tensor::shape_str(reference_act.shape()));
    }
    if (steps < 1) throw ConfigError("integrated_jacobian: N must be >= 1");

    const std::size_t in_dim = input_act.numel();
    IntegratedJacobian result;
    result.layer_index = target.layer_index;
    result.steps = steps;

    Tape tape;
    Tensor point = reference_act;
    Tensor sum;  // D x in_dim accumulator, fixed index order over n
    for (int n = 1; n <= steps; ++n) {
        const double alpha =
            static_cast<double>(n) / static_cast<double>(steps);
        for (std::size_t i = 0; i < in_dim; ++i) {
            point[i] =
                reference_act[i] + alpha * (input_act[i] - reference_act[i]);
        }
        tape.reset();
        Var act = tape.input(point);
        Var out = target.map(tape, act);
        auto out_span = tape.value_span(out);
        const std::size_t out_dim = out_span.size();
        if (sum.numel() == 0) sum = Tensor({out_dim, in_dim});
        for (std::size_t k = 0; k < out_dim; ++k) {
            tape.backward(out, k);
            auto gs = tape.grad_span(act);
            double* row = sum.data() + k * in_dim;
            for (std::size_t i = 0; i < in_dim; ++i) {
                const double v = gs[i];
                if (!std::isfinite(v)) {
                    throw NonFiniteError(
                        "integrated_jacobian: non-finite Jacobian at alpha=" +
                            std::to_string(alpha) + " (k=" +
                            std::to_string(k) + ", i=" + std::to_string(i) +
                            ")",
                        k, i);
                }
                row[i] += v;
            }
        }
    }
    const double inv = 1.0 / static_cast<double>(steps);
    for (std::size_t i = 0; i < sum.numel(); ++i) sum[i] *= inv;
    result.values = std::move(sum);
    return result;
}

// Convenience overload working from token sequences.
inline IntegratedJacobian integrated_jacobian(const SiameseEncoder& model,
                                              const TokenSeq& input,
                                              const TokenSeq& reference,
                                              int layer_index, int steps,
                                              AttributionMode mode =
                                                  AttributionMode::kExact) {
    detail::AttributionTarget target;
    target.model = &model;
    target.layer_index = layer_index;
    target.mode = mode;
    if (model.config().shift_mode == ShiftMode::kReferenceShift) {
        target.shift = model.shift_vector(input.ids.size());
    }
    if (mode == AttributionMode::kExact &&
        model.config().head == SimilarityHead::kCosine) {
        target.frozen_norm = model.encode(input).embedding.norm();
        if (target.frozen_norm == 0.0) target.frozen_norm = 1.0;
    }
    Tensor act_in =
        model.encode_raw(input).activations[static_cast<std::size_t>(
            layer_index)].reps;
    Tensor act_ref =
        model.encode_raw(reference).activations[static_cast<std::size_t>(
            layer_index)].reps;
    return integrated_jacobian_of(target, act_in, act_ref, steps);
}

// Feature-pair matrix A_ij = (a - r_a)_i (J_a^T J_b)_ij (b - r_b)_j. The
// contraction goes through the D-dimensional embedding space first
// (u = J_a (a - r_a) is never needed; instead P = J_a^T and Q = J_b are
// contracted with the difference vectors), so J_a^T J_b is never
// materialized for large token counts.
inline Tensor attribution_matrix(const Tensor& jac_a, const Tensor& jac_b,
                                 const Tensor& diff_a, const Tensor& diff_b) {
    const std::size_t d_out = jac_a.rows();
    if (jac_b.rows() != d_out) {
        throw ShapeError("attribution_matrix: embedding dims " +
                         std::to_string(d_out) + " vs " +
                         std::to_string(jac_b.rows()));
    }
    const std::size_t na = jac_a.cols();
    const std::size_t nb = jac_b.cols();
    if (diff_a.numel() != na || diff_b.numel() != nb) {
        throw ShapeError("attribution_matrix: difference lengths " +
                         std::to_string(diff_a.numel()) + "/" +
                         std::to_string(diff_b.numel()) + " vs Jacobian " +
                         std::to_string(na) + "/" + std::to_string(nb));
    }
    // wa[k][i] = (J_a)_ki * (a - r_a)_i, wb likewise; A_ij = sum_k wa_ki wb_kj
    Tensor wa({d_out, na});
    Tensor wb({d_out, nb});
    for (std::size_t k = 0; k < d_out; ++k) {
        for (std::size_t i = 0; i < na; ++i) {
            wa.at(k, i) = jac_a.at(k, i) * diff_a[i];
        }
        for (std::size_t j = 0; j < nb; ++j) {
            wb.at(k, j) = jac_b.at(k, j) * diff_b[j];
        }
    }
    Tensor a({na, nb});
    for (std::size_t k = 0; k < d_out; ++k) {
        const double* wr = wa.data() + k * na;
        const double* wc = wb.data() + k * nb;
        for (std::size_t i = 0; i < na; ++i) {
            const double wi = wr[i];
            double* arow = a.data() + i * nb;
            for (std::size_t j = 0; j < nb; ++j) {
                arow[j] += wi * wc[j];
            }
        }
    }
    return a;
}

// Sums d x d feature blocks into token-token cells. The total is preserved
// exactly up to float reassociation.
inline Tensor reduce_to_tokens(const Tensor& feature_matrix,
                               std::size_t tokens_a, std::size_t tokens_b) {
    const std::size_t na = feature_matrix.rows();
    const std::size_t nb = feature_matrix.cols();
    if (tokens_a == 0 || tokens_b == 0 || na % tokens_a != 0 ||
        nb % tokens_b != 0) {
        throw ShapeError("reduce_to_tokens: feature dims " +
                         std::to_string(na) + "x" + std::to_string(nb) +
                         " not divisible into " + std::to_string(tokens_a) +
                         "x" + std::to_string(tokens_b) + " tokens");
    }
    const std::size_t da = na / tokens_a;
    const std::size_t db = nb / tokens_b;
    if (da != db) {
        throw ShapeError("reduce_to_tokens: block sizes differ: " +
                         std::to_string(da) + " vs " + std::to_string(db));
    }
    Tensor out({tokens_a, tokens_b});
    for (std::size_t i = 0; i < na; ++i) {
        const std::size_t ti = i / da;
        for (std::size_t j = 0; j < nb; ++j) {
            out.at(ti, j / db) += feature_matrix.at(i, j);
        }
    }
    return out;
}

namespace detail {

// Word units: each word span plus every special token as its own unit.
inline std::vector<std::pair<std::size_t, std::size_t>> word_units(
    const std::vector<std::pair<std::size_t, std::size_t>>& spans,
    std::size_t token_count) {
    std::vector<char> covered(token_count, 0);
    for (const auto& [s, e] : spans) {
        if (s >= e || e > token_count) {
            throw ShapeError("word span [" + std::to_string(s) + ", " +
                             std::to_string(e) + ") invalid for " +
                             std::to_string(token_count) + " tokens");
        }
        for (std::size_t i = s; i < e; ++i) {
            if (covered[i]) {
                throw ShapeError("overlapping word spans at token " +
                                 std::to_string(i));
            }
            covered[i] = 1;
        }
    }
    std::vector<std::pair<std::size_t, std::size_t>> units;
    std::size_t next_span = 0;
    std::vector<std::pair<std::size_t, std::size_t>> sorted = spans;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < token_count;) {
        if (next_span < sorted.size() && sorted[next_span].first == i) {
            units.push_back(sorted[next_span]);
            i = sorted[next_span].second;
            ++next_span;
        } else {
            units.emplace_back(i, i + 1);  // special token as its own unit
            ++i;
        }
    }
    return units;
}

}  // namespace detail

struct WordMatrix {
    Tensor mean;  // paper-style averaged cells
    Tensor sum;   // conserves the total exactly
    std::vector<std::pair<std::size_t, std::size_t>> units_a, units_b;
};

// Averages token blocks into word-word cells; special tokens stay as their
// own units. The companion sum matrix preserves the matrix total.
inline WordMatrix tokens_to_words(
    const Tensor& token_matrix,
    const std::vector<std::pair<std::size_t, std::size_t>>& spans_a,
    const std::vector<std::pair<std::size_t, std::size_t>>& spans_b) {
    auto units_a = detail::word_units(spans_a, token_matrix.rows());
    auto units_b = detail::word_units(spans_b, token_matrix.cols());
    WordMatrix wm;
    wm.units_a = units_a;
    wm.units_b = units_b;
    wm.mean = Tensor({units_a.size(), units_b.size()});
    wm.sum = Tensor({units_a.size(), units_b.size()});
    for (std::size_t ui = 0; ui < units_a.size(); ++ui) {
        for (std::size_t uj = 0; uj < units_b.size(); ++uj) {
            double total = 0.0;
            std::size_t cells = 0;
            for (std::size_t i = units_a[ui].first; i < units_a[ui].second;
                 ++i) {
                for (std::size_t j = units_b[uj].first;
                     j < units_b[uj].second; ++j) {
                    total += token_matrix.at(i, j);
                    ++cells;
                }
            }
            wm.sum.at(ui, uj) = total;
            wm.mean.at(ui, uj) = total / static_cast<double>(cells);
        }
    }
    return wm;
}

// End-to-end attribution for one sentence pair: references, paths,
// integrated Jacobians, feature-pair matrix, requested reduction, the four
// boundary terms and the numerical attribution error.
inline AttributionResult attribute_pair(const SiameseEncoder& model,
                                        const TokenSeq& sent_a,
                                        const TokenSeq& sent_b,
                                        const AttributionRequest& request) {
    const EncoderConfig& config = model.config();
    request.validate(config);
    const int layer = request.resolve_layer(config);
    const bool shifted = config.shift_mode == ShiftMode::kReferenceShift;
    const bool cosine = config.head == SimilarityHead::kCosine;

    TokenSeq ref_a = make_reference(sent_a);
    TokenSeq ref_b = make_reference(sent_b);

    EncodeResult enc_a = model.encode(sent_a);
    EncodeResult enc_b = model.encode(sent_b);
    EncodeResult enc_ra = model.encode(ref_a);
    EncodeResult enc_rb = model.encode(ref_b);

    AttributionResult res;
    res.reduce = request.reduce;
    res.steps = request.steps;
    res.layer_index = layer;
    res.mode = request.mode;
    res.tokens_a = sent_a.surface(model.vocab());
    res.tokens_b = sent_b.surface(model.vocab());
    res.word_spans_a = sent_a.word_spans;
    res.word_spans_b = sent_b.word_spans;
    res.score = model.head_score(enc_a.embedding, enc_b.embedding);
    if (request.mode == AttributionMode::kExact) {
        // By construction the shifted model maps references to the zero
        // vector; with the zero-cosine convention all three terms are 0.
        res.ref_sim_a = 0.0;
        res.ref_sim_b = 0.0;
        res.ref_term = 0.0;
    } else {
        res.ref_sim_a = model.head_score(enc_a.embedding, enc_rb.embedding);
        res.ref_sim_b = model.head_score(enc_b.embedding, enc_ra.embedding);
        res.ref_term = model.head_score(enc_ra.embedding, enc_rb.embedding);
    }

    const Tensor& act_a = enc_a.activations[static_cast<std::size_t>(layer)].reps;
    const Tensor& act_b = enc_b.activations[static_cast<std::size_t>(layer)].reps;
    const Tensor& act_ra =
        enc_ra.activations[static_cast<std::size_t>(layer)].reps;
    const Tensor& act_rb =
        enc_rb.activations[static_cast<std::size_t>(layer)].reps;

    Tensor diff_a({act_a.numel()});
    Tensor diff_b({act_b.numel()});
    double norm_a = 0.0, norm_b = 0.0;
    for (std::size_t i = 0; i < diff_a.numel(); ++i) {
        diff_a[i] = act_a.values()[i] - act_ra.values()[i];
        norm_a += diff_a[i] * diff_a[i];
    }
    for (std::size_t i = 0; i < diff_b.numel(); ++i) {
        diff_b[i] = act_b.values()[i] - act_rb.values()[i];
        norm_b += diff_b[i] * diff_b[i];
    }

    const std::size_t ta = sent_a.ids.size();
    const std::size_t tb = sent_b.ids.size();
    Tensor feature;
    if (norm_a == 0.0 || norm_b == 0.0) {
        // degenerate pair: input equals its reference, matrix is all zeros
        feature = Tensor({diff_a.numel(), diff_b.numel()});
    } else {
        detail::AttributionTarget target_a{&model, layer, request.mode,
                                           Tensor{}, 1.0};
        detail::AttributionTarget target_b = target_a;
        if (shifted) {
            target_a.shift = model.shift_vector(ta);
            target_b.shift = model.shift_vector(tb);
        }
        if (request.mode == AttributionMode::kExact && cosine) {
            double fa = enc_a.embedding.norm();
            double fb = enc_b.embedding.norm();
            target_a.frozen_norm = fa == 0.0 ? 1.0 : fa;
            target_b.frozen_norm = fb == 0.0 ? 1.0 : fb;
        }
        IntegratedJacobian jac_a =
            integrated_jacobian_of(target_a, act_a, act_ra, request.steps);
        IntegratedJacobian jac_b =
            integrated_jacobian_of(target_b, act_b, act_rb, request.steps);
        feature =
            attribution_matrix(jac_a.values, jac_b.values, diff_a, diff_b);
    }
    res.total = feature.sum();
    res.attribution_error =
        std::abs(res.total - (res.score - res.ref_sim_a - res.ref_sim_b +
                              res.ref_term));
    if (request.mode == AttributionMode::kApproximate) {
        res.score_plus_one_gap = res.total - (res.score + 1.0);
    }

    switch (request.reduce) {
        case Reduce::kFeature:
            res.matrix = std::move(feature);
            break;
        case Reduce::kToken:
            res.matrix = reduce_to_tokens(feature, ta, tb);
            break;
        case Reduce::kWord: {
            Tensor tok = reduce_to_tokens(feature, ta, tb);
            WordMatrix wm =
                tokens_to_words(tok, sent_a.word_spans, sent_b.word_spans);
            res.matrix = std::move(wm.mean);
            res.matrix_sum = std::move(wm.sum);
            break;
        }
    }
    res.matrix.ensure_finite("attribution matrix");
    return res;
}

}  // namespace ijat
