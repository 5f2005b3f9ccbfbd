#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "ijat/attribution.hpp"
#include "ijat/attribution_io.hpp"
#include "ijat/jacobian.hpp"
#include "ijat/rng.hpp"
#include "ijat/synth.hpp"

using namespace ijat;

namespace {

Vocab corpus_vocab() {
    PairDataset ds = generate_synthetic_corpus(3, 80);
    std::vector<std::string> sentences;
    for (const PairRecord& r : ds.all()) {
        sentences.push_back(r.sentence_a);
        sentences.push_back(r.sentence_b);
    }
    return build_vocab(sentences);
}

SiameseEncoder toy_model(int layers, SimilarityHead head, ShiftMode shift,
                         std::uint64_t seed = 5) {
    EncoderConfig c;
    c.num_layers = layers;
    c.model_dim = 8;
    c.num_heads = 2;
    c.ffn_dim = 16;
    c.max_seq_len = 32;
    c.head = head;
    c.shift_mode = shift;
    c.seed = seed;
    return SiameseEncoder(c, corpus_vocab());
}

}  // namespace

TEST_CASE("interpolation path", "[attribution]") {
    SECTION("midpoint plus endpoint") {
        auto pts = interpolation_path(Tensor::vector({2}),
                                      Tensor::vector({0}), 2);
        REQUIRE(pts.size() == 2);
        CHECK(pts[0][0] == 1.0);
        CHECK(pts[1][0] == 2.0);
    }
    SECTION("single step is the input itself") {
        auto pts = interpolation_path(Tensor::vector({3, -1}),
                                      Tensor::vector({1, 1}), 1);
        REQUIRE(pts.size() == 1);
        CHECK(pts[0][0] == 3.0);
        CHECK(pts[0][1] == -1.0);
    }
    SECTION("degenerate path repeats the point") {
        Tensor x = Tensor::vector({0.5, 0.25});
        auto pts = interpolation_path(x, x, 4);
        REQUIRE(pts.size() == 4);
        for (const Tensor& p : pts) CHECK(p.max_abs_diff(x) == 0.0);
    }
    SECTION("shape mismatch") {
        CHECK_THROWS_AS(interpolation_path(Tensor::vector({1}),
                                           Tensor::vector({1, 2}), 2),
                        ShapeError);
    }
}

TEST_CASE("integrated jacobian of an affine tail is the map itself",
          "[attribution]") {
    SiameseEncoder model =
        toy_model(0, SimilarityHead::kDot, ShiftMode::kReferenceShift);
    TokenSeq seq = tokenize("the dog runs", model.vocab());
    TokenSeq ref = make_reference(seq);

    // pooling-only tail: d(out_k)/d(act[t,j]) = proj_w[j,k] / T
    const Tensor& proj = model.weight("proj_w");
    const std::size_t t_count = seq.ids.size();
    const std::size_t d = 8;
    Tensor expected({d, t_count * d});
    for (std::size_t k = 0; k < d; ++k) {
        for (std::size_t t = 0; t < t_count; ++t) {
            for (std::size_t j = 0; j < d; ++j) {
                expected.at(k, t * d + j) =
                    proj.at(j, k) / static_cast<double>(t_count);
            }
        }
    }
    for (int steps : {1, 7}) {
        IntegratedJacobian jac =
            integrated_jacobian(model, seq, ref, 0, steps);
        CHECK(jac.values.max_abs_diff(expected) < 1e-14);
    }
}

TEST_CASE("integrated jacobian converges with the step count",
          "[attribution]") {
    SiameseEncoder model = toy_model(1, SimilarityHead::kDot,
                                     ShiftMode::kNone);
    TokenSeq seq = tokenize("a cat sleeps", model.vocab());
    TokenSeq ref = make_reference(seq);
    auto jac = [&](int n) {
        return integrated_jacobian(model, seq, ref, 1, n,
                                   AttributionMode::kApproximate)
            .values;
    };
    Tensor hi = jac(10000);
    double gap1 = jac(1).max_abs_diff(hi);
    double gap200 = jac(200).max_abs_diff(hi);
    CHECK(gap200 < gap1);
}

TEST_CASE("integrated jacobian on a degenerate path", "[attribution]") {
    SiameseEncoder model = toy_model(1, SimilarityHead::kDot,
                                     ShiftMode::kNone);
    TokenSeq ref = make_reference(tokenize("the dog runs", model.vocab()));
    IntegratedJacobian jac =
        integrated_jacobian(model, ref, ref, 1, 5,
                            AttributionMode::kApproximate);
    // constant path: the average equals the Jacobian at the point
    Tensor act = model.encode_raw(ref).activations[1].reps;
    auto fn = [&](Tape& t, Var v) { return model.tail_map(t, v, 1, nullptr); };
    Tensor at_point = jacobian(fn, act);
    CHECK(jac.values.max_abs_diff(at_point) < 1e-12);
}

TEST_CASE("attribution matrix algebra", "[attribution]") {
    SECTION("identity jacobians reduce to an outer product") {
        Tensor id = Tensor::identity(2);
        Tensor a = attribution_matrix(id, id, Tensor::vector({1, 2}),
                                      Tensor::vector({3, 4}));
        CHECK(a.at(0, 0) == 3.0);
        CHECK(a.at(0, 1) == 0.0);
        CHECK(a.at(1, 0) == 0.0);
        CHECK(a.at(1, 1) == 8.0);
        CHECK(a.sum() == 11.0);  // = a . b
    }
    SECTION("zero jacobian gives a zero matrix") {
        Tensor zero({2, 3});
        Tensor a = attribution_matrix(zero, Tensor::identity(2),
                                      Tensor::vector({1, 1, 1}),
                                      Tensor::vector({1, 1}));
        for (double v : a.values()) CHECK(v == 0.0);
    }
    SECTION("shape mismatches are rejected") {
        CHECK_THROWS_AS(
            attribution_matrix(Tensor::identity(2), Tensor::identity(3),
                               Tensor::vector({1, 2}),
                               Tensor::vector({1, 2, 3})),
            ShapeError);
        CHECK_THROWS_AS(
            attribution_matrix(Tensor::identity(2), Tensor::identity(2),
                               Tensor::vector({1}), Tensor::vector({1, 2})),
            ShapeError);
    }
    SECTION("pooling-only model matches the direct bilinear formula") {
        SiameseEncoder model =
            toy_model(0, SimilarityHead::kDot, ShiftMode::kReferenceShift);
        TokenSeq a = tokenize("the dog runs", model.vocab());
        TokenSeq b = tokenize("a cat sleeps here", model.vocab());
        AttributionRequest req{0, 1, AttributionMode::kExact,
                               Reduce::kFeature};
        AttributionResult res = attribute_pair(model, a, b, req);

        // direct: A_ij = diff_a_i (M^T M)_ij diff_b_j with M the affine tail
        TokenSeq ra = make_reference(a), rb = make_reference(b);
        Tensor act_a = model.encode_raw(a).activations[0].reps;
        Tensor act_ra = model.encode_raw(ra).activations[0].reps;
        Tensor act_b = model.encode_raw(b).activations[0].reps;
        Tensor act_rb = model.encode_raw(rb).activations[0].reps;
        IntegratedJacobian ja = integrated_jacobian(model, a, ra, 0, 1);
        IntegratedJacobian jb = integrated_jacobian(model, b, rb, 0, 1);
        const std::size_t na = act_a.numel(), nb = act_b.numel();
        double worst = 0.0;
        for (std::size_t i = 0; i < na; ++i) {
            for (std::size_t j = 0; j < nb; ++j) {
                double mtm = 0.0;
                for (std::size_t k = 0; k < 8; ++k) {
                    mtm += ja.values.at(k, i) * jb.values.at(k, j);
                }
                double direct = (act_a.values()[i] - act_ra.values()[i]) *
                                mtm *
                                (act_b.values()[j] - act_rb.values()[j]);
                worst = std::max(worst,
                                 std::abs(direct - res.matrix.at(i, j)));
            }
        }
        CHECK(worst < 1e-12);
    }
}

TEST_CASE("reduce_to_tokens", "[attribution]") {
    SECTION("block trace") {
        Tensor m = reduce_to_tokens(Tensor::identity(4), 2, 2);
        CHECK(m.at(0, 0) == 2.0);
        CHECK(m.at(0, 1) == 0.0);
        CHECK(m.at(1, 0) == 0.0);
        CHECK(m.at(1, 1) == 2.0);
    }
    SECTION("total is conserved") {
        Rng rng(11);
        Tensor f({6, 9});
        for (std::size_t i = 0; i < f.numel(); ++i) f[i] = rng.normal();
        Tensor m = reduce_to_tokens(f, 2, 3);
        CHECK(std::abs(m.sum() - f.sum()) < 1e-12);
    }
    SECTION("single-token inputs give a 1x1 total") {
        Tensor f = Tensor::matrix(2, 2, {1, 2, 3, 4});
        Tensor m = reduce_to_tokens(f, 1, 1);
        REQUIRE(m.numel() == 1);
        CHECK(m[0] == 10.0);
    }
    SECTION("non-divisible shapes are rejected") {
        CHECK_THROWS_AS(reduce_to_tokens(Tensor::identity(4), 3, 2),
                        ShapeError);
    }
}

TEST_CASE("tokens_to_words", "[attribution]") {
    using Span = std::pair<std::size_t, std::size_t>;
    SECTION("mean of a uniform block") {
        Tensor m = Tensor::matrix(2, 2, {1, 1, 1, 1});
        WordMatrix wm = tokens_to_words(m, {Span{0, 2}}, {Span{0, 2}});
        REQUIRE(wm.mean.numel() == 1);
        CHECK(wm.mean[0] == 1.0);
        CHECK(wm.sum[0] == 4.0);
    }
    SECTION("singleton spans leave the matrix unchanged") {
        Tensor m = Tensor::matrix(2, 2, {1, 2, 3, 4});
        WordMatrix wm = tokens_to_words(m, {Span{0, 1}, Span{1, 2}},
                                        {Span{0, 1}, Span{1, 2}});
        CHECK(wm.mean.max_abs_diff(m) == 0.0);
        CHECK(wm.sum.max_abs_diff(m) == 0.0);
    }
    SECTION("arithmetic mean of a block") {
        Tensor m = Tensor::matrix(2, 2, {0, 2, 4, 6});
        WordMatrix wm = tokens_to_words(m, {Span{0, 2}}, {Span{0, 2}});
        CHECK(wm.mean[0] == 3.0);
    }
    SECTION("overlapping spans are rejected") {
        Tensor m = Tensor::matrix(2, 2, {1, 2, 3, 4});
        CHECK_THROWS_AS(
            tokens_to_words(m, {Span{0, 2}, Span{1, 2}}, {Span{0, 2}}),
            ShapeError);
    }
    SECTION("specials stay as their own units and the sum side conserves") {
        // 4 tokens: CLS, two word tokens, EOS; one 2-token word
        Rng rng(13);
        Tensor m({4, 4});
        for (std::size_t i = 0; i < m.numel(); ++i) m[i] = rng.normal();
        WordMatrix wm = tokens_to_words(m, {Span{1, 3}}, {Span{1, 3}});
        REQUIRE(wm.mean.rows() == 3);  // CLS, word, EOS
        CHECK(std::abs(wm.sum.sum() - m.sum()) < 1e-12);
    }
}

TEST_CASE("attribute_pair on the linear configuration", "[attribution]") {
    SiameseEncoder model =
        toy_model(0, SimilarityHead::kDot, ShiftMode::kReferenceShift);
    TokenSeq a = tokenize("the dog runs in the park.", model.vocab());
    TokenSeq b = tokenize("a cat sleeps.", model.vocab());
    AttributionRequest req{0, 1, AttributionMode::kExact, Reduce::kToken};
    AttributionResult res = attribute_pair(model, a, b, req);
    CHECK(res.attribution_error < 1e-12);
    CHECK(res.ref_sim_a == 0.0);
    CHECK(res.ref_sim_b == 0.0);
    CHECK(res.ref_term == 0.0);
    CHECK(res.score == Catch::Approx(model.similarity(a, b)).margin(1e-15));
    // stored fields reproduce the error
    double recomputed = std::abs(
        res.matrix.sum() -
        (res.score - res.ref_sim_a - res.ref_sim_b + res.ref_term));
    CHECK(std::abs(recomputed - res.attribution_error) < 1e-12);
}

TEST_CASE("attribute_pair convergence and symmetry", "[attribution]") {
    SiameseEncoder model =
        toy_model(2, SimilarityHead::kCosine, ShiftMode::kReferenceShift);
    TokenSeq a = tokenize("the dog runs in the park.", model.vocab());
    TokenSeq b = tokenize("a cat sleeps at home.", model.vocab());

    SECTION("error shrinks with N in exact mode") {
        AttributionRequest coarse{-1, 20, AttributionMode::kExact,
                                  Reduce::kToken};
        AttributionRequest fine{-1, 200, AttributionMode::kExact,
                                Reduce::kToken};
        double e_coarse = attribute_pair(model, a, b, coarse).attribution_error;
        double e_fine = attribute_pair(model, a, b, fine).attribution_error;
        CHECK(e_fine < e_coarse);
    }
    SECTION("matrix transposes when the pair swaps") {
        SiameseEncoder unshifted =
            toy_model(2, SimilarityHead::kCosine, ShiftMode::kNone);
        for (AttributionMode mode :
             {AttributionMode::kExact, AttributionMode::kApproximate}) {
            const SiameseEncoder& m =
                mode == AttributionMode::kExact ? model : unshifted;
            AttributionRequest req{-1, 25, mode, Reduce::kToken};
            Tensor ab = attribute_pair(m, a, b, req).matrix;
            Tensor ba = attribute_pair(m, b, a, req).matrix;
            REQUIRE(ab.rows() == ba.cols());
            double worst = 0.0;
            for (std::size_t i = 0; i < ab.rows(); ++i) {
                for (std::size_t j = 0; j < ab.cols(); ++j) {
                    worst = std::max(worst,
                                     std::abs(ab.at(i, j) - ba.at(j, i)));
                }
            }
            CHECK(worst < 1e-10);
        }
    }
}

TEST_CASE("attribute_pair in approximate mode", "[attribution]") {
    SiameseEncoder model =
        toy_model(2, SimilarityHead::kCosine, ShiftMode::kNone, 8);
    TokenSeq a = tokenize("the dog runs in the park.", model.vocab());

    SECTION("four-term identity tightens with N on a self pair") {
        AttributionRequest coarse{-1, 10, AttributionMode::kApproximate,
                                  Reduce::kToken};
        AttributionRequest fine{-1, 300, AttributionMode::kApproximate,
                                Reduce::kToken};
        AttributionResult rc = attribute_pair(model, a, a, coarse);
        AttributionResult rf = attribute_pair(model, a, a, fine);
        CHECK(rf.score == Catch::Approx(1.0).margin(1e-6));
        CHECK(rf.attribution_error < rc.attribution_error);
        // total approaches 1 - 2 rho + ref_term
        const double expected =
            rf.score - rf.ref_sim_a - rf.ref_sim_b + rf.ref_term;
        CHECK(rf.total == Catch::Approx(expected).margin(0.02));
        CHECK(rf.score_plus_one_gap ==
              Catch::Approx(rf.total - rf.score - 1.0).margin(1e-12));
    }
    SECTION("exact mode on an unshifted model is a configuration error") {
        AttributionRequest req{-1, 5, AttributionMode::kExact, Reduce::kToken};
        CHECK_THROWS_AS(attribute_pair(model, a, a, req), ConfigError);
    }
    SECTION("steps must be positive") {
        AttributionRequest req{-1, 0, AttributionMode::kApproximate,
                               Reduce::kToken};
        CHECK_THROWS_AS(attribute_pair(model, a, a, req), ConfigError);
    }
}

TEST_CASE("degenerate pair: input equals its reference", "[attribution]") {
    SiameseEncoder model =
        toy_model(1, SimilarityHead::kCosine, ShiftMode::kReferenceShift);
    TokenSeq ref = make_reference(tokenize("the dog runs", model.vocab()));
    AttributionRequest req{-1, 5, AttributionMode::kExact, Reduce::kToken};
    AttributionResult res = attribute_pair(model, ref, ref, req);
    for (double v : res.matrix.values()) CHECK(v == 0.0);
    CHECK(res.total == 0.0);
}

TEST_CASE("word reduction carries both mean and sum matrices",
          "[attribution]") {
    SiameseEncoder model =
        toy_model(1, SimilarityHead::kCosine, ShiftMode::kReferenceShift);
    TokenSeq a = tokenize("the dog runs.", model.vocab());
    TokenSeq b = tokenize("a cat sleeps.", model.vocab());
    AttributionRequest req{-1, 10, AttributionMode::kExact, Reduce::kWord};
    AttributionResult res = attribute_pair(model, a, b, req);
    CHECK(res.matrix_sum.same_shape(res.matrix));
    CHECK(std::abs(res.matrix_sum.sum() - res.total) < 1e-12);
}

TEST_CASE("attribution exports", "[attribution]") {
    SiameseEncoder model =
        toy_model(1, SimilarityHead::kCosine, ShiftMode::kReferenceShift);
    TokenSeq a = tokenize("the dog runs.", model.vocab());
    TokenSeq b = tokenize("a cat sleeps.", model.vocab());
    AttributionRequest req{-1, 5, AttributionMode::kExact, Reduce::kToken};
    AttributionResult res = attribute_pair(model, a, b, req);

    auto j = attribution_to_json(res);
    CHECK(j["mode"] == "exact");
    CHECK(j["matrix"].size() == res.matrix.rows());
    CHECK(j["score"].get<double>() == res.score);

    std::string csv = attribution_to_csv(res);
    CHECK(csv.find("[CLS]") != std::string::npos);
    CHECK(csv.find("dog") != std::string::npos);

    std::string svg = attribution_to_svg(res);
    CHECK(svg.find("<svg") != std::string::npos);
    CHECK(svg.find("err=") != std::string::npos);
    // deterministic rendering
    CHECK(svg == attribution_to_svg(res));
}
