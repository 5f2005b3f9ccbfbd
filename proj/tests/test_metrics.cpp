#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "ijat/metrics.hpp"
#include "ijat/rng.hpp"

using namespace ijat;

TEST_CASE("spearman", "[metrics]") {
    SECTION("identical series") {
        std::vector<double> x = {3, 1, 4, 1.5, 9};
        CHECK(spearman(x, x) == Catch::Approx(1.0).margin(1e-12));
    }
    SECTION("reversed order") {
        std::vector<double> x = {1, 2, 3, 4};
        std::vector<double> y = {4, 3, 2, 1};
        CHECK(spearman(x, y) == Catch::Approx(-1.0).margin(1e-12));
    }
    SECTION("rank formula oracle: 1 - 6 sum d^2 / (n (n^2 - 1))") {
        std::vector<double> x = {1, 2, 3, 4};
        std::vector<double> y = {1, 3, 2, 4};
        CHECK(spearman(x, y) == Catch::Approx(0.8).margin(1e-12));
    }
    SECTION("constant input raises") {
        std::vector<double> x = {1, 1, 1};
        std::vector<double> y = {1, 2, 3};
        CHECK_THROWS_AS(spearman(x, y), DegenerateInputError);
        CHECK_THROWS_AS(spearman(y, x), DegenerateInputError);
    }
    SECTION("invariant under strictly monotone transforms") {
        Rng rng(21);
        for (int rep = 0; rep < 30; ++rep) {
            std::vector<double> x, y;
            for (int i = 0; i < 12; ++i) {
                x.push_back(rng.normal());
                y.push_back(rng.normal());
            }
            double base = spearman(x, y);
            std::vector<double> tx = x;
            for (double& v : tx) v = std::exp(2.0 * v) + 5.0;
            CHECK(spearman(tx, y) == Catch::Approx(base).margin(1e-12));
        }
    }
    SECTION("average ranks on ties") {
        std::vector<double> x = {1, 2, 2, 3};
        std::vector<double> y = {10, 20, 30, 40};
        // ranks of x: 1, 2.5, 2.5, 4
        CHECK(spearman(x, y) ==
              Catch::Approx(pearson(std::vector<double>{1, 2.5, 2.5, 4},
                                    std::vector<double>{1, 2, 3, 4}))
                  .margin(1e-12));
    }
}

TEST_CASE("pearson", "[metrics]") {
    SECTION("positive affine relation") {
        std::vector<double> x = {0, 1, 2, 5};
        std::vector<double> y = {1, 3, 5, 11};  // 2x + 1
        CHECK(pearson(x, y) == Catch::Approx(1.0).margin(1e-12));
    }
    SECTION("negation") {
        std::vector<double> x = {0, 1, 2};
        std::vector<double> y = {0, -1, -2};
        CHECK(pearson(x, y) == Catch::Approx(-1.0).margin(1e-12));
    }
    SECTION("closed-form hand computation") {
        std::vector<double> x = {0, 1, 2};
        std::vector<double> y = {0, 1, 4};
        CHECK(pearson(x, y) == Catch::Approx(0.9608).margin(1e-4));
    }
    SECTION("invariant under positive affine transforms") {
        Rng rng(22);
        std::vector<double> x, y;
        for (int i = 0; i < 15; ++i) {
            x.push_back(rng.normal());
            y.push_back(rng.normal());
        }
        double base = pearson(x, y);
        std::vector<double> tx = x;
        for (double& v : tx) v = 3.5 * v - 2.0;
        CHECK(pearson(tx, y) == Catch::Approx(base).margin(1e-12));
    }
    SECTION("length mismatch") {
        std::vector<double> x = {1, 2};
        std::vector<double> y = {1, 2, 3};
        CHECK_THROWS_AS(pearson(x, y), ShapeError);
    }
}

TEST_CASE("jaccard_topk", "[metrics]") {
    SECTION("identical matrices give 1 for any k") {
        Tensor m = Tensor::matrix(2, 3, {5, 1, 3, 2, 4, 0});
        for (std::size_t k : {1u, 3u, 6u}) {
            CHECK(jaccard_topk(m, m, k) == 1.0);
        }
    }
    SECTION("disjoint top sets give 0") {
        Tensor m1 = Tensor::matrix(1, 4, {9, 8, 0, 0});
        Tensor m2 = Tensor::matrix(1, 4, {0, 0, 8, 9});
        CHECK(jaccard_topk(m1, m2, 2) == 0.0);
    }
    SECTION("hand-enumerated overlap of 2 in top-3") {
        Tensor m1 = Tensor::matrix(3, 3, {9, 8, 7, 0, 0, 0, 0, 0, 0});
        Tensor m2 = Tensor::matrix(3, 3, {9, 8, 0, 7, 0, 0, 0, 0, 0});
        // top-3 sets {0,1,2} and {0,1,3}: intersection 2, union 4
        CHECK(jaccard_topk(m1, m2, 3) == Catch::Approx(0.5).margin(1e-15));
    }
    SECTION("symmetry in the matrix arguments") {
        Rng rng(23);
        Tensor m1({3, 3}), m2({3, 3});
        for (std::size_t i = 0; i < 9; ++i) {
            m1[i] = rng.normal();
            m2[i] = rng.normal();
        }
        CHECK(jaccard_topk(m1, m2, 3) == jaccard_topk(m2, m1, 3));
    }
    SECTION("ties break by cell index") {
        Tensor m1 = Tensor::matrix(1, 4, {1, 1, 1, 1});
        Tensor m2 = Tensor::matrix(1, 4, {1, 1, 1, 1});
        CHECK(jaccard_topk(m1, m2, 2) == 1.0);
    }
    SECTION("k beyond the cell count is rejected") {
        Tensor m = Tensor::matrix(1, 4, {1, 2, 3, 4});
        CHECK_THROWS_AS(jaccard_topk(m, m, 5), ShapeError);
    }
    SECTION("shape mismatch") {
        CHECK_THROWS_AS(
            jaccard_topk(Tensor::identity(2), Tensor::identity(3), 2),
            ShapeError);
    }
}

TEST_CASE("summarize", "[metrics]") {
    SECTION("all zeros") {
        std::vector<double> v = {0, 0, 0};
        DistributionSummary s = summarize(v);
        CHECK(s.mean == 0.0);
        CHECK(s.stdev == 0.0);
        CHECK(s.count == 3);
    }
    SECTION("band fraction of an out-of-band sample") {
        std::vector<double> v = {-1, 1};
        CHECK(fraction_within(v, -0.1, 0.1) == 0.0);
    }
    SECTION("uniform sampling oracle at the 0.9 threshold") {
        Rng rng(24);
        std::vector<double> v;
        for (int i = 0; i < 1000; ++i) v.push_back(rng.uniform());
        CHECK(fraction_below(v, 0.9) == Catch::Approx(0.9).margin(0.03));
        std::vector<double> thresholds = {0.9};
        DistributionSummary s = summarize(v, thresholds);
        CHECK(s.cumulative[0] == Catch::Approx(0.9).margin(0.03));
    }
    SECTION("histogram counts sum to the sample count") {
        Rng rng(25);
        std::vector<double> v;
        for (int i = 0; i < 257; ++i) v.push_back(rng.normal());
        DistributionSummary s = summarize(v);
        std::size_t total = 0;
        for (std::size_t c : s.bin_counts) total += c;
        CHECK(total == v.size());
    }
    SECTION("cumulative fractions are nondecreasing") {
        Rng rng(26);
        std::vector<double> v;
        for (int i = 0; i < 100; ++i) v.push_back(rng.normal());
        std::vector<double> thresholds = {-1.0, 0.0, 0.5, 2.0};
        DistributionSummary s = summarize(v, thresholds);
        for (std::size_t i = 1; i < s.cumulative.size(); ++i) {
            CHECK(s.cumulative[i] >= s.cumulative[i - 1]);
        }
    }
    SECTION("histogram is permutation invariant") {
        std::vector<double> v = {3, 1, 2, 5, 4};
        std::vector<double> w = {5, 4, 3, 2, 1};
        DistributionSummary sv = summarize(v);
        DistributionSummary sw = summarize(w);
        CHECK(sv.bin_counts == sw.bin_counts);
    }
    SECTION("empty input raises") {
        std::vector<double> v;
        CHECK_THROWS_AS(summarize(v), DegenerateInputError);
    }
}
