#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "ijat/jacobian.hpp"
#include "ijat/rng.hpp"
#include "ijat/tape.hpp"
#include "ijat/tensor.hpp"

using namespace ijat;

namespace {

// mixed absolute/relative deviation against the finite-difference oracle
double max_rel_err(const Tensor& got, const Tensor& want) {
    REQUIRE(got.same_shape(want));
    double worst = 0.0;
    for (std::size_t i = 0; i < got.numel(); ++i) {
        const double denom = std::max(1.0, std::abs(want[i]));
        worst = std::max(worst, std::abs(got[i] - want[i]) / denom);
    }
    return worst;
}

Tensor random_tensor(Rng& rng, std::vector<std::size_t> shape,
                     double scale = 1.0) {
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.numel(); ++i) {
        t[i] = rng.normal(0.0, scale);
    }
    return t;
}

}  // namespace

TEST_CASE("tensor shape bookkeeping", "[numerics]") {
    Tensor t({2, 3});
    CHECK(t.numel() == 6);
    CHECK(t.rows() == 2);
    CHECK(t.cols() == 3);
    CHECK_THROWS_AS(Tensor({2, 2}, {1.0}), ShapeError);
    Tensor v = Tensor::vector({1.0, 2.0});
    CHECK(v.rows() == 1);
    CHECK(v.cols() == 2);
}

TEST_CASE("primitive forward values", "[numerics]") {
    Tape tape;

    SECTION("matmul with identity") {
        Var i2 = tape.constant(Tensor::identity(2));
        Var m = tape.constant(Tensor::matrix(2, 2, {1, 2, 3, 4}));
        Tensor out = tape.value(tape.matmul(i2, m));
        CHECK(out.values() == std::vector<double>{1, 2, 3, 4});
    }
    SECTION("l2 normalize 3-4-5") {
        Var v = tape.constant(Tensor::vector({3, 4}));
        Tensor out = tape.value(tape.l2_normalize(v));
        CHECK(out[0] == Catch::Approx(0.6).margin(1e-15));
        CHECK(out[1] == Catch::Approx(0.8).margin(1e-15));
    }
    SECTION("mean pool over the token axis") {
        Var m = tape.constant(Tensor::matrix(2, 2, {1, 2, 3, 4}));
        Tensor out = tape.value(tape.mean_pool_rows(m));
        CHECK(out.values() == std::vector<double>{2, 3});
    }
    SECTION("shape errors name the primitive") {
        Var a = tape.constant(Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6}));
        Var b = tape.constant(Tensor::matrix(2, 2, {1, 2, 3, 4}));
        CHECK_THROWS_WITH(tape.matmul(a, b),
                          Catch::Matchers::ContainsSubstring("matmul"));
        CHECK_THROWS_WITH(tape.add(a, b),
                          Catch::Matchers::ContainsSubstring("add"));
        CHECK_THROWS_WITH(tape.dot(a, b),
                          Catch::Matchers::ContainsSubstring("dot"));
    }
}

TEST_CASE("backward on simple programs", "[numerics]") {
    SECTION("quadratic: f(x) = x . x") {
        Tape tape;
        Var x = tape.input(Tensor::vector({1, 2}));
        Var y = tape.dot(x, x);
        tape.backward(y, 0);
        Tensor g = tape.grad(x);
        CHECK(g[0] == 2.0);
        CHECK(g[1] == 4.0);
    }
    SECTION("linear row: f(x) = Wx, component 1") {
        Tape tape;
        Var w = tape.constant(Tensor::matrix(2, 2, {1, 0, 0, 2}));
        Var x = tape.input(Tensor::matrix(2, 1, {5, 7}));
        Var y = tape.matmul(w, x);
        tape.backward(y, 1);
        Tensor g = tape.grad(x);
        CHECK(g[0] == 0.0);
        CHECK(g[1] == 2.0);
    }
    SECTION("tanh derivative against the finite-difference oracle") {
        auto fn = [](Tape& t, Var v) { return t.tanh(v); };
        Tensor x = Tensor::vector({0.5});
        Tensor jac = jacobian(fn, x);
        const double expected = 1.0 - std::tanh(0.5) * std::tanh(0.5);
        CHECK(jac[0] == Catch::Approx(expected).margin(1e-12));
        CHECK(jac[0] == Catch::Approx(0.78644).margin(1e-5));
        Tensor fd = finite_diff_jacobian(as_tensor_fn(fn), x, 1e-6);
        CHECK(std::abs(jac[0] - fd[0]) < 1e-9);
    }
    SECTION("backward component out of range") {
        Tape tape;
        Var x = tape.input(Tensor::vector({1, 2}));
        Var y = tape.dot(x, x);
        CHECK_THROWS_AS(tape.backward(y, 5), Error);
    }
    SECTION("single-use mode rejects a second pass") {
        Tape tape;
        tape.set_single_use(true);
        Var x = tape.input(Tensor::vector({1, 2}));
        Var y = tape.dot(x, x);
        tape.backward(y, 0);
        CHECK_THROWS_WITH(tape.backward(y, 0),
                          Catch::Matchers::ContainsSubstring("consumed"));
    }
}

TEST_CASE("jacobian basics", "[numerics]") {
    SECTION("identity map") {
        auto fn = [](Tape&, Var v) { return v; };
        Tensor jac = jacobian(fn, Tensor::vector({1, 2, 3}));
        CHECK(jac.max_abs_diff(Tensor::identity(3)) == 0.0);
    }
    SECTION("linear map is returned exactly") {
        Tensor w = Tensor::matrix(3, 2, {1, 2, 3, 4, 5, 6});
        auto fn = [&](Tape& t, Var v) {
            return t.matmul(t.constant(w), t.transpose(v));
        };
        Tensor jac = jacobian(fn, Tensor::vector({0.3, -0.7}));
        REQUIRE(jac.shape() == std::vector<std::size_t>{3, 2});
        for (std::size_t i = 0; i < 6; ++i) CHECK(jac[i] == w[i]);
    }
    SECTION("l2 normalize at [3,4] matches finite differences") {
        auto fn = [](Tape& t, Var v) { return t.l2_normalize(v); };
        Tensor x = Tensor::vector({3, 4});
        Tensor jac = jacobian(fn, x);
        Tensor fd = finite_diff_jacobian(as_tensor_fn(fn), x, 1e-6);
        CHECK(jac.max_abs_diff(fd) < 1e-6);
    }
    SECTION("non-finite entries carry their location") {
        auto fn = [](Tape& t, Var v) { return t.l2_normalize(v); };
        CHECK_THROWS_AS(jacobian(fn, Tensor::vector({0, 0})), NonFiniteError);
    }
}

TEST_CASE("finite difference oracle", "[numerics]") {
    SECTION("identity") {
        auto id = [](const Tensor& x) { return x; };
        Tensor fd = finite_diff_jacobian(id, Tensor::vector({0.2, -1.5}), 1e-5);
        CHECK(fd.max_abs_diff(Tensor::identity(2)) < 1e-10);
    }
    SECTION("square") {
        auto sq = [](const Tensor& x) {
            Tensor y = x;
            y[0] = x[0] * x[0];
            return y;
        };
        Tensor fd = finite_diff_jacobian(sq, Tensor::vector({3.0}), 1e-5);
        CHECK(fd[0] == Catch::Approx(6.0).margin(1e-9));
    }
    SECTION("softmax at the uniform point") {
        auto fn = [](Tape& t, Var v) { return t.softmax_rows(v); };
        Tensor fd = finite_diff_jacobian(as_tensor_fn(fn),
                                         Tensor::vector({0, 0}), 1e-5);
        Tensor expected =
            Tensor::matrix(2, 2, {0.25, -0.25, -0.25, 0.25});
        CHECK(fd.max_abs_diff(expected) < 1e-8);
    }
    SECTION("eps must be positive") {
        auto id = [](const Tensor& x) { return x; };
        CHECK_THROWS_AS(finite_diff_jacobian(id, Tensor::vector({1.0}), 0.0),
                        Error);
    }
}

TEST_CASE("every primitive agrees with finite differences", "[numerics]") {
    Rng rng(41);
    struct Case {
        const char* name;
        UnaryGraphFn fn;
        std::vector<std::size_t> shape;
    };
    Tensor w = Tensor::matrix(3, 4, {0.5, -1, 2, 0.3, 1.2, 0.7, -0.2, 0.9,
                                     -0.4, 0.1, 1.5, -0.8});
    Tensor gain = Tensor::matrix(1, 4, {1.1, 0.9, 1.0, 1.3});
    Tensor bias = Tensor::matrix(1, 4, {0.1, -0.2, 0.0, 0.4});
    std::vector<Case> cases = {
        {"matmul", [&](Tape& t, Var v) { return t.matmul(v, t.constant(w)); },
         {2, 3}},
        {"transpose", [](Tape& t, Var v) { return t.transpose(v); }, {2, 3}},
        {"add", [](Tape& t, Var v) { return t.add(v, v); }, {2, 3}},
        {"add_rowvec",
         [&](Tape& t, Var v) { return t.add_rowvec(v, t.constant(gain)); },
         {3, 4}},
        {"sub",
         [](Tape& t, Var v) { return t.sub(t.mul(v, v), v); }, {2, 3}},
        {"mul", [](Tape& t, Var v) { return t.mul(v, t.tanh(v)); }, {2, 3}},
        {"scale", [](Tape& t, Var v) { return t.scale(v, -2.5); }, {2, 3}},
        {"tanh", [](Tape& t, Var v) { return t.tanh(v); }, {2, 3}},
        {"gelu", [](Tape& t, Var v) { return t.gelu(v); }, {2, 3}},
        {"softmax", [](Tape& t, Var v) { return t.softmax_rows(v); }, {2, 4}},
        {"layer_norm",
         [&](Tape& t, Var v) {
             return t.layer_norm_rows(v, t.constant(gain), t.constant(bias));
         },
         {3, 4}},
        {"mean_pool", [](Tape& t, Var v) { return t.mean_pool_rows(v); },
         {3, 4}},
        {"l2_normalize", [](Tape& t, Var v) { return t.l2_normalize(v); },
         {1, 4}},
        {"dot", [](Tape& t, Var v) { return t.dot(v, t.gelu(v)); }, {1, 4}},
        {"slice_cols", [](Tape& t, Var v) { return t.slice_cols(v, 1, 2); },
         {3, 4}},
        {"slice_rows", [](Tape& t, Var v) { return t.slice_rows(v, 1, 2); },
         {3, 4}},
        {"concat_cols",
         [](Tape& t, Var v) {
             std::vector<Var> parts{t.tanh(v), v};
             return t.concat_cols(parts);
         },
         {2, 3}},
        {"gather_rows",
         [](Tape& t, Var v) {
             const int ids[] = {2, 0, 1, 2};
             return t.gather_rows(v, ids);
         },
         {3, 4}},
    };
    for (const Case& c : cases) {
        INFO(c.name);
        double worst = 0.0;
        for (int rep = 0; rep < 100; ++rep) {
            Tensor x = random_tensor(rng, c.shape);
            Tensor jac = jacobian(c.fn, x);
            Tensor fd = finite_diff_jacobian(as_tensor_fn(c.fn), x, 1e-5);
            worst = std::max(worst, max_rel_err(jac, fd));
        }
        CHECK(worst <= 1e-4);
    }
}

TEST_CASE("linearity: jacobian of Ax + b equals A bitwise", "[numerics]") {
    Rng rng(42);
    Tensor a = random_tensor(rng, {4, 3});
    Tensor b = random_tensor(rng, {1, 4});
    auto fn = [&](Tape& t, Var v) {
        Var col = t.transpose(v);                 // 3x1
        Var prod = t.matmul(t.constant(a), col);  // 4x1
        return t.add(t.transpose(prod), t.constant(b));
    };
    Tensor x = random_tensor(rng, {1, 3});
    Tensor jac = jacobian(fn, x);
    REQUIRE(jac.shape() == std::vector<std::size_t>{4, 3});
    for (std::size_t i = 0; i < jac.numel(); ++i) CHECK(jac[i] == a[i]);
}

TEST_CASE("chain rule consistency on composed maps", "[numerics]") {
    Rng rng(43);
    for (int rep = 0; rep < 20; ++rep) {
        Tensor w1 = random_tensor(rng, {3, 3}, 0.7);
        Tensor w2 = random_tensor(rng, {2, 3}, 0.7);
        auto f = [&](Tape& t, Var v) {
            return t.tanh(t.transpose(t.matmul(t.constant(w1),
                                               t.transpose(v))));
        };
        auto g = [&](Tape& t, Var v) {
            return t.gelu(t.transpose(t.matmul(t.constant(w2),
                                               t.transpose(v))));
        };
        auto gf = [&](Tape& t, Var v) { return g(t, f(t, v)); };
        Tensor x = random_tensor(rng, {1, 3});
        Tensor jf = jacobian(f, x);

        Tape tape;
        Var fx = f(tape, tape.input(x));
        Tensor jg = jacobian(g, tape.value(fx));
        Tensor jgf = jacobian(gf, x);

        // multiply jg (2x3) * jf (3x3)
        Tensor expect({2, 3});
        for (std::size_t i = 0; i < 2; ++i) {
            for (std::size_t j = 0; j < 3; ++j) {
                double s = 0.0;
                for (std::size_t k = 0; k < 3; ++k) {
                    s += jg.at(i, k) * jf.at(k, j);
                }
                expect.at(i, j) = s;
            }
        }
        CHECK(jgf.max_abs_diff(expect) < 1e-10);
    }
}

TEST_CASE("tape replay reproduces cached values", "[numerics]") {
    Rng rng(44);
    Tape tape;
    Var x = tape.input(random_tensor(rng, {3, 4}));
    Var w = tape.constant(random_tensor(rng, {4, 4}));
    Var g = tape.constant(Tensor::matrix(1, 4, {1, 1, 1, 1}));
    Var b = tape.constant(Tensor::matrix(1, 4, {0, 0, 0, 0}));
    Var h = tape.layer_norm_rows(tape.matmul(x, w), g, b);
    Var out = tape.l2_normalize(tape.mean_pool_rows(tape.gelu(h)));
    tape.backward(out, 0);
    CHECK(tape.replay_max_dev() < 1e-12);
}

TEST_CASE("evaluate runs a composition of primitives", "[numerics]") {
    auto fn = [](Tape& t, std::span<const Var> in) {
        return t.mean_pool_rows(t.matmul(in[0], in[1]));
    };
    std::vector<Tensor> inputs = {Tensor::identity(2),
                                  Tensor::matrix(2, 2, {1, 2, 3, 4})};
    Tensor out = evaluate(fn, inputs);
    CHECK(out.values() == std::vector<double>{2, 3});

    std::vector<Tensor> bad = {Tensor::identity(2),
                               Tensor::matrix(3, 2, {1, 2, 3, 4, 5, 6})};
    CHECK_THROWS_AS(evaluate(fn, bad), ShapeError);
}
