#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ijat/tape.hpp"
#include "ijat/tensor.hpp"

namespace ijat {

// A differentiable program: records its computation onto the given tape.
using GraphFn = std::function<Var(Tape&, std::span<const Var>)>;
using UnaryGraphFn = std::function<Var(Tape&, Var)>;
// A plain tensor map, used by the finite-difference oracle.
using TensorFn = std::function<Tensor(const Tensor&)>;

// Runs a composition of primitives. With record_tape the caller receives the
// populated tape (for a later backward()); without, the tape is local.
inline Tensor evaluate(const GraphFn& fn, std::span<const Tensor> inputs,
                       Tape* record_tape = nullptr) {
    Tape local;
    Tape& tape = record_tape ? *record_tape : local;
    std::vector<Var> vars;
    vars.reserve(inputs.size());
    for (const Tensor& t : inputs) vars.push_back(tape.input(t));
    Var out = fn(tape, vars);
    Tensor result = tape.value(out);
    result.ensure_finite("evaluate");
    return result;
}

// Full Jacobian (out_dim x in_dim) of fn at input, one reverse pass per
// output component over a shared tape.
inline Tensor jacobian(const UnaryGraphFn& fn, const Tensor& input) {
    Tape tape;
    Var x = tape.input(input);
    Var out = fn(tape, x);
    auto out_span = tape.value_span(out);
    const std::size_t out_dim = out_span.size();
    const std::size_t in_dim = input.numel();
    Tensor jac({out_dim, in_dim});
    for (std::size_t k = 0; k < out_dim; ++k) {
        tape.backward(out, k);
        auto gs = tape.grad_span(x);
        for (std::size_t i = 0; i < in_dim; ++i) {
            double v = gs.empty() ? 0.0 : gs[i];
            if (!std::isfinite(v)) {
                throw NonFiniteError("jacobian: non-finite entry at (k=" +
                                         std::to_string(k) +
                                         ", i=" + std::to_string(i) + ")",
                                     k, i);
            }
            jac.at(k, i) = v;
        }
    }
    return jac;
}

// Central-difference Jacobian, the test oracle for the reverse-mode path.
// Column i is (fn(x + eps e_i) - fn(x - eps e_i)) / (2 eps).
inline Tensor finite_diff_jacobian(const TensorFn& fn, const Tensor& input,
                                   double eps) {
    if (!(eps > 0.0)) {
        throw Error("finite_diff_jacobian: eps must be positive");
    }
    const std::size_t in_dim = input.numel();
    Tensor x = input;
    Tensor out0 = fn(input);
    const std::size_t out_dim = out0.numel();
    Tensor jac({out_dim, in_dim});
    for (std::size_t i = 0; i < in_dim; ++i) {
        const double orig = x[i];
        x[i] = orig + eps;
        Tensor hi = fn(x);
        x[i] = orig - eps;
        Tensor lo = fn(x);
        x[i] = orig;
        if (hi.numel() != out_dim || lo.numel() != out_dim) {
            throw ShapeError("finite_diff_jacobian: fn output size changed");
        }
        for (std::size_t k = 0; k < out_dim; ++k) {
            jac.at(k, i) = (hi[k] - lo[k]) / (2.0 * eps);
        }
    }
    return jac;
}

// Convenience: lifts a tape program into a plain tensor map.
inline TensorFn as_tensor_fn(UnaryGraphFn fn) {
    return [fn = std::move(fn)](const Tensor& x) {
        Tape tape;
        Var v = tape.input(x);
        Var out = fn(tape, v);
        return tape.value(out);
    };
}

}  // namespace ijat
