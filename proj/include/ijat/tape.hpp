#pragma once

#include <cmath>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "ijat/error.hpp"
#include "ijat/tensor.hpp"

namespace ijat {

// Reverse-mode differentiation tape.
//
// Forward values are computed eagerly as ops are recorded and cached in one
// contiguous arena. A backward pass seeds a single output component and walks
// the node list in reverse; adjoints live in a second arena that is reset per
// pass, so a full Jacobian is out_dim passes over one shared tape. reset()
// keeps both arenas' capacity, which makes rebuilding a graph per
// interpolation step cheap.
//
// Tensors handed to a tape are copied in; a Tape must stay on one thread.

class Tape;

struct Var {
    Tape* tape = nullptr;
    int idx = -1;
    bool valid() const { return tape != nullptr && idx >= 0; }
};

class Tape {
    enum class Op : std::uint8_t {
        kInput,
        kMatMul,
        kTranspose,
        kAdd,
        kAddRowVec,
        kSub,
        kMul,
        kScale,
        kTanh,
        kGelu,
        kSoftmaxRows,
        kLayerNormRows,
        kMeanPoolRows,
        kL2Normalize,
        kDot,
        kSliceCols,
        kSliceRows,
        kConcatCols,
        kGatherRows,
    };

    struct Node {
        Op op;
        bool rg = false;  // participates in some gradient path
        int a = -1, b = -1, c = -1;
        int rows = 0, cols = 0;
        std::size_t val = 0;           // offset into val_
        std::size_t adj = 0;           // offset into adj_ (when rg)
        double scalar = 0.0;           // Scale factor / layer-norm eps
        int aux0 = 0, aux1 = 0;        // slice range or ints_ range
    };

  public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    void reset() {
        nodes_.clear();
        val_.clear();
        ints_.clear();
        adj_.clear();
        adj_laid_out_ = false;
        consumed_ = false;
    }

    void set_single_use(bool v) { single_use_ = v; }

    std::size_t size() const { return nodes_.size(); }

    // ---- leaves ------------------------------------------------------

    Var input(const Tensor& t) { return leaf(t, true); }

    Var constant(const Tensor& t) { return leaf(t, false); }

    // ---- inspection ---------------------------------------------------

    Tensor value(Var v) const {
        const Node& n = node(v);
        return make_tensor(n, &val_[n.val]);
    }

    std::span<const double> value_span(Var v) const {
        const Node& n = node(v);
        return {&val_[n.val], numel(n)};
    }

    std::pair<std::size_t, std::size_t> shape_of(Var v) const {
        const Node& n = node(v);
        return {static_cast<std::size_t>(n.rows),
                static_cast<std::size_t>(n.cols)};
    }

    // Gradient of the last backward() pass w.r.t. a leaf (or any rg node).
    Tensor grad(Var v) const {
        const Node& n = node(v);
        if (!n.rg || !adj_laid_out_) {
            Tensor t = make_tensor(n, nullptr);
            return t;  // zeros
        }
        return make_tensor(n, &adj_[n.adj]);
    }

    std::span<const double> grad_span(Var v) const {
        const Node& n = node(v);
        return {&adj_[n.adj], n.rg ? numel(n) : 0};
    }

    // ---- backward -----------------------------------------------------

    // Seeds d(output[component]) = 1 and accumulates adjoints down to the
    // leaves. May be called repeatedly (adjoints are reset per call) unless
    // single-use mode is on.
    void backward(Var out, std::size_t component) {
        if (single_use_ && consumed_) {
            throw Error("backward: tape already consumed (single-use mode)");
        }
        consumed_ = true;
        const Node& on = node(out);
        if (component >= numel(on)) {
            throw Error("backward: output component " +
                        std::to_string(component) + " out of range for " +
                        std::to_string(numel(on)) + " outputs");
        }
        if (!adj_laid_out_) layout_adjoints();
        std::memset(adj_.data(), 0, adj_.size() * sizeof(double));
        if (!on.rg) return;  // output does not depend on any input
        adj_[on.adj + component] = 1.0;
        for (int i = out.idx; i >= 0; --i) {
            if (nodes_[static_cast<std::size_t>(i)].rg) {
                backprop(nodes_[static_cast<std::size_t>(i)]);
            }
        }
    }

    // Recomputes every node from its parents and returns the maximum
    // absolute deviation from the cached values. Used by tests to check the
    // tape's topological-replay invariant.
    double replay_max_dev() {
        double dev = 0.0;
        std::vector<double> scratch;
        for (const Node& n : nodes_) {
            if (n.op == Op::kInput) continue;
            scratch.assign(numel(n), 0.0);
            compute_forward(n, scratch.data());
            const double* stored = &val_[n.val];
            for (std::size_t i = 0; i < scratch.size(); ++i) {
                dev = std::max(dev, std::abs(scratch[i] - stored[i]));
            }
        }
        return dev;
    }

    // ---- primitives -----------------------------------------------------

    Var matmul(Var a, Var b) {
        const Node& na = node(a);
        const Node& nb = node(b);
        if (na.cols != nb.rows) {
            throw ShapeError("matmul: " + dims(na) + " x " + dims(nb));
        }
        return emit(Op::kMatMul, a, b, na.rows, nb.cols);
    }

    Var transpose(Var a) {
        const Node& na = node(a);
        return emit(Op::kTranspose, a, Var{}, na.cols, na.rows);
    }

    Var add(Var a, Var b) {
        require_same("add", a, b);
        const Node& na = node(a);
        return emit(Op::kAdd, a, b, na.rows, na.cols);
    }

    Var add_rowvec(Var m, Var v) {
        const Node& nm = node(m);
        const Node& nv = node(v);
        if (nv.rows != 1 || nv.cols != nm.cols) {
            throw ShapeError("add_rowvec: " + dims(nm) + " + " + dims(nv));
        }
        return emit(Op::kAddRowVec, m, v, nm.rows, nm.cols);
    }

    Var sub(Var a, Var b) {
        require_same("sub", a, b);
        const Node& na = node(a);
        return emit(Op::kSub, a, b, na.rows, na.cols);
    }

    Var mul(Var a, Var b) {
        require_same("mul", a, b);
        const Node& na = node(a);
        return emit(Op::kMul, a, b, na.rows, na.cols);
    }

    Var scale(Var a, double c) {
        const Node& na = node(a);
        Var out = emit(Op::kScale, a, Var{}, na.rows, na.cols, c);
        return out;
    }

    Var tanh(Var a) {
        const Node& na = node(a);
        return emit(Op::kTanh, a, Var{}, na.rows, na.cols);
    }

    Var gelu(Var a) {
        const Node& na = node(a);
        return emit(Op::kGelu, a, Var{}, na.rows, na.cols);
    }

    Var softmax_rows(Var a) {
        const Node& na = node(a);
        return emit(Op::kSoftmaxRows, a, Var{}, na.rows, na.cols);
    }

    Var layer_norm_rows(Var x, Var gain, Var bias, double eps = 1e-5) {
        const Node& nx = node(x);
        const Node& ng = node(gain);
        const Node& nb = node(bias);
        if (ng.rows != 1 || ng.cols != nx.cols || nb.rows != 1 ||
            nb.cols != nx.cols) {
            throw ShapeError("layer_norm: " + dims(nx) + " with gain " +
                             dims(ng) + ", bias " + dims(nb));
        }
        Node n = prep(Op::kLayerNormRows, x, gain, bias, nx.rows, nx.cols);
        n.scalar = eps;
        return push(n);
    }

    Var mean_pool_rows(Var a) {
        const Node& na = node(a);
        if (na.rows < 1) throw ShapeError("mean_pool: empty input");
        return emit(Op::kMeanPoolRows, a, Var{}, 1, na.cols);
    }

    Var l2_normalize(Var a) {
        const Node& na = node(a);
        return emit(Op::kL2Normalize, a, Var{}, na.rows, na.cols);
    }

    Var dot(Var a, Var b) {
        const Node& na = node(a);
        const Node& nb = node(b);
        if (numel(na) != numel(nb)) {
            throw ShapeError("dot: " + dims(na) + " . " + dims(nb));
        }
        return emit(Op::kDot, a, b, 1, 1);
    }

    Var slice_cols(Var a, int start, int len) {
        const Node& na = node(a);
        if (start < 0 || len <= 0 || start + len > na.cols) {
            throw ShapeError("slice_cols: [" + std::to_string(start) + ", " +
                             std::to_string(start + len) + ") of " + dims(na));
        }
        Node n = prep(Op::kSliceCols, a, Var{}, Var{}, na.rows, len);
        n.aux0 = start;
        n.aux1 = len;
        return push(n);
    }

    Var slice_rows(Var a, int start, int len) {
        const Node& na = node(a);
        if (start < 0 || len <= 0 || start + len > na.rows) {
            throw ShapeError("slice_rows: [" + std::to_string(start) + ", " +
                             std::to_string(start + len) + ") of " + dims(na));
        }
        Node n = prep(Op::kSliceRows, a, Var{}, Var{}, len, na.cols);
        n.aux0 = start;
        n.aux1 = len;
        return push(n);
    }

    Var concat_cols(std::span<const Var> parts) {
        if (parts.empty()) throw ShapeError("concat_cols: no operands");
        int rows = node(parts[0]).rows;
        int cols = 0;
        for (Var p : parts) {
            const Node& np = node(p);
            if (np.rows != rows) {
                throw ShapeError("concat_cols: row mismatch " + dims(np));
            }
            cols += np.cols;
        }
        Node n;
        n.op = Op::kConcatCols;
        n.rows = rows;
        n.cols = cols;
        n.aux0 = static_cast<int>(ints_.size());
        n.aux1 = static_cast<int>(parts.size());
        for (Var p : parts) {
            check_tape(p);
            ints_.push_back(p.idx);
            n.rg = n.rg || node(p).rg;
        }
        return push(n);
    }

    Var gather_rows(Var table, std::span<const int> ids) {
        const Node& nt = node(table);
        for (int id : ids) {
            if (id < 0 || id >= nt.rows) {
                throw ShapeError("gather_rows: id " + std::to_string(id) +
                                 " outside table " + dims(nt));
            }
        }
        Node n = prep(Op::kGatherRows, table, Var{}, Var{},
                      static_cast<int>(ids.size()), nt.cols);
        n.aux0 = static_cast<int>(ints_.size());
        n.aux1 = static_cast<int>(ids.size());
        ints_.insert(ints_.end(), ids.begin(), ids.end());
        return push(n);
    }

  private:
    // ---- bookkeeping ----------------------------------------------------

    Var leaf(const Tensor& t, bool rg) {
        Node n;
        n.op = Op::kInput;
        n.rg = rg;
        if (t.rank() > 2) {
            throw ShapeError("tape input: rank-" + std::to_string(t.rank()) +
                             " tensor not supported");
        }
        n.rows = static_cast<int>(t.rows());
        n.cols = static_cast<int>(t.cols());
        n.val = alloc_val(t.numel());
        std::memcpy(&val_[n.val], t.data(), t.numel() * sizeof(double));
        nodes_.push_back(n);
        adj_laid_out_ = false;
        return Var{this, static_cast<int>(nodes_.size() - 1)};
    }

    Node prep(Op op, Var a, Var b, Var c, int rows, int cols) {
        Node n;
        n.op = op;
        n.rows = rows;
        n.cols = cols;
        if (a.valid()) {
            check_tape(a);
            n.a = a.idx;
            n.rg = n.rg || node(a).rg;
        }
        if (b.valid()) {
            check_tape(b);
            n.b = b.idx;
            n.rg = n.rg || node(b).rg;
        }
        if (c.valid()) {
            check_tape(c);
            n.c = c.idx;
            n.rg = n.rg || node(c).rg;
        }
        return n;
    }

    Var emit(Op op, Var a, Var b, int rows, int cols, double scalar = 0.0) {
        Node n = prep(op, a, b, Var{}, rows, cols);
        n.scalar = scalar;
        return push(n);
    }

    Var push(Node n) {
        n.val = alloc_val(numel(n));
        compute_forward(n, &val_[n.val]);
        nodes_.push_back(n);
        adj_laid_out_ = false;
        return Var{this, static_cast<int>(nodes_.size() - 1)};
    }

    std::size_t alloc_val(std::size_t n) {
        std::size_t off = val_.size();
        val_.resize(off + n, 0.0);
        return off;
    }

    void layout_adjoints() {
        std::size_t total = 0;
        for (Node& n : nodes_) {
            if (n.rg) {
                n.adj = total;
                total += numel(n);
            }
        }
        adj_.assign(total, 0.0);
        adj_laid_out_ = true;
    }

    const Node& node(Var v) const {
        check_tape(v);
        return nodes_[static_cast<std::size_t>(v.idx)];
    }

    void check_tape(Var v) const {
        if (v.tape != this || v.idx < 0 ||
            v.idx >= static_cast<int>(nodes_.size())) {
            throw Error("tape: variable does not belong to this tape");
        }
    }

    static std::size_t numel(const Node& n) {
        return static_cast<std::size_t>(n.rows) *
               static_cast<std::size_t>(n.cols);
    }

    static std::string dims(const Node& n) {
        return "[" + std::to_string(n.rows) + "x" + std::to_string(n.cols) +
               "]";
    }

    void require_same(const char* prim, Var a, Var b) const {
        const Node& na = node(a);
        const Node& nb = node(b);
        if (na.rows != nb.rows || na.cols != nb.cols) {
            throw ShapeError(std::string(prim) + ": " + dims(na) + " vs " +
                             dims(nb));
        }
    }

    Tensor make_tensor(const Node& n, const double* src) const {
        std::vector<std::size_t> shape;
        if (n.rows > 1) {
            shape = {static_cast<std::size_t>(n.rows),
                     static_cast<std::size_t>(n.cols)};
        } else {
            shape = {static_cast<std::size_t>(n.cols)};
        }
        Tensor t(std::move(shape));
        if (src) std::memcpy(t.data(), src, numel(n) * sizeof(double));
        return t;
    }

    // ---- forward kernels --------------------------------------------------

    static double gelu_val(double x) {
        return 0.5 * x * (1.0 + std::erf(x * 0.7071067811865475244));
    }

    static double gelu_deriv(double x) {
        constexpr double inv_sqrt_2pi = 0.3989422804014326779;
        return 0.5 * (1.0 + std::erf(x * 0.7071067811865475244)) +
               x * inv_sqrt_2pi * std::exp(-0.5 * x * x);
    }

    void compute_forward(const Node& n, double* o) const {
        const std::size_t rows = static_cast<std::size_t>(n.rows);
        const std::size_t cols = static_cast<std::size_t>(n.cols);
        const double* pa = n.a >= 0 ? &val_[nodes_[n.a].val] : nullptr;
        const double* pb = n.b >= 0 ? &val_[nodes_[n.b].val] : nullptr;
        const double* pc = n.c >= 0 ? &val_[nodes_[n.c].val] : nullptr;
        switch (n.op) {
            case Op::kInput:
                break;
            case Op::kMatMul: {
                const std::size_t k =
                    static_cast<std::size_t>(nodes_[n.a].cols);
                std::memset(o, 0, rows * cols * sizeof(double));
                for (std::size_t i = 0; i < rows; ++i) {
                    for (std::size_t kk = 0; kk < k; ++kk) {
                        const double av = pa[i * k + kk];
                        const double* brow = pb + kk * cols;
                        double* orow = o + i * cols;
                        for (std::size_t j = 0; j < cols; ++j) {
                            orow[j] += av * brow[j];
                        }
                    }
                }
                break;
            }
            case Op::kTranspose: {
                const std::size_t arows = cols, acols = rows;
                for (std::size_t i = 0; i < arows; ++i)
                    for (std::size_t j = 0; j < acols; ++j)
                        o[j * cols + i] = pa[i * acols + j];
                break;
            }
            case Op::kAdd:
                for (std::size_t i = 0; i < rows * cols; ++i)
                    o[i] = pa[i] + pb[i];
                break;
            case Op::kAddRowVec:
                for (std::size_t i = 0; i < rows; ++i)
                    for (std::size_t j = 0; j < cols; ++j)
                        o[i * cols + j] = pa[i * cols + j] + pb[j];
                break;
            case Op::kSub:
                for (std::size_t i = 0; i < rows * cols; ++i)
                    o[i] = pa[i] - pb[i];
                break;
            case Op::kMul:
                for (std::size_t i = 0; i < rows * cols; ++i)
                    o[i] = pa[i] * pb[i];
                break;
            case Op::kScale:
                for (std::size_t i = 0; i < rows * cols; ++i)
                    o[i] = pa[i] * n.scalar;
                break;
            case Op::kTanh:
                for (std::size_t i = 0; i < rows * cols; ++i)
                    o[i] = std::tanh(pa[i]);
                break;
            case Op::kGelu:
                for (std::size_t i = 0; i < rows * cols; ++i)
                    o[i] = gelu_val(pa[i]);
                break;
            case Op::kSoftmaxRows:
                for (std::size_t i = 0; i < rows; ++i) {
                    const double* x = pa + i * cols;
                    double* y = o + i * cols;
                    double mx = x[0];
                    for (std::size_t j = 1; j < cols; ++j)
                        mx = std::max(mx, x[j]);
                    double z = 0.0;
                    for (std::size_t j = 0; j < cols; ++j) {
                        y[j] = std::exp(x[j] - mx);
                        z += y[j];
                    }
                    for (std::size_t j = 0; j < cols; ++j) y[j] /= z;
                }
                break;
            case Op::kLayerNormRows:
                for (std::size_t i = 0; i < rows; ++i) {
                    const double* x = pa + i * cols;
                    double* y = o + i * cols;
                    double mu = 0.0;
                    for (std::size_t j = 0; j < cols; ++j) mu += x[j];
                    mu /= static_cast<double>(cols);
                    double var = 0.0;
                    for (std::size_t j = 0; j < cols; ++j) {
                        double d = x[j] - mu;
                        var += d * d;
                    }
                    var /= static_cast<double>(cols);
                    double inv = 1.0 / std::sqrt(var + n.scalar);
                    for (std::size_t j = 0; j < cols; ++j)
                        y[j] = (x[j] - mu) * inv * pb[j] + pc[j];
                }
                break;
            case Op::kMeanPoolRows: {
                const std::size_t arows =
                    static_cast<std::size_t>(nodes_[n.a].rows);
                for (std::size_t j = 0; j < cols; ++j) o[j] = 0.0;
                for (std::size_t i = 0; i < arows; ++i)
                    for (std::size_t j = 0; j < cols; ++j)
                        o[j] += pa[i * cols + j];
                for (std::size_t j = 0; j < cols; ++j)
                    o[j] /= static_cast<double>(arows);
                break;
            }
            case Op::kL2Normalize: {
                double s = 0.0;
                for (std::size_t i = 0; i < rows * cols; ++i)
                    s += pa[i] * pa[i];
                double inv = 1.0 / std::sqrt(s);
                for (std::size_t i = 0; i < rows * cols; ++i)
                    o[i] = pa[i] * inv;
                break;
            }
            case Op::kDot: {
                const std::size_t len = numel(nodes_[n.a]);
                double s = 0.0;
                for (std::size_t i = 0; i < len; ++i) s += pa[i] * pb[i];
                o[0] = s;
                break;
            }
            case Op::kSliceCols: {
                const std::size_t acols =
                    static_cast<std::size_t>(nodes_[n.a].cols);
                for (std::size_t i = 0; i < rows; ++i)
                    std::memcpy(o + i * cols, pa + i * acols + n.aux0,
                                cols * sizeof(double));
                break;
            }
            case Op::kSliceRows:
                std::memcpy(o, pa + static_cast<std::size_t>(n.aux0) * cols,
                            rows * cols * sizeof(double));
                break;
            case Op::kConcatCols: {
                std::size_t off = 0;
                for (int p = 0; p < n.aux1; ++p) {
                    const Node& np = nodes_[ints_[n.aux0 + p]];
                    const double* src = &val_[np.val];
                    const std::size_t pc2 =
                        static_cast<std::size_t>(np.cols);
                    for (std::size_t i = 0; i < rows; ++i)
                        std::memcpy(o + i * cols + off, src + i * pc2,
                                    pc2 * sizeof(double));
                    off += pc2;
                }
                break;
            }
            case Op::kGatherRows:
                for (std::size_t t = 0; t < rows; ++t) {
                    int id = ints_[n.aux0 + static_cast<int>(t)];
                    std::memcpy(o + t * cols,
                                pa + static_cast<std::size_t>(id) * cols,
                                cols * sizeof(double));
                }
                break;
        }
    }

    // ---- backward kernels ---------------------------------------------

    double* adj_of(int idx) {
        Node& n = nodes_[static_cast<std::size_t>(idx)];
        return n.rg ? &adj_[n.adj] : nullptr;
    }

    void backprop(const Node& n) {
        const std::size_t rows = static_cast<std::size_t>(n.rows);
        const std::size_t cols = static_cast<std::size_t>(n.cols);
        const double* g = &adj_[n.adj];
        const double* y = &val_[n.val];
        const double* pa = n.a >= 0 ? &val_[nodes_[n.a].val] : nullptr;
        const double* pb = n.b >= 0 ? &val_[nodes_[n.b].val] : nullptr;
        double* da = n.a >= 0 ? adj_of(n.a) : nullptr;
        double* db = n.b >= 0 ? adj_of(n.b) : nullptr;
        double* dc = n.c >= 0 ? adj_of(n.c) : nullptr;
        switch (n.op) {
            case Op::kInput:
                break;
            case Op::kMatMul: {
                const std::size_t k =
                    static_cast<std::size_t>(nodes_[n.a].cols);
                if (da) {
                    for (std::size_t i = 0; i < rows; ++i) {
                        const double* grow = g + i * cols;
                        double* darow = da + i * k;
                        for (std::size_t kk = 0; kk < k; ++kk) {
                            const double* brow = pb + kk * cols;
                            double s = 0.0;
                            for (std::size_t j = 0; j < cols; ++j)
                                s += grow[j] * brow[j];
                            darow[kk] += s;
                        }
                    }
                }
                if (db) {
                    for (std::size_t i = 0; i < rows; ++i) {
                        const double* grow = g + i * cols;
                        const double* arow = pa + i * k;
                        for (std::size_t kk = 0; kk < k; ++kk) {
                            const double av = arow[kk];
                            double* dbrow = db + kk * cols;
                            for (std::size_t j = 0; j < cols; ++j)
                                dbrow[j] += av * grow[j];
                        }
                    }
                }
                break;
            }
            case Op::kTranspose:
                if (da) {
                    const std::size_t acols = rows;
                    for (std::size_t i = 0; i < rows; ++i)
                        for (std::size_t j = 0; j < cols; ++j)
                            da[j * acols + i] += g[i * cols + j];
                }
                break;
            case Op::kAdd:
                if (da)
                    for (std::size_t i = 0; i < rows * cols; ++i)
                        da[i] += g[i];
                if (db)
                    for (std::size_t i = 0; i < rows * cols; ++i)
                        db[i] += g[i];
                break;
            case Op::kAddRowVec:
                if (da)
                    for (std::size_t i = 0; i < rows * cols; ++i)
                        da[i] += g[i];
                if (db)
                    for (std::size_t i = 0; i < rows; ++i)
                        for (std::size_t j = 0; j < cols; ++j)
                            db[j] += g[i * cols + j];
                break;
            case Op::kSub:
                if (da)
                    for (std::size_t i = 0; i < rows * cols; ++i)
                        da[i] += g[i];
                if (db)
                    for (std::size_t i = 0; i < rows * cols; ++i)
                        db[i] -= g[i];
                break;
            case Op::kMul:
                if (da)
                    for (std::size_t i = 0; i < rows * cols; ++i)
                        da[i] += g[i] * pb[i];
                if (db)
                    for (std::size_t i = 0; i < rows * cols; ++i)
                        db[i] += g[i] * pa[i];
                break;
            case Op::kScale:
                if (da)
                    for (std::size_t i = 0; i < rows * cols; ++i)
                        da[i] += g[i] * n.scalar;
                break;
            case Op::kTanh:
                if (da)
                    for (std::size_t i = 0; i < rows * cols; ++i)
                        da[i] += g[i] * (1.0 - y[i] * y[i]);
                break;
            case Op::kGelu:
                if (da)
                    for (std::size_t i = 0; i < rows * cols; ++i)
                        da[i] += g[i] * gelu_deriv(pa[i]);
                break;
            case Op::kSoftmaxRows:
                // closed form: dx = y * (g - <g, y>) per row
                if (da) {
                    for (std::size_t i = 0; i < rows; ++i) {
                        const double* yr = y + i * cols;
                        const double* gr = g + i * cols;
                        double inner = 0.0;
                        for (std::size_t j = 0; j < cols; ++j)
                            inner += gr[j] * yr[j];
                        double* dar = da + i * cols;
                        for (std::size_t j = 0; j < cols; ++j)
                            dar[j] += yr[j] * (gr[j] - inner);
                    }
                }
                break;
            case Op::kLayerNormRows: {
                const double* gain = pb;
                for (std::size_t i = 0; i < rows; ++i) {
                    const double* x = pa + i * cols;
                    const double* gr = g + i * cols;
                    double mu = 0.0;
                    for (std::size_t j = 0; j < cols; ++j) mu += x[j];
                    mu /= static_cast<double>(cols);
                    double var = 0.0;
                    for (std::size_t j = 0; j < cols; ++j) {
                        double d = x[j] - mu;
                        var += d * d;
                    }
                    var /= static_cast<double>(cols);
                    double inv = 1.0 / std::sqrt(var + n.scalar);
                    if (db || dc) {
                        for (std::size_t j = 0; j < cols; ++j) {
                            double xhat = (x[j] - mu) * inv;
                            if (db) db[j] += gr[j] * xhat;
                            if (dc) dc[j] += gr[j];
                        }
                    }
                    if (da) {
                        double m1 = 0.0, m2 = 0.0;
                        for (std::size_t j = 0; j < cols; ++j) {
                            double gy = gr[j] * gain[j];
                            double xhat = (x[j] - mu) * inv;
                            m1 += gy;
                            m2 += gy * xhat;
                        }
                        m1 /= static_cast<double>(cols);
                        m2 /= static_cast<double>(cols);
                        double* dar = da + i * cols;
                        for (std::size_t j = 0; j < cols; ++j) {
                            double gy = gr[j] * gain[j];
                            double xhat = (x[j] - mu) * inv;
                            dar[j] += inv * (gy - m1 - xhat * m2);
                        }
                    }
                }
                break;
            }
            case Op::kMeanPoolRows:
                if (da) {
                    const std::size_t arows =
                        static_cast<std::size_t>(nodes_[n.a].rows);
                    const double s = 1.0 / static_cast<double>(arows);
                    for (std::size_t i = 0; i < arows; ++i)
                        for (std::size_t j = 0; j < cols; ++j)
                            da[i * cols + j] += g[j] * s;
                }
                break;
            case Op::kL2Normalize:
                if (da) {
                    const std::size_t len = rows * cols;
                    double nrm2 = 0.0;
                    for (std::size_t i = 0; i < len; ++i)
                        nrm2 += pa[i] * pa[i];
                    double inv = 1.0 / std::sqrt(nrm2);
                    double inner = 0.0;
                    for (std::size_t i = 0; i < len; ++i)
                        inner += g[i] * y[i];
                    for (std::size_t i = 0; i < len; ++i)
                        da[i] += (g[i] - y[i] * inner) * inv;
                }
                break;
            case Op::kDot: {
                const std::size_t len = numel(nodes_[n.a]);
                if (da)
                    for (std::size_t i = 0; i < len; ++i)
                        da[i] += g[0] * pb[i];
                if (db)
                    for (std::size_t i = 0; i < len; ++i)
                        db[i] += g[0] * pa[i];
                break;
            }
            case Op::kSliceCols:
                if (da) {
                    const std::size_t acols =
                        static_cast<std::size_t>(nodes_[n.a].cols);
                    for (std::size_t i = 0; i < rows; ++i)
                        for (std::size_t j = 0; j < cols; ++j)
                            da[i * acols + n.aux0 + j] += g[i * cols + j];
                }
                break;
            case Op::kSliceRows:
                if (da) {
                    double* dst = da + static_cast<std::size_t>(n.aux0) * cols;
                    for (std::size_t i = 0; i < rows * cols; ++i)
                        dst[i] += g[i];
                }
                break;
            case Op::kConcatCols: {
                std::size_t off = 0;
                for (int p = 0; p < n.aux1; ++p) {
                    int pidx = ints_[n.aux0 + p];
                    const Node& np = nodes_[pidx];
                    const std::size_t pc2 =
                        static_cast<std::size_t>(np.cols);
                    if (double* dp = adj_of(pidx)) {
                        for (std::size_t i = 0; i < rows; ++i)
                            for (std::size_t j = 0; j < pc2; ++j)
                                dp[i * pc2 + j] += g[i * cols + off + j];
                    }
                    off += pc2;
                }
                break;
            }
            case Op::kGatherRows:
                if (da) {
                    for (std::size_t t = 0; t < rows; ++t) {
                        int id = ints_[n.aux0 + static_cast<int>(t)];
                        double* drow =
                            da + static_cast<std::size_t>(id) * cols;
                        const double* grow = g + t * cols;
                        for (std::size_t j = 0; j < cols; ++j)
                            drow[j] += grow[j];
                    }
                }
                break;
        }
    }

    std::vector<Node> nodes_;
    std::vector<double> val_;
    std::vector<double> adj_;
    std::vector<int> ints_;
    bool adj_laid_out_ = false;
    bool single_use_ = false;
    bool consumed_ = false;
};

}  // namespace ijat
