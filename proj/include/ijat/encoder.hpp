#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ijat/rng.hpp"
#include "ijat/tape.hpp"
#include "ijat/tensor.hpp"
#include "ijat/vocab.hpp"

namespace ijat {

enum class SimilarityHead : std::uint8_t { kDot = 0, kCosine = 1 };
enum class ShiftMode : std::uint8_t { kNone = 0, kReferenceShift = 1 };
enum class Pooling : std::uint8_t { kMean = 0 };

inline const char* to_string(SimilarityHead h) {
    return h == SimilarityHead::kDot ? "dot" : "cosine";
}
inline const char* to_string(ShiftMode m) {
    return m == ShiftMode::kNone ? "none" : "reference_shift";
}

struct EncoderConfig {
    int num_layers = 4;
    int model_dim = 32;
    int num_heads = 4;
    int ffn_dim = 64;
    int max_seq_len = 64;
    Pooling pooling = Pooling::kMean;
    SimilarityHead head = SimilarityHead::kCosine;
    ShiftMode shift_mode = ShiftMode::kNone;
    std::uint64_t seed = 0;

    // num_layers == 0 is the pooling-only configuration: embeddings are mean
    // pooled and projected with no blocks and no layer norm, which makes the
    // whole encoder affine in the token representations.
    void validate() const {
        if (num_layers < 0) throw ConfigError("config: num_layers < 0");
        if (model_dim <= 0) throw ConfigError("config: model_dim <= 0");
        if (num_heads <= 0 || model_dim % num_heads != 0) {
            throw ConfigError("config: model_dim " +
                              std::to_string(model_dim) +
                              " not divisible by num_heads " +
                              std::to_string(num_heads));
        }
        if (ffn_dim <= 0) throw ConfigError("config: ffn_dim <= 0");
        if (max_seq_len < 2) throw ConfigError("config: max_seq_len < 2");
    }

    bool operator==(const EncoderConfig&) const = default;
};

// One intermediate layer's token representations. Index 0 is the embedding
// output, index L the last block's output.
struct LayerActivation {
    int layer_index = 0;
    Tensor reps;  // T x model_dim
};

struct EncodeResult {
    Tensor embedding;                       // model_dim vector
    std::vector<LayerActivation> activations;  // L + 1 entries
};

namespace detail {

struct BlockWeights {
    Tensor ln1_g, ln1_b;
    Tensor wq, bq, wk, bk, wv, bv, wo, bo;
    Tensor ln2_g, ln2_b;
    Tensor w1, b1, w2, b2;
};

struct BlockVars {
    Var ln1_g, ln1_b;
    Var wq, bq, wk, bk, wv, bv, wo, bo;
    Var ln2_g, ln2_b;
    Var w1, b1, w2, b2;
};

}  // namespace detail

// The toy Siamese sentence encoder: embeddings + pre-norm transformer blocks
// + mean pooling + linear projection, with a dot or cosine similarity head.
// With shift_mode = reference_shift the encoder output is
// e(x) = e'(x) - e'(reference(x)), so every reference maps to the zero
// vector. Instances are immutable after construction / loading and safe to
// share across threads.
class SiameseEncoder {
  public:
    SiameseEncoder() = default;

    SiameseEncoder(EncoderConfig config, Vocab vocab)
        : config_(config), vocab_(std::move(vocab)) {
        config_.validate();
        init_weights();
    }

    const EncoderConfig& config() const { return config_; }
    const Vocab& vocab() const { return vocab_; }

    // ---- weight table (serialization + optimizer order) -----------------

    std::vector<std::pair<std::string, const Tensor*>> weights() const {
        auto named = const_cast<SiameseEncoder*>(this)->named_weights();
        std::vector<std::pair<std::string, const Tensor*>> out;
        out.reserve(named.size());
        for (auto& [name, t] : named) out.emplace_back(name, t);
        return out;
    }

    std::vector<std::pair<std::string, Tensor*>> named_weights() {
        std::vector<std::pair<std::string, Tensor*>> out;
        out.emplace_back("tok_emb", &tok_emb_);
        out.emplace_back("pos_emb", &pos_emb_);
        for (std::size_t l = 0; l < blocks_.size(); ++l) {
            auto& b = blocks_[l];
            std::string p = "block" + std::to_string(l) + ".";
            out.emplace_back(p + "ln1_g", &b.ln1_g);
            out.emplace_back(p + "ln1_b", &b.ln1_b);
            out.emplace_back(p + "wq", &b.wq);
            out.emplace_back(p + "bq", &b.bq);
            out.emplace_back(p + "wk", &b.wk);
            out.emplace_back(p + "bk", &b.bk);
            out.emplace_back(p + "wv", &b.wv);
            out.emplace_back(p + "bv", &b.bv);
            out.emplace_back(p + "wo", &b.wo);
            out.emplace_back(p + "bo", &b.bo);
            out.emplace_back(p + "ln2_g", &b.ln2_g);
            out.emplace_back(p + "ln2_b", &b.ln2_b);
            out.emplace_back(p + "w1", &b.w1);
            out.emplace_back(p + "b1", &b.b1);
            out.emplace_back(p + "w2", &b.w2);
            out.emplace_back(p + "b2", &b.b2);
        }
        if (config_.num_layers > 0) {
            out.emplace_back("lnf_g", &lnf_g_);
            out.emplace_back("lnf_b", &lnf_b_);
        }
        out.emplace_back("proj_w", &proj_w_);
        out.emplace_back("proj_b", &proj_b_);
        return out;
    }

    // ---- graph building --------------------------------------------------

    struct GraphWeights {
        Var tok_emb, pos_emb;
        std::vector<detail::BlockVars> blocks;
        Var lnf_g, lnf_b, proj_w, proj_b;
        bool has_embeddings = false;
    };

    // Registers weights on a tape. from_layer skips blocks that a tail map
    // never touches; trainable leaves get gradient slots.
    GraphWeights register_weights(Tape& tape, bool trainable,
                                  int from_layer = 0,
                                  bool with_embeddings = true) const {
        auto put = [&](const Tensor& t) {
            return trainable ? tape.input(t) : tape.constant(t);
        };
        GraphWeights w;
        if (with_embeddings) {
            w.tok_emb = put(tok_emb_);
            w.pos_emb = put(pos_emb_);
            w.has_embeddings = true;
        }
        w.blocks.resize(blocks_.size());
        for (std::size_t l = 0; l < blocks_.size(); ++l) {
            if (static_cast<int>(l) < from_layer) continue;
            const auto& b = blocks_[l];
            auto& v = w.blocks[l];
            v.ln1_g = put(b.ln1_g);
            v.ln1_b = put(b.ln1_b);
            v.wq = put(b.wq);
            v.bq = put(b.bq);
            v.wk = put(b.wk);
            v.bk = put(b.bk);
            v.wv = put(b.wv);
            v.bv = put(b.bv);
            v.wo = put(b.wo);
            v.bo = put(b.bo);
            v.ln2_g = put(b.ln2_g);
            v.ln2_b = put(b.ln2_b);
            v.w1 = put(b.w1);
            v.b1 = put(b.b1);
            v.w2 = put(b.w2);
            v.b2 = put(b.b2);
        }
        if (config_.num_layers > 0) {
            w.lnf_g = put(lnf_g_);
            w.lnf_b = put(lnf_b_);
        }
        w.proj_w = put(proj_w_);
        w.proj_b = put(proj_b_);
        return w;
    }

    // Embedding lookup + positions: the layer-0 activation.
    Var embed_graph(Tape& tape, const GraphWeights& w,
                    std::span<const int> ids) const {
        check_len(ids.size());
        Var tok = tape.gather_rows(w.tok_emb, ids);
        Var pos = tape.slice_rows(w.pos_emb, 0, static_cast<int>(ids.size()));
        return tape.add(tok, pos);
    }

    Var block_graph(Tape& tape, const GraphWeights& w, Var x, int layer) const {
        const auto& b = w.blocks[static_cast<std::size_t>(layer)];
        const int dk = config_.model_dim / config_.num_heads;
        const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));

        Var a = tape.layer_norm_rows(x, b.ln1_g, b.ln1_b);
        Var q = tape.add_rowvec(tape.matmul(a, b.wq), b.bq);
        Var k = tape.add_rowvec(tape.matmul(a, b.wk), b.bk);
        Var v = tape.add_rowvec(tape.matmul(a, b.wv), b.bv);
        std::vector<Var> heads;
        heads.reserve(static_cast<std::size_t>(config_.num_heads));
        for (int h = 0; h < config_.num_heads; ++h) {
            Var qh = tape.slice_cols(q, h * dk, dk);
            Var kh = tape.slice_cols(k, h * dk, dk);
            Var vh = tape.slice_cols(v, h * dk, dk);
            Var scores =
                tape.scale(tape.matmul(qh, tape.transpose(kh)), inv_sqrt_dk);
            Var probs = tape.softmax_rows(scores);
            heads.push_back(tape.matmul(probs, vh));
        }
        Var attn = tape.concat_cols(heads);
        x = tape.add(x, tape.add_rowvec(tape.matmul(attn, b.wo), b.bo));

        Var n2 = tape.layer_norm_rows(x, b.ln2_g, b.ln2_b);
        Var f = tape.gelu(tape.add_rowvec(tape.matmul(n2, b.w1), b.b1));
        Var ff = tape.add_rowvec(tape.matmul(f, b.w2), b.b2);
        return tape.add(x, ff);
    }

    // Blocks from_layer+1..L, final norm, pooling, projection. This is the
    // map whose Jacobian layer-tapped attribution integrates. For the
    // pooling-only configuration it is affine.
    Var tail_graph(Tape& tape, const GraphWeights& w, Var act,
                   int from_layer) const {
        if (from_layer < 0 || from_layer > config_.num_layers) {
            throw ConfigError("tail: layer index " +
                              std::to_string(from_layer) + " outside [0, " +
                              std::to_string(config_.num_layers) + "]");
        }
        Var x = act;
        for (int l = from_layer; l < config_.num_layers; ++l) {
            x = block_graph(tape, w, x, l);
        }
        if (config_.num_layers > 0) {
            x = tape.layer_norm_rows(x, w.lnf_g, w.lnf_b);
        }
        Var pooled = tape.mean_pool_rows(x);
        return tape.add_rowvec(tape.matmul(pooled, w.proj_w), w.proj_b);
    }

    Var encode_graph(Tape& tape, const GraphWeights& w,
                     std::span<const int> ids) const {
        return tail_graph(tape, w, embed_graph(tape, w, ids), 0);
    }

    // Raw (unshifted) encoder output e'(x) together with all layer
    // activations of x.
    EncodeResult encode_raw(const TokenSeq& tokens) const {
        Tape tape;
        GraphWeights w = register_weights(tape, false);
        Var act = embed_graph(tape, w, tokens.ids);
        EncodeResult result;
        result.activations.push_back({0, tape.value(act)});
        Var x = act;
        for (int l = 0; l < config_.num_layers; ++l) {
            x = block_graph(tape, w, x, l);
            result.activations.push_back({l + 1, tape.value(x)});
        }
        if (config_.num_layers > 0) {
            x = tape.layer_norm_rows(x, w.lnf_g, w.lnf_b);
        }
        Var pooled = tape.mean_pool_rows(x);
        Var emb = tape.add_rowvec(tape.matmul(pooled, w.proj_w), w.proj_b);
        result.embedding = tape.value(emb);
        result.embedding.ensure_finite("encode");
        return result;
    }

    // Shift vector e'(reference of length T); zero when shifting is off.
    Tensor shift_vector(std::size_t seq_len) const {
        if (config_.shift_mode != ShiftMode::kReferenceShift) {
            return Tensor({static_cast<std::size_t>(config_.model_dim)});
        }
        TokenSeq ref;
        ref.ids.assign(seq_len, kPadId);
        ref.ids.front() = kClsId;
        ref.ids.back() = kEosId;
        Tape tape;
        GraphWeights w = register_weights(tape, false);
        Var emb = encode_graph(tape, w, ref.ids);
        return tape.value(emb);
    }

    // Full encode honoring shift_mode. Activations are those of the input's
    // own forward pass (the reference branch only shifts the output).
    EncodeResult encode(const TokenSeq& tokens) const {
        EncodeResult r = encode_raw(tokens);
        if (config_.shift_mode == ShiftMode::kReferenceShift) {
            Tensor shift = shift_vector(tokens.ids.size());
            for (std::size_t i = 0; i < r.embedding.numel(); ++i) {
                r.embedding[i] -= shift[i];
            }
        }
        return r;
    }

    // Runs the tail from an intermediate activation; reproduces encode()
    // exactly when fed that input's own activation. The shift constant is
    // synthesized from the sequence length, which the activation determines.
    Tensor encode_tail(const LayerActivation& act) const {
        Tape tape;
        Tensor emb = encode_tail_on(tape, tape.constant(check_act(act)),
                                    act.layer_index, nullptr);
        emb.ensure_finite("encode_tail");
        return emb;
    }

    // Tape-level tail map including the shift; `shift` may carry a
    // precomputed shift vector to avoid recomputing it per call.
    Tensor encode_tail_on(Tape& tape, Var act_var, int layer_index,
                          const Tensor* shift) const {
        Var out = tail_map(tape, act_var, layer_index, shift);
        return tape.value(out);
    }

    Var tail_map(Tape& tape, Var act_var, int layer_index,
                 const Tensor* shift) const {
        auto [rows, cols] = tape.shape_of(act_var);
        if (static_cast<int>(cols) != config_.model_dim) {
            throw ShapeError("tail: activation width " + std::to_string(cols) +
                             " != model_dim " +
                             std::to_string(config_.model_dim));
        }
        check_len(rows);
        GraphWeights w =
            register_weights(tape, false, layer_index, false);
        Var emb = tail_graph(tape, w, act_var, layer_index);
        if (config_.shift_mode == ShiftMode::kReferenceShift) {
            Tensor sv = shift ? *shift : shift_vector(rows);
            emb = tape.sub(emb, tape.constant(sv));
        }
        return emb;
    }

    // Scalar similarity with the configured head. Cosine with an exactly
    // zero argument is 0 by convention (a shifted model maps references to
    // the zero vector, where normalization is undefined).
    double similarity(const TokenSeq& a, const TokenSeq& b) const {
        Tensor ea = encode(a).embedding;
        Tensor eb = encode(b).embedding;
        return head_score(ea, eb);
    }

    double head_score(const Tensor& ea, const Tensor& eb) const {
        double dot = 0.0;
        for (std::size_t i = 0; i < ea.numel(); ++i) dot += ea[i] * eb[i];
        if (config_.head == SimilarityHead::kDot) return dot;
        double na = ea.norm();
        double nb = eb.norm();
        if (na == 0.0 || nb == 0.0) return 0.0;
        return dot / (na * nb);
    }

    bool same_tokenizer(const SiameseEncoder& other) const {
        return vocab_ == other.vocab_;
    }

    // Raw weight access for serialization.
    const Tensor& weight(const std::string& name) const {
        auto named = const_cast<SiameseEncoder*>(this)->named_weights();
        for (auto& [n, t] : named) {
            if (n == name) return *t;
        }
        throw Error("unknown weight: " + name);
    }

  private:
    void check_len(std::size_t len) const {
        if (len > static_cast<std::size_t>(config_.max_seq_len)) {
            throw ConfigError("sequence length " + std::to_string(len) +
                              " exceeds max_seq_len " +
                              std::to_string(config_.max_seq_len));
        }
        if (len < 1) throw ConfigError("empty sequence");
    }

    const Tensor& check_act(const LayerActivation& act) const {
        if (act.layer_index < 0 || act.layer_index > config_.num_layers) {
            throw ConfigError("activation layer_index " +
                              std::to_string(act.layer_index) +
                              " outside [0, " +
                              std::to_string(config_.num_layers) + "]");
        }
        return act.reps;
    }

    void init_weights() {
        const std::size_t d = static_cast<std::size_t>(config_.model_dim);
        const std::size_t ffn = static_cast<std::size_t>(config_.ffn_dim);
        Rng rng(derive_seed(config_.seed, "encoder-init"));
        auto randn = [&](std::size_t r, std::size_t c, double std) {
            Tensor t({r, c});
            for (std::size_t i = 0; i < t.numel(); ++i) {
                t[i] = rng.normal(0.0, std);
            }
            return t;
        };
        auto ones_row = [&](std::size_t c) {
            Tensor t({static_cast<std::size_t>(1), c});
            for (std::size_t i = 0; i < c; ++i) t[i] = 1.0;
            return t;
        };
        auto zeros_row = [&](std::size_t c) {
            return Tensor({static_cast<std::size_t>(1), c});
        };
        const double ws = 0.1;
        tok_emb_ = randn(static_cast<std::size_t>(vocab_.size()), d, ws);
        pos_emb_ = randn(static_cast<std::size_t>(config_.max_seq_len), d,
                         ws * 0.5);
        blocks_.resize(static_cast<std::size_t>(config_.num_layers));
        for (auto& b : blocks_) {
            b.ln1_g = ones_row(d);
            b.ln1_b = zeros_row(d);
            b.wq = randn(d, d, ws);
            b.bq = zeros_row(d);
            b.wk = randn(d, d, ws);
            b.bk = zeros_row(d);
            b.wv = randn(d, d, ws);
            b.bv = zeros_row(d);
            b.wo = randn(d, d, ws);
            b.bo = zeros_row(d);
            b.ln2_g = ones_row(d);
            b.ln2_b = zeros_row(d);
            b.w1 = randn(d, ffn, ws);
            b.b1 = zeros_row(ffn);
            b.w2 = randn(ffn, d, ws);
            b.b2 = zeros_row(d);
        }
        if (config_.num_layers > 0) {
            lnf_g_ = ones_row(d);
            lnf_b_ = zeros_row(d);
        }
        proj_w_ = randn(d, d, ws);
        proj_b_ = zeros_row(d);
    }

    EncoderConfig config_;
    Vocab vocab_;
    Tensor tok_emb_, pos_emb_;
    std::vector<detail::BlockWeights> blocks_;
    Tensor lnf_g_, lnf_b_;
    Tensor proj_w_, proj_b_;
};

}  // namespace ijat
