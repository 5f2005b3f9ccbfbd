#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "ijat/dataset.hpp"
#include "ijat/encoder.hpp"
#include "ijat/error.hpp"
#include "ijat/metrics.hpp"
#include "ijat/rng.hpp"
#include "ijat/tape.hpp"

namespace ijat {

struct TrainConfig {
    int epochs = 5;
    int batch_size = 16;
    // The published setting of 2e-5 targets a large pretrained encoder; for
    // randomly initialized toy models it barely moves the weights, so the
    // default here is 1e-3. kReferenceLearningRate records the former.
    double learning_rate = 1e-3;
    double weight_decay = 0.1;
    double warmup_fraction = 0.10;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 0;

    static constexpr double kReferenceLearningRate = 2e-5;

    void validate() const {
        if (epochs < 0) throw ConfigError("train: epochs < 0");
        if (batch_size < 1) throw ConfigError("train: batch_size < 1");
        if (!(warmup_fraction >= 0.0 && warmup_fraction < 1.0)) {
            throw ConfigError("train: warmup_fraction outside [0, 1)");
        }
    }
};

struct TrainReport {
    std::vector<double> epoch_mean_loss;
    std::size_t steps = 0;
};

namespace detail {

// Decoupled weight decay Adam. One slot pair per weight tensor.
class AdamW {
  public:
    AdamW(const TrainConfig& config, std::size_t total_steps)
        : config_(config), total_steps_(total_steps) {}

    void step(std::vector<std::pair<std::string, Tensor*>>& weights,
              const std::vector<Tensor>& grads) {
        ++t_;
        const double lr = learning_rate_at(t_);
        const double b1 = config_.adam_beta1;
        const double b2 = config_.adam_beta2;
        const double bc1 = 1.0 - std::pow(b1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(b2, static_cast<double>(t_));
        if (m_.empty()) {
            m_.resize(weights.size());
            v_.resize(weights.size());
            for (std::size_t w = 0; w < weights.size(); ++w) {
                m_[w].assign(weights[w].second->numel(), 0.0);
                v_[w].assign(weights[w].second->numel(), 0.0);
            }
        }
        for (std::size_t w = 0; w < weights.size(); ++w) {
            Tensor& param = *weights[w].second;
            const Tensor& g = grads[w];
            for (std::size_t i = 0; i < param.numel(); ++i) {
                const double gi = g[i];
                m_[w][i] = b1 * m_[w][i] + (1.0 - b1) * gi;
                v_[w][i] = b2 * v_[w][i] + (1.0 - b2) * gi * gi;
                const double mhat = m_[w][i] / bc1;
                const double vhat = v_[w][i] / bc2;
                param[i] -= lr * (mhat / (std::sqrt(vhat) + config_.adam_eps) +
                                  config_.weight_decay * param[i]);
            }
        }
    }

    // Linear warm-up to the peak rate, then linear decay to zero.
    double learning_rate_at(std::size_t step) const {
        const double warmup =
            std::ceil(config_.warmup_fraction *
                      static_cast<double>(total_steps_));
        if (warmup > 0 && static_cast<double>(step) <= warmup) {
            return config_.learning_rate * static_cast<double>(step) / warmup;
        }
        const double remaining = static_cast<double>(total_steps_) - warmup;
        if (remaining <= 0) return config_.learning_rate;
        const double frac =
            (static_cast<double>(total_steps_) - static_cast<double>(step)) /
            remaining;
        return config_.learning_rate * std::max(0.0, frac);
    }

  private:
    TrainConfig config_;
    std::size_t total_steps_;
    std::size_t t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

// Gradient tensors in named_weights order.
inline void collect_grads(const Tape& tape,
                          const SiameseEncoder::GraphWeights& w,
                          const SiameseEncoder& model,
                          std::vector<Tensor>& out) {
    auto grab = [&](Var v) { out.push_back(tape.grad(v)); };
    grab(w.tok_emb);
    grab(w.pos_emb);
    for (std::size_t l = 0; l < w.blocks.size(); ++l) {
        const auto& b = w.blocks[l];
        grab(b.ln1_g);
        grab(b.ln1_b);
        grab(b.wq);
        grab(b.bq);
        grab(b.wk);
        grab(b.bk);
        grab(b.wv);
        grab(b.bv);
        grab(b.wo);
        grab(b.bo);
        grab(b.ln2_g);
        grab(b.ln2_b);
        grab(b.w1);
        grab(b.b1);
        grab(b.w2);
        grab(b.b2);
    }
    if (model.config().num_layers > 0) {
        grab(w.lnf_g);
        grab(w.lnf_b);
    }
    grab(w.proj_w);
    grab(w.proj_b);
}

}  // namespace detail

// Fine-tunes a copy of the model on the train split with an MSE loss between
// the predicted and gold similarity. The input model is never mutated;
// training is deterministic under a fixed seed.
inline std::pair<SiameseEncoder, TrainReport> train(
    const SiameseEncoder& model, const PairDataset& dataset,
    const TrainConfig& config) {
    config.validate();
    if (dataset.train.empty()) throw ConfigError("train: empty train split");

    SiameseEncoder trained = model;
    const EncoderConfig& enc_config = trained.config();
    const bool shifted =
        enc_config.shift_mode == ShiftMode::kReferenceShift;
    const bool cosine = enc_config.head == SimilarityHead::kCosine;

    // tokenize once
    std::vector<TokenSeq> tok_a, tok_b;
    std::vector<double> labels;
    for (const PairRecord& r : dataset.train) {
        tok_a.push_back(tokenize(r.sentence_a, trained.vocab()));
        tok_b.push_back(tokenize(r.sentence_b, trained.vocab()));
        labels.push_back(r.label);
    }

    const std::size_t n = dataset.train.size();
    const std::size_t batches_per_epoch =
        (n + static_cast<std::size_t>(config.batch_size) - 1) /
        static_cast<std::size_t>(config.batch_size);
    const std::size_t total_steps =
        batches_per_epoch * static_cast<std::size_t>(config.epochs);

    detail::AdamW optimizer(config, total_steps);
    Rng shuffle_rng(derive_seed(config.seed, "train-shuffle"));
    TrainReport report;

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);

    Tape tape;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double epoch_loss = 0.0;
        std::size_t batch_index = 0;
        for (std::size_t start = 0; start < n;
             start += static_cast<std::size_t>(config.batch_size),
                         ++batch_index) {
            const std::size_t end = std::min(
                n, start + static_cast<std::size_t>(config.batch_size));
            tape.reset();
            auto weights = trained.register_weights(tape, true);
            auto named = trained.named_weights();

            // references per distinct length are shared inside the batch
            std::map<std::size_t, Var> ref_cache;
            auto encode_on_tape = [&](const TokenSeq& seq) {
                Var emb = trained.encode_graph(tape, weights, seq.ids);
                if (shifted) {
                    auto it = ref_cache.find(seq.ids.size());
                    if (it == ref_cache.end()) {
                        TokenSeq ref = make_reference(seq);
                        Var remb =
                            trained.encode_graph(tape, weights, ref.ids);
                        it = ref_cache.emplace(seq.ids.size(), remb).first;
                    }
                    emb = tape.sub(emb, it->second);
                }
                if (cosine) emb = tape.l2_normalize(emb);
                return emb;
            };

            Var loss;
            std::size_t count = 0;
            for (std::size_t p = start; p < end; ++p, ++count) {
                const std::size_t idx = order[p];
                Var ea = encode_on_tape(tok_a[idx]);
                Var eb = encode_on_tape(tok_b[idx]);
                Var pred = tape.dot(ea, eb);
                Var err = tape.sub(
                    pred, tape.constant(Tensor::scalar(labels[idx])));
                Var sq = tape.mul(err, err);
                loss = count == 0 ? sq : tape.add(loss, sq);
            }
            loss = tape.scale(loss, 1.0 / static_cast<double>(count));
            const double loss_value = tape.value_span(loss)[0];
            if (!std::isfinite(loss_value)) {
                throw Error("train: NaN loss at epoch " +
                            std::to_string(epoch) + ", batch " +
                            std::to_string(batch_index) +
                            " (learning rate " +
                            std::to_string(config.learning_rate) + ")");
            }
            epoch_loss += loss_value * static_cast<double>(count);

            tape.backward(loss, 0);
            std::vector<Tensor> grads;
            grads.reserve(named.size());
            detail::collect_grads(tape, weights, trained, grads);
            optimizer.step(named, grads);
            ++report.steps;
        }
        report.epoch_mean_loss.push_back(epoch_loss /
                                         static_cast<double>(n));
    }
    return {std::move(trained), std::move(report)};
}

// Spearman rank correlation between predicted similarities and gold labels.
// Constant predictions make the correlation undefined and raise.
inline double evaluate_spearman(const SiameseEncoder& model,
                                const std::vector<PairRecord>& split) {
    if (split.empty()) throw ConfigError("evaluate: empty split");
    std::vector<double> preds, gold;
    preds.reserve(split.size());
    for (const PairRecord& r : split) {
        TokenSeq a = tokenize(r.sentence_a, model.vocab());
        TokenSeq b = tokenize(r.sentence_b, model.vocab());
        preds.push_back(model.similarity(a, b));
        gold.push_back(r.label);
    }
    return spearman(preds, gold);
}

}  // namespace ijat
