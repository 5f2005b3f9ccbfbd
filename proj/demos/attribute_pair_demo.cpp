// Minimal end-to-end walkthrough: build a tiny shifted encoder, attribute a
// sentence pair and print the token-token matrix with its error certificate.
#include <cstdio>

#include "ijat/attribution.hpp"
#include "ijat/synth.hpp"

int main() {
    using namespace ijat;

    PairDataset corpus = generate_synthetic_corpus(/*seed=*/1, /*size=*/200);
    std::vector<std::string> sentences;
    for (const PairRecord& r : corpus.all()) {
        sentences.push_back(r.sentence_a);
        sentences.push_back(r.sentence_b);
    }
    Vocab vocab = build_vocab(sentences);

    EncoderConfig config;
    config.num_layers = 2;
    config.model_dim = 16;
    config.num_heads = 2;
    config.ffn_dim = 32;
    config.head = SimilarityHead::kCosine;
    config.shift_mode = ShiftMode::kReferenceShift;
    config.seed = 1;
    SiameseEncoder model(config, vocab);

    TokenSeq a = tokenize("the dog runs in the park.", vocab);
    TokenSeq b = tokenize("a cat sleeps at home.", vocab);

    AttributionRequest request;
    request.steps = 200;
    request.mode = AttributionMode::kExact;
    AttributionResult res = attribute_pair(model, a, b, request);

    std::printf("score            %+.6f\n", res.score);
    std::printf("matrix total     %+.6f\n", res.total);
    std::printf("attribution err  %.3e\n\n", res.attribution_error);
    std::printf("%-8s", "");
    for (const std::string& t : res.tokens_b) std::printf("%10s", t.c_str());
    std::printf("\n");
    for (std::size_t i = 0; i < res.matrix.rows(); ++i) {
        std::printf("%-8s", res.tokens_a[i].c_str());
        for (std::size_t j = 0; j < res.matrix.cols(); ++j) {
            std::printf("%10.4f", res.matrix.at(i, j));
        }
        std::printf("\n");
    }
    return 0;
}
