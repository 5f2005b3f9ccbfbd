// Prints the frozen-seed embedding asserted by the golden-value test in
// tests/test_encoder.cpp. Rerun after any deliberate change to the
// initialization scheme and update the test constants.
#include <cstdio>

#include "ijat/encoder.hpp"
#include "ijat/vocab.hpp"

int main() {
    using namespace ijat;
    Vocab vocab = build_vocab({"a b"});
    EncoderConfig c;
    c.num_layers = 1;
    c.model_dim = 8;
    c.num_heads = 2;
    c.ffn_dim = 16;
    c.max_seq_len = 16;
    c.seed = 123;
    SiameseEncoder model(c, vocab);
    Tensor e = model.encode(tokenize("a b", vocab)).embedding;
    for (std::size_t i = 0; i < e.numel(); ++i) {
        std::printf("%.17g%s", e[i], i + 1 < e.numel() ? ", " : "\n");
    }
    return 0;
}
