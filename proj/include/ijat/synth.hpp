#pragma once

#include <set>
#include <string>
#include <vector>

#include "ijat/dataset.hpp"
#include "ijat/error.hpp"
#include "ijat/rng.hpp"
#include "ijat/triplets.hpp"

namespace ijat {

// Templated sentence-pair generator standing in for a real similarity corpus
// at desk scale. Pair kinds and heuristic labels:
//   identical            1.0
//   paraphrase           0.8  (synonym-swapped verb, same frame)
//   partial overlap      0.4 - 0.6 (shared subject or verb)
//   unrelated            0.0 - 0.1
//   negation             0.2  ("x is not adj" vs "x is adj")
//   adjective synonym    0.85 / opposite 0.1 (bundled triplets)

namespace synth_detail {

inline const std::vector<std::string>& subjects() {
    static const std::vector<std::string> v = {
        "the dog",    "a cat",      "the man",    "a woman",
        "the child",  "a bird",     "the horse",  "a teacher",
        "the student", "a doctor",  "the farmer", "a musician"};
    return v;
}

inline const std::vector<std::pair<std::string, std::string>>& verbs() {
    // base verb and a paraphrase partner
    static const std::vector<std::pair<std::string, std::string>> v = {
        {"runs", "jogs"},     {"sleeps", "rests"},   {"sings", "hums"},
        {"jumps", "leaps"},   {"walks", "strolls"},  {"swims", "paddles"},
        {"reads", "studies"}, {"waits", "lingers"},  {"smiles", "grins"},
        {"works", "trains"}};
    return v;
}

inline const std::vector<std::string>& places() {
    static const std::vector<std::string> v = {
        "in the park",   "at home",        "near the river", "on the hill",
        "by the sea",    "in the garden",  "at the market",  "in the city"};
    return v;
}

inline const std::vector<std::string>& copula_adjectives() {
    static const std::vector<std::string> v = {
        "hungry", "happy", "tired", "angry",
        "quiet",  "busy",  "ready", "friendly"};
    return v;
}

inline const std::vector<std::string>& template_nouns() {
    static const std::vector<std::string> v = {"house", "car",   "garden",
                                               "story", "movie", "song"};
    return v;
}

}  // namespace synth_detail

inline std::vector<PairRecord> generate_synthetic_pairs(std::uint64_t seed,
                                                        std::size_t size) {
    if (size < 10) throw Error("synthetic corpus: size must be >= 10");
    using namespace synth_detail;
    Rng rng(derive_seed(seed, "synthetic-corpus"));

    auto subject = [&] { return subjects()[rng.below(subjects().size())]; };
    auto verb_pair = [&] { return verbs()[rng.below(verbs().size())]; };
    auto place = [&] { return places()[rng.below(places().size())]; };
    auto two_distinct = [&](std::size_t n) {
        std::size_t i = rng.below(n);
        std::size_t j = rng.below(n - 1);
        if (j >= i) ++j;
        return std::pair<std::size_t, std::size_t>{i, j};
    };
    auto sentence = [](const std::string& s, const std::string& v,
                       const std::string& p) {
        return s + " " + v + " " + p + ".";
    };

    std::vector<PairRecord> records;
    std::set<std::pair<std::string, std::string>> seen;
    auto emit = [&](std::string a, std::string b, double label) {
        if (!seen.emplace(a, b).second) return;  // keep records distinct
        records.push_back({std::move(a), std::move(b), label});
    };

    const auto& triplets = adjective_triplets();
    std::size_t guard = 0;
    while (records.size() < size && ++guard < size * 50) {
        switch (rng.below(20)) {
            case 0:
            case 1: {  // identical
                std::string s = sentence(subject(), verb_pair().first, place());
                emit(s, s, 1.0);
                break;
            }
            case 2:
            case 3:
            case 4:
            case 5: {  // paraphrase: synonym verb in the same frame
                auto [v, syn] = verb_pair();
                std::string subj = subject();
                std::string pl = place();
                emit(sentence(subj, v, pl), sentence(subj, syn, pl), 0.8);
                break;
            }
            case 6:
            case 7:
            case 8:
            case 9: {  // partial overlap: shared subject or shared verb
                double label = 0.4 + 0.2 * rng.uniform();
                if (rng.below(2) == 0) {
                    std::string subj = subject();
                    auto [vi, vj] = two_distinct(verbs().size());
                    emit(sentence(subj, verbs()[vi].first, place()),
                         sentence(subj, verbs()[vj].first, place()), label);
                } else {
                    auto [si, sj] = two_distinct(subjects().size());
                    std::string v = verb_pair().first;
                    emit(sentence(subjects()[si], v, place()),
                         sentence(subjects()[sj], v, place()), label);
                }
                break;
            }
            case 10:
            case 11:
            case 12:
            case 13: {  // unrelated: disjoint subject, verb, place
                auto [si, sj] = two_distinct(subjects().size());
                auto [vi, vj] = two_distinct(verbs().size());
                auto [pi, pj] = two_distinct(places().size());
                emit(sentence(subjects()[si], verbs()[vi].first, places()[pi]),
                     sentence(subjects()[sj], verbs()[vj].second, places()[pj]),
                     0.1 * rng.uniform());
                break;
            }
            case 14:
            case 15: {  // negation
                std::string subj = subject();
                const auto& adjs = copula_adjectives();
                std::string adj = adjs[rng.below(adjs.size())];
                emit(subj + " is not " + adj + ".", subj + " is " + adj + ".",
                     0.2);
                break;
            }
            default: {  // adjective triplet templates
                const auto& t = triplets[rng.below(triplets.size())];
                const auto& nouns = template_nouns();
                std::string noun = nouns[rng.below(nouns.size())];
                std::string anchor = "this " + noun + " is " + t.anchor + ".";
                if (rng.below(2) == 0) {
                    emit(anchor, "this " + noun + " is " + t.synonym + ".",
                         0.85);
                } else {
                    emit(anchor, "this " + noun + " is " + t.opposite + ".",
                         0.1);
                }
                break;
            }
        }
    }
    return records;
}

// Deterministic 80/10/10 split of the generated pairs.
inline PairDataset generate_synthetic_corpus(std::uint64_t seed,
                                             std::size_t size) {
    std::vector<PairRecord> records = generate_synthetic_pairs(seed, size);
    PairDataset ds;
    for (std::size_t i = 0; i < records.size(); ++i) {
        switch (i % 10) {
            case 8:
                ds.dev.push_back(std::move(records[i]));
                break;
            case 9:
                ds.test.push_back(std::move(records[i]));
                break;
            default:
                ds.train.push_back(std::move(records[i]));
        }
    }
    return ds;
}

}  // namespace ijat
