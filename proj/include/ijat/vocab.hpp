#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ijat/error.hpp"

namespace ijat {

// Reserved token ids. These are fixed; everything else is dense above them.
enum SpecialId : int {
    kPadId = 0,
    kClsId = 1,
    kEosId = 2,
    kUnkId = 3,
    kNumSpecialIds = 4,
};

class Vocab {
  public:
    Vocab() {
        for (const char* s : {"[PAD]", "[CLS]", "[EOS]", "[UNK]"}) add(s);
    }

    int add(const std::string& token) {
        auto it = ids_.find(token);
        if (it != ids_.end()) return it->second;
        int id = static_cast<int>(tokens_.size());
        tokens_.push_back(token);
        ids_.emplace(token, id);
        return id;
    }

    // UNK fallback lookup.
    int id(std::string_view token) const {
        auto it = ids_.find(std::string(token));
        return it == ids_.end() ? kUnkId : it->second;
    }

    bool contains(std::string_view token) const {
        return ids_.count(std::string(token)) > 0;
    }

    const std::string& token(int id) const {
        if (id < 0 || id >= static_cast<int>(tokens_.size())) {
            throw Error("vocab: id " + std::to_string(id) + " out of range");
        }
        return tokens_[static_cast<std::size_t>(id)];
    }

    int size() const { return static_cast<int>(tokens_.size()); }

    const std::vector<std::string>& tokens() const { return tokens_; }

    bool operator==(const Vocab& o) const { return tokens_ == o.tokens_; }

  private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> ids_;
};

// A tokenized sentence: CLS + content tokens + EOS, with each surface word's
// token range. Words are whitespace chunks; punctuation marks split off as
// single-token words of their own.
struct TokenSeq {
    std::vector<int> ids;
    std::vector<std::pair<std::size_t, std::size_t>> word_spans;

    std::size_t size() const { return ids.size(); }

    std::vector<std::string> surface(const Vocab& vocab) const {
        std::vector<std::string> out;
        out.reserve(ids.size());
        for (int id : ids) out.push_back(vocab.token(id));
        return out;
    }
};

namespace detail {

inline bool is_word_char(unsigned char c) {
    return std::isalnum(c) || c >= 0x80;  // keep UTF-8 bytes inside words
}

inline std::vector<std::string> split_pieces(std::string_view text) {
    std::vector<std::string> pieces;
    std::string cur;
    auto flush = [&] {
        if (!cur.empty()) {
            pieces.push_back(cur);
            cur.clear();
        }
    };
    for (unsigned char c : text) {
        if (std::isspace(c)) {
            flush();
        } else if (is_word_char(c)) {
            cur.push_back(static_cast<char>(std::tolower(c)));
        } else {
            flush();
            pieces.push_back(std::string(1, static_cast<char>(c)));
        }
    }
    flush();
    return pieces;
}

}  // namespace detail

// Lowercased whitespace/punctuation split with vocabulary lookup and UNK
// fallback; empty text gives [CLS, EOS] and no word spans.
inline TokenSeq tokenize(std::string_view text, const Vocab& vocab) {
    TokenSeq seq;
    seq.ids.push_back(kClsId);
    for (const std::string& piece : detail::split_pieces(text)) {
        std::size_t pos = seq.ids.size();
        seq.ids.push_back(vocab.id(piece));
        seq.word_spans.emplace_back(pos, pos + 1);
    }
    seq.ids.push_back(kEosId);
    return seq;
}

// Length-matched reference: content tokens become PAD, specials stay.
inline TokenSeq make_reference(const TokenSeq& tokens) {
    TokenSeq ref = tokens;
    for (int& id : ref.ids) {
        if (id != kClsId && id != kEosId && id != kPadId) id = kPadId;
    }
    return ref;
}

// Builds a vocabulary from raw sentences: frequency-ranked, ties broken
// lexicographically so the id assignment is reproducible.
inline Vocab build_vocab(const std::vector<std::string>& sentences) {
    std::map<std::string, std::size_t> counts;
    for (const std::string& s : sentences) {
        for (const std::string& piece : detail::split_pieces(s)) {
            ++counts[piece];
        }
    }
    std::vector<std::pair<std::string, std::size_t>> items(counts.begin(),
                                                           counts.end());
    std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    Vocab vocab;
    for (const auto& [token, count] : items) vocab.add(token);
    return vocab;
}

}  // namespace ijat
