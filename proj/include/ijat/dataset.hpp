#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "ijat/error.hpp"

namespace ijat {

struct PairRecord {
    std::string sentence_a;
    std::string sentence_b;
    double label = 0.0;  // gold similarity in [0, 1]

    bool operator==(const PairRecord&) const = default;
};

// Similarity-labeled sentence pairs with disjoint named splits.
struct PairDataset {
    std::vector<PairRecord> train;
    std::vector<PairRecord> dev;
    std::vector<PairRecord> test;

    std::size_t size() const {
        return train.size() + dev.size() + test.size();
    }

    std::vector<PairRecord> all() const {
        std::vector<PairRecord> out = train;
        out.insert(out.end(), dev.begin(), dev.end());
        out.insert(out.end(), test.begin(), test.end());
        return out;
    }
};

inline void check_label(double label, std::size_t line) {
    if (!(label >= 0.0 && label <= 1.0)) {
        throw IoError("dataset: label " + std::to_string(label) +
                      " outside [0, 1] at line " + std::to_string(line));
    }
}

// Tab-separated: sentence_a <TAB> sentence_b <TAB> label, UTF-8, one record
// per line. `has_header` skips the first line.
inline std::vector<PairRecord> load_pairs_tsv(const std::string& path,
                                              bool has_header = false) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read dataset: " + path);
    std::vector<PairRecord> records;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (lineno == 1 && has_header) continue;
        if (line.empty()) continue;
        std::size_t t1 = line.find('\t');
        std::size_t t2 = t1 == std::string::npos
                             ? std::string::npos
                             : line.find('\t', t1 + 1);
        if (t2 == std::string::npos) {
            throw IoError("dataset: expected 3 tab-separated columns at line " +
                          std::to_string(lineno));
        }
        PairRecord r;
        r.sentence_a = line.substr(0, t1);
        r.sentence_b = line.substr(t1 + 1, t2 - t1 - 1);
        try {
            r.label = std::stod(line.substr(t2 + 1));
        } catch (const std::exception&) {
            throw IoError("dataset: bad label at line " +
                          std::to_string(lineno));
        }
        check_label(r.label, lineno);
        records.push_back(std::move(r));
    }
    return records;
}

inline void save_pairs_tsv(const std::vector<PairRecord>& records,
                           const std::string& path, bool with_header = false) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write dataset: " + path);
    if (with_header) out << "sentence_a\tsentence_b\tlabel\n";
    std::ostringstream os;
    os.precision(17);
    for (const PairRecord& r : records) {
        os.str("");
        os << r.label;
        out << r.sentence_a << '\t' << r.sentence_b << '\t' << os.str()
            << '\n';
    }
    if (!out) throw IoError("short write: " + path);
}

}  // namespace ijat
