#pragma once

#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ijat/attribution.hpp"
#include "ijat/svg.hpp"

namespace ijat {

// Display labels for matrix rows/columns under the requested reduction.
// Feature matrices get flat per-feature index labels.
inline std::vector<std::string> unit_labels(
    const std::vector<std::string>& tokens,
    const std::vector<std::pair<std::size_t, std::size_t>>& spans,
    Reduce reduce, std::size_t dim = 0) {
    if (reduce == Reduce::kFeature) {
        std::vector<std::string> labels;
        labels.reserve(tokens.size() * dim);
        for (std::size_t t = 0; t < tokens.size(); ++t) {
            for (std::size_t f = 0; f < dim; ++f) {
                labels.push_back(tokens[t] + ":" + std::to_string(f));
            }
        }
        return labels;
    }
    if (reduce != Reduce::kWord) return tokens;
    auto units = detail::word_units(spans, tokens.size());
    std::vector<std::string> labels;
    labels.reserve(units.size());
    for (const auto& [s, e] : units) {
        std::string joined;
        for (std::size_t i = s; i < e; ++i) joined += tokens[i];
        labels.push_back(joined);
    }
    return labels;
}

inline nlohmann::ordered_json attribution_to_json(
    const AttributionResult& res) {
    nlohmann::ordered_json j;
    j["format_version"] = 1;
    j["mode"] = to_string(res.mode);
    j["reduce"] = to_string(res.reduce);
    j["layer"] = res.layer_index;
    j["steps"] = res.steps;
    j["tokens_a"] = res.tokens_a;
    j["tokens_b"] = res.tokens_b;
    j["score"] = res.score;
    j["ref_sim_a"] = res.ref_sim_a;
    j["ref_sim_b"] = res.ref_sim_b;
    j["ref_term"] = res.ref_term;
    j["attribution_error"] = res.attribution_error;
    j["matrix_total"] = res.total;
    if (res.mode == AttributionMode::kApproximate) {
        j["score_plus_one_gap"] = res.score_plus_one_gap;
    }
    auto matrix_rows = [](const Tensor& m) {
        nlohmann::ordered_json rows = nlohmann::ordered_json::array();
        for (std::size_t i = 0; i < m.rows(); ++i) {
            std::vector<double> row(m.data() + i * m.cols(),
                                    m.data() + (i + 1) * m.cols());
            rows.push_back(row);
        }
        return rows;
    };
    j["matrix"] = matrix_rows(res.matrix);
    if (res.reduce == Reduce::kWord) {
        j["matrix_sum"] = matrix_rows(res.matrix_sum);
    }
    return j;
}

namespace detail {

inline std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string quoted = "\"";
    for (char c : s) {
        if (c == '"') quoted += "\"\"";
        else quoted += c;
    }
    quoted += '"';
    return quoted;
}

inline std::string csv_num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace detail

// Matrix as CSV with token (or word) labels on both axes.
inline std::string attribution_to_csv(const AttributionResult& res) {
    const Tensor& m = res.matrix;
    const std::size_t da =
        res.reduce == Reduce::kFeature ? m.rows() / res.tokens_a.size() : 0;
    const std::size_t db =
        res.reduce == Reduce::kFeature ? m.cols() / res.tokens_b.size() : 0;
    std::vector<std::string> la =
        unit_labels(res.tokens_a, res.word_spans_a, res.reduce, da);
    std::vector<std::string> lb =
        unit_labels(res.tokens_b, res.word_spans_b, res.reduce, db);
    std::ostringstream os;
    os << "token";
    for (const auto& l : lb) os << ',' << detail::csv_field(l);
    os << '\n';
    for (std::size_t i = 0; i < m.rows(); ++i) {
        os << detail::csv_field(la[i]);
        for (std::size_t j = 0; j < m.cols(); ++j) {
            os << ',' << detail::csv_num(m.at(i, j));
        }
        os << '\n';
    }
    return os.str();
}

inline std::string attribution_to_svg(const AttributionResult& res) {
    const Tensor& m = res.matrix;
    const std::size_t da =
        res.reduce == Reduce::kFeature ? m.rows() / res.tokens_a.size() : 0;
    const std::size_t db =
        res.reduce == Reduce::kFeature ? m.cols() / res.tokens_b.size() : 0;
    return render_heatmap_svg(
        m, unit_labels(res.tokens_a, res.word_spans_a, res.reduce, da),
        unit_labels(res.tokens_b, res.word_spans_b, res.reduce, db),
        heatmap_title(res));
}

}  // namespace ijat
