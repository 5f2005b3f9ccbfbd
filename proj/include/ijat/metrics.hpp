#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <set>
#include <span>
#include <vector>

#include "ijat/error.hpp"
#include "ijat/tensor.hpp"

namespace ijat {

namespace detail {

inline bool is_constant(std::span<const double> x) {
    for (double v : x) {
        if (v != x[0]) return false;
    }
    return true;
}

// Fractional ranks, average rank on ties.
inline std::vector<double> fractional_ranks(std::span<const double> x) {
    const std::size_t n = x.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    std::vector<double> ranks(n, 0.0);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && x[order[j + 1]] == x[order[i]]) ++j;
        double avg = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
        i = j + 1;
    }
    return ranks;
}

}  // namespace detail

// Product-moment correlation. Throws on constant input, where the value is
// undefined.
inline double pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) {
        throw ShapeError("pearson: lengths " + std::to_string(x.size()) +
                         " vs " + std::to_string(y.size()));
    }
    if (x.size() < 2) throw DegenerateInputError("pearson: need >= 2 values");
    if (detail::is_constant(x) || detail::is_constant(y)) {
        throw DegenerateInputError("pearson: constant input");
    }
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    return sxy / std::sqrt(sxx * syy);
}

// Rank correlation: Pearson over fractional ranks (average ranks on ties).
inline double spearman(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) {
        throw ShapeError("spearman: lengths " + std::to_string(x.size()) +
                         " vs " + std::to_string(y.size()));
    }
    if (x.size() < 2) throw DegenerateInputError("spearman: need >= 2 values");
    if (detail::is_constant(x) || detail::is_constant(y)) {
        throw DegenerateInputError("spearman: constant input");
    }
    std::vector<double> rx = detail::fractional_ranks(x);
    std::vector<double> ry = detail::fractional_ranks(y);
    return pearson(rx, ry);
}

// Indices of the k largest cells, ties broken by flat cell index so the
// selection is deterministic.
inline std::vector<std::size_t> topk_cells(const Tensor& m, std::size_t k) {
    if (k > m.numel()) {
        throw ShapeError("topk: k " + std::to_string(k) + " > " +
                         std::to_string(m.numel()) + " cells");
    }
    std::vector<std::size_t> idx(m.numel());
    std::iota(idx.begin(), idx.end(), 0);
    std::partial_sort(idx.begin(), idx.begin() + static_cast<long>(k),
                      idx.end(), [&](std::size_t a, std::size_t b) {
                          if (m[a] != m[b]) return m[a] > m[b];
                          return a < b;
                      });
    idx.resize(k);
    return idx;
}

// Jaccard overlap of the top-k cell-index sets of two same-shaped matrices.
inline double jaccard_topk(const Tensor& m1, const Tensor& m2,
                           std::size_t k) {
    if (!m1.same_shape(m2)) {
        throw ShapeError("jaccard_topk: shape " +
                         Tensor::shape_str(m1.shape()) + " vs " +
                         Tensor::shape_str(m2.shape()));
    }
    std::vector<std::size_t> a = topk_cells(m1, k);
    std::vector<std::size_t> b = topk_cells(m2, k);
    std::set<std::size_t> sa(a.begin(), a.end());
    std::set<std::size_t> sb(b.begin(), b.end());
    std::size_t inter = 0;
    for (std::size_t v : sa) inter += sb.count(v);
    std::size_t uni = sa.size() + sb.size() - inter;
    if (uni == 0) return 1.0;  // k == 0
    return static_cast<double>(inter) / static_cast<double>(uni);
}

struct DistributionSummary {
    std::size_t count = 0;
    double mean = 0.0;
    double stdev = 0.0;
    double min = 0.0;
    double max = 0.0;
    std::vector<double> bin_edges;       // nbins + 1
    std::vector<std::size_t> bin_counts; // nbins
    std::vector<double> thresholds;
    std::vector<double> cumulative;      // fraction of values <= threshold
};

// Moments, histogram and the empirical CDF at the requested thresholds.
inline DistributionSummary summarize(std::span<const double> values,
                                     std::span<const double> thresholds = {},
                                     std::size_t nbins = 20) {
    if (values.empty()) throw DegenerateInputError("summarize: no values");
    DistributionSummary s;
    s.count = values.size();
    s.min = *std::min_element(values.begin(), values.end());
    s.max = *std::max_element(values.begin(), values.end());
    for (double v : values) s.mean += v;
    s.mean /= static_cast<double>(s.count);
    for (double v : values) {
        const double d = v - s.mean;
        s.stdev += d * d;
    }
    s.stdev = std::sqrt(s.stdev / static_cast<double>(s.count));

    if (nbins == 0) nbins = 1;
    const double lo = s.min;
    const double hi = s.max > s.min ? s.max : s.min + 1.0;
    s.bin_edges.resize(nbins + 1);
    for (std::size_t i = 0; i <= nbins; ++i) {
        s.bin_edges[i] =
            lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(nbins);
    }
    s.bin_counts.assign(nbins, 0);
    for (double v : values) {
        std::size_t b = static_cast<std::size_t>(
            (v - lo) / (hi - lo) * static_cast<double>(nbins));
        if (b >= nbins) b = nbins - 1;
        ++s.bin_counts[b];
    }

    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    for (double t : thresholds) {
        auto it = std::upper_bound(sorted.begin(), sorted.end(), t);
        s.thresholds.push_back(t);
        s.cumulative.push_back(
            static_cast<double>(it - sorted.begin()) /
            static_cast<double>(sorted.size()));
    }
    return s;
}

// Fraction of values inside the closed band [lo, hi].
inline double fraction_within(std::span<const double> values, double lo,
                              double hi) {
    if (values.empty()) return 0.0;
    std::size_t n = 0;
    for (double v : values) {
        if (v >= lo && v <= hi) ++n;
    }
    return static_cast<double>(n) / static_cast<double>(values.size());
}

inline double fraction_below(std::span<const double> values, double t) {
    if (values.empty()) return 0.0;
    std::size_t n = 0;
    for (double v : values) {
        if (v < t) ++n;
    }
    return static_cast<double>(n) / static_cast<double>(values.size());
}

}  // namespace ijat
