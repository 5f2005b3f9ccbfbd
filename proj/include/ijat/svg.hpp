#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "ijat/attribution.hpp"
#include "ijat/error.hpp"
#include "ijat/tensor.hpp"

namespace ijat {

namespace detail {

inline std::string svg_num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

inline std::string xml_escape(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            case '\'': out += "&apos;"; break;
            default: out += c;
        }
    }
    return out;
}

// Diverging red/blue scale centered at zero: positive cells red, negative
// blue, zero white.
inline std::string diverging_color(double v, double vmax) {
    double t = vmax > 0.0 ? std::clamp(v / vmax, -1.0, 1.0) : 0.0;
    int r, g, b;
    if (t >= 0.0) {
        r = 255;
        g = static_cast<int>(std::lround(255.0 * (1.0 - t)));
        b = g;
    } else {
        b = 255;
        g = static_cast<int>(std::lround(255.0 * (1.0 + t)));
        r = g;
    }
    char buf[24];
    std::snprintf(buf, sizeof(buf), "rgb(%d,%d,%d)", r, g, b);
    return buf;
}

}  // namespace detail

// Attribution heatmap as a standalone SVG: rows are tokens of the first
// sentence, columns of the second; the header carries the score, the three
// reference terms and the attribution error.
inline std::string render_heatmap_svg(const Tensor& matrix,
                                      const std::vector<std::string>& labels_a,
                                      const std::vector<std::string>& labels_b,
                                      const std::string& title) {
    if (matrix.rows() != labels_a.size() || matrix.cols() != labels_b.size()) {
        throw ShapeError("heatmap: matrix " +
                         std::to_string(matrix.rows()) + "x" +
                         std::to_string(matrix.cols()) + " vs labels " +
                         std::to_string(labels_a.size()) + "/" +
                         std::to_string(labels_b.size()));
    }
    const double cell = 26.0;
    std::size_t label_chars = 1;
    for (const auto& s : labels_a) label_chars = std::max(label_chars, s.size());
    const double left = 14.0 + 6.5 * static_cast<double>(label_chars);
    std::size_t top_chars = 1;
    for (const auto& s : labels_b) top_chars = std::max(top_chars, s.size());
    const double top = 44.0 + 6.5 * static_cast<double>(top_chars);
    const double width = left + cell * static_cast<double>(matrix.cols()) + 90.0;
    const double height = top + cell * static_cast<double>(matrix.rows()) + 16.0;

    double vmax = 0.0;
    for (double v : matrix.values()) vmax = std::max(vmax, std::abs(v));

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\""
        << detail::svg_num(width) << "\" height=\"" << detail::svg_num(height)
        << "\" font-family=\"monospace\" font-size=\"11\">\n";
    svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg << "<text x=\"8\" y=\"16\">" << detail::xml_escape(title)
        << "</text>\n";

    for (std::size_t i = 0; i < matrix.rows(); ++i) {
        for (std::size_t j = 0; j < matrix.cols(); ++j) {
            const double x = left + cell * static_cast<double>(j);
            const double y = top + cell * static_cast<double>(i);
            svg << "<rect x=\"" << detail::svg_num(x) << "\" y=\""
                << detail::svg_num(y) << "\" width=\"" << detail::svg_num(cell)
                << "\" height=\"" << detail::svg_num(cell) << "\" fill=\""
                << detail::diverging_color(matrix.at(i, j), vmax)
                << "\" stroke=\"#cccccc\" stroke-width=\"0.5\">"
                << "<title>" << detail::xml_escape(labels_a[i]) << " / "
                << detail::xml_escape(labels_b[j]) << ": "
                << detail::svg_num(matrix.at(i, j)) << "</title></rect>\n";
        }
    }
    for (std::size_t i = 0; i < matrix.rows(); ++i) {
        svg << "<text x=\"" << detail::svg_num(left - 6.0) << "\" y=\""
            << detail::svg_num(top + cell * (static_cast<double>(i) + 0.7))
            << "\" text-anchor=\"end\">" << detail::xml_escape(labels_a[i])
            << "</text>\n";
    }
    for (std::size_t j = 0; j < matrix.cols(); ++j) {
        const double x = left + cell * (static_cast<double>(j) + 0.7);
        const double y = top - 6.0;
        svg << "<text x=\"" << detail::svg_num(x) << "\" y=\""
            << detail::svg_num(y) << "\" text-anchor=\"start\" transform=\""
            << "rotate(-60 " << detail::svg_num(x) << " " << detail::svg_num(y)
            << ")\">" << detail::xml_escape(labels_b[j]) << "</text>\n";
    }
    // scale note
    svg << "<text x=\""
        << detail::svg_num(left + cell * static_cast<double>(matrix.cols()) +
                           8.0)
        << "\" y=\"" << detail::svg_num(top + 12.0) << "\">max |v| = "
        << detail::svg_num(vmax) << "</text>\n";
    svg << "</svg>\n";
    return svg.str();
}

// Bar or scatter rendering for probe plot-data series.
inline std::string render_series_svg(const std::string& title,
                                     const std::vector<double>& x,
                                     const std::vector<double>& y,
                                     bool bars) {
    const double w = 560.0, h = 360.0, ml = 64.0, mr = 16.0, mt = 34.0,
                 mb = 40.0;
    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\""
        << detail::svg_num(w) << "\" height=\"" << detail::svg_num(h)
        << "\" font-family=\"monospace\" font-size=\"11\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        << "<text x=\"8\" y=\"16\">" << detail::xml_escape(title)
        << "</text>\n";
    if (!x.empty() && x.size() == y.size()) {
        double xmin = x[0], xmax = x[0], ymin = 0.0, ymax = y[0];
        for (double v : x) {
            xmin = std::min(xmin, v);
            xmax = std::max(xmax, v);
        }
        for (double v : y) {
            ymin = std::min(ymin, v);
            ymax = std::max(ymax, v);
        }
        if (xmax == xmin) xmax = xmin + 1.0;
        if (ymax == ymin) ymax = ymin + 1.0;
        auto px = [&](double v) {
            return ml + (v - xmin) / (xmax - xmin) * (w - ml - mr);
        };
        auto py = [&](double v) {
            return h - mb - (v - ymin) / (ymax - ymin) * (h - mt - mb);
        };
        if (bars) {
            const double bw =
                0.8 * (w - ml - mr) / static_cast<double>(x.size());
            for (std::size_t i = 0; i < x.size(); ++i) {
                const double top = py(std::max(0.0, y[i]));
                const double bot = py(std::min(0.0, y[i]));
                svg << "<rect x=\"" << detail::svg_num(px(x[i]) - bw / 2)
                    << "\" y=\"" << detail::svg_num(top) << "\" width=\""
                    << detail::svg_num(bw) << "\" height=\""
                    << detail::svg_num(std::max(0.5, bot - top))
                    << "\" fill=\"#4878b0\"/>\n";
            }
        } else {
            for (std::size_t i = 0; i < x.size(); ++i) {
                svg << "<circle cx=\"" << detail::svg_num(px(x[i]))
                    << "\" cy=\"" << detail::svg_num(py(y[i]))
                    << "\" r=\"2.5\" fill=\"#b04848\"/>\n";
            }
        }
        // axis frame and extrema labels
        svg << "<rect x=\"" << detail::svg_num(ml) << "\" y=\""
            << detail::svg_num(mt) << "\" width=\""
            << detail::svg_num(w - ml - mr) << "\" height=\""
            << detail::svg_num(h - mt - mb)
            << "\" fill=\"none\" stroke=\"#888888\"/>\n";
        svg << "<text x=\"" << detail::svg_num(ml) << "\" y=\""
            << detail::svg_num(h - mb + 14.0) << "\">"
            << detail::svg_num(xmin) << "</text>\n";
        svg << "<text x=\"" << detail::svg_num(w - mr) << "\" y=\""
            << detail::svg_num(h - mb + 14.0) << "\" text-anchor=\"end\">"
            << detail::svg_num(xmax) << "</text>\n";
        svg << "<text x=\"" << detail::svg_num(ml - 6.0) << "\" y=\""
            << detail::svg_num(h - mb) << "\" text-anchor=\"end\">"
            << detail::svg_num(ymin) << "</text>\n";
        svg << "<text x=\"" << detail::svg_num(ml - 6.0) << "\" y=\""
            << detail::svg_num(mt + 10.0) << "\" text-anchor=\"end\">"
            << detail::svg_num(ymax) << "</text>\n";
    }
    svg << "</svg>\n";
    return svg.str();
}

inline std::string heatmap_title(const AttributionResult& res) {
    std::ostringstream os;
    os << "s=" << detail::svg_num(res.score)
       << "  f(a,rb)=" << detail::svg_num(res.ref_sim_a)
       << "  f(b,ra)=" << detail::svg_num(res.ref_sim_b)
       << "  f(ra,rb)=" << detail::svg_num(res.ref_term)
       << "  err=" << detail::svg_num(res.attribution_error) << "  (" <<
        to_string(res.mode) << ", layer " << res.layer_index << ", N="
       << res.steps << ")";
    return os.str();
}

inline void write_text_file(const std::string& path,
                            const std::string& content) {
    std::ofstream out(path, std::ios::trunc | std::ios::binary);
    if (!out) throw IoError("cannot write: " + path);
    out << content;
    if (!out) throw IoError("short write: " + path);
}

}  // namespace ijat
