#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "statmap/matrix.hpp"

namespace statmap {

/// Minimal self-contained SVG line/step/band plot writer. Deterministic
/// output: fixed formatting, no timestamps.
class SvgPlot {
  public:
    SvgPlot(std::string title, std::string x_label, std::string y_label)
        : title_(std::move(title)), x_label_(std::move(x_label)), y_label_(std::move(y_label)) {}

    void add_line(const Vector& xs, const Vector& ys, const std::string& color,
                  const std::string& label = "") {
        series_.push_back({xs, ys, color, label, false});
        extend_range(xs, ys);
    }

    /// Histogram drawn as a filled step outline over bin edges.
    void add_histogram(const Vector& edges, const Vector& counts, const std::string& color,
                       const std::string& label = "") {
        Vector xs, ys;
        for (std::size_t i = 0; i < counts.size(); ++i) {
            xs.push_back(edges[i]);
            ys.push_back(counts[i]);
            xs.push_back(edges[i + 1]);
            ys.push_back(counts[i]);
        }
        series_.push_back({xs, ys, color, label, true});
        extend_range(xs, ys);
        extend_range({edges.front(), edges.back()}, {0.0});
    }

    /// Shaded band (mean +- halfwidth), for permutation shadeplots.
    void add_band(const Vector& xs, const Vector& center, const Vector& halfwidth,
                  const std::string& color) {
        bands_.push_back({xs, center, halfwidth, color});
        Vector lo(center.size()), hi(center.size());
        for (std::size_t i = 0; i < center.size(); ++i) {
            lo[i] = center[i] - halfwidth[i];
            hi[i] = center[i] + halfwidth[i];
        }
        extend_range(xs, lo);
        extend_range(xs, hi);
    }

    void add_vline(double x, const std::string& color, const std::string& label = "") {
        vlines_.push_back({x, color, label});
        extend_range({x}, {});
    }

    void write(std::ostream& out) const {
        const double W = 640, H = 420, ml = 64, mr = 16, mt = 34, mb = 46;
        double x0 = xmin_, x1 = xmax_, y0 = ymin_, y1 = ymax_;
        if (!(x1 > x0)) x1 = x0 + 1.0;
        if (!(y1 > y0)) y1 = y0 + 1.0;
        const double xpad = 0.03 * (x1 - x0), ypad = 0.06 * (y1 - y0);
        x0 -= xpad;
        x1 += xpad;
        y0 -= ypad;
        y1 += ypad;
        auto px = [&](double x) { return ml + (x - x0) / (x1 - x0) * (W - ml - mr); };
        auto py = [&](double y) { return H - mb - (y - y0) / (y1 - y0) * (H - mt - mb); };

        out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
            << "\" viewBox=\"0 0 " << W << " " << H << "\">\n";
        out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
        out << "<text x=\"" << W / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">"
            << title_ << "</text>\n";

        for (const Band& b : bands_) {
            std::string pts;
            for (std::size_t i = 0; i < b.xs.size(); ++i)
                pts += fmt(px(b.xs[i])) + "," + fmt(py(b.center[i] + b.halfwidth[i])) + " ";
            for (std::size_t i = b.xs.size(); i-- > 0;)
                pts += fmt(px(b.xs[i])) + "," + fmt(py(b.center[i] - b.halfwidth[i])) + " ";
            out << "<polygon points=\"" << pts << "\" fill=\"" << b.color
                << "\" fill-opacity=\"0.25\" stroke=\"none\"/>\n";
        }

        // axes + ticks
        out << "<line x1=\"" << ml << "\" y1=\"" << H - mb << "\" x2=\"" << W - mr << "\" y2=\""
            << H - mb << "\" stroke=\"black\"/>\n";
        out << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\""
            << H - mb << "\" stroke=\"black\"/>\n";
        for (int i = 0; i <= 5; ++i) {
            const double fx = x0 + (x1 - x0) * i / 5.0;
            const double fy = y0 + (y1 - y0) * i / 5.0;
            out << "<line x1=\"" << fmt(px(fx)) << "\" y1=\"" << H - mb << "\" x2=\""
                << fmt(px(fx)) << "\" y2=\"" << H - mb + 4 << "\" stroke=\"black\"/>\n";
            out << "<text x=\"" << fmt(px(fx)) << "\" y=\"" << H - mb + 17
                << "\" text-anchor=\"middle\" font-size=\"10\">" << fmt(fx) << "</text>\n";
            out << "<line x1=\"" << ml - 4 << "\" y1=\"" << fmt(py(fy)) << "\" x2=\"" << ml
                << "\" y2=\"" << fmt(py(fy)) << "\" stroke=\"black\"/>\n";
            out << "<text x=\"" << ml - 7 << "\" y=\"" << fmt(py(fy) + 3)
                << "\" text-anchor=\"end\" font-size=\"10\">" << fmt(fy) << "</text>\n";
        }
        out << "<text x=\"" << (ml + W - mr) / 2 << "\" y=\"" << H - 10
            << "\" text-anchor=\"middle\" font-size=\"12\">" << x_label_ << "</text>\n";
        out << "<text x=\"14\" y=\"" << (mt + H - mb) / 2
            << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 14 "
            << (mt + H - mb) / 2 << ")\">" << y_label_ << "</text>\n";

        for (const VLine& v : vlines_) {
            out << "<line x1=\"" << fmt(px(v.x)) << "\" y1=\"" << mt << "\" x2=\""
                << fmt(px(v.x)) << "\" y2=\"" << H - mb << "\" stroke=\"" << v.color
                << "\" stroke-dasharray=\"5,3\"/>\n";
        }

        double ly = mt + 12;
        for (const Series& s : series_) {
            std::string pts;
            for (std::size_t i = 0; i < s.xs.size(); ++i)
                pts += fmt(px(s.xs[i])) + "," + fmt(py(s.ys[i])) + " ";
            out << "<polyline points=\"" << pts << "\" fill=\"none\" stroke=\"" << s.color
                << "\" stroke-width=\"1.5\"/>\n";
            if (!s.label.empty()) {
                out << "<line x1=\"" << W - mr - 130 << "\" y1=\"" << ly << "\" x2=\""
                    << W - mr - 110 << "\" y2=\"" << ly << "\" stroke=\"" << s.color
                    << "\" stroke-width=\"1.5\"/>\n";
                out << "<text x=\"" << W - mr - 105 << "\" y=\"" << ly + 3
                    << "\" font-size=\"11\">" << s.label << "</text>\n";
                ly += 16;
            }
        }
        for (const VLine& v : vlines_) {
            if (v.label.empty()) continue;
            out << "<text x=\"" << fmt(px(v.x) + 3) << "\" y=\"" << mt + 10
                << "\" font-size=\"10\" fill=\"" << v.color << "\">" << v.label << "</text>\n";
        }
        out << "</svg>\n";
    }

  private:
    struct Series {
        Vector xs, ys;
        std::string color, label;
        bool step = false;
    };
    struct Band {
        Vector xs, center, halfwidth;
        std::string color;
    };
    struct VLine {
        double x;
        std::string color, label;
    };

    static std::string fmt(double v) {
        char buf[40];
        std::snprintf(buf, sizeof(buf), "%.6g", v);
        return buf;
    }

    void extend_range(const Vector& xs, const Vector& ys) {
        for (double x : xs) {
            xmin_ = std::min(xmin_, x);
            xmax_ = std::max(xmax_, x);
        }
        for (double y : ys) {
            ymin_ = std::min(ymin_, y);
            ymax_ = std::max(ymax_, y);
        }
    }

    std::string title_, x_label_, y_label_;
    std::vector<Series> series_;
    std::vector<Band> bands_;
    std::vector<VLine> vlines_;
    double xmin_ = std::numeric_limits<double>::infinity();
    double xmax_ = -std::numeric_limits<double>::infinity();
    double ymin_ = std::numeric_limits<double>::infinity();
    double ymax_ = -std::numeric_limits<double>::infinity();
};

}  // namespace statmap
