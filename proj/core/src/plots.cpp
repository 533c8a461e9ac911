#include "amoc/plots.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "amoc/common.hpp"

namespace amoc {

namespace {

constexpr double kWidth = 640.0;
constexpr double kHeight = 420.0;
constexpr double kLeft = 64.0;
constexpr double kRight = 610.0;
constexpr double kTop = 28.0;
constexpr double kBottom = 380.0;

const char* const kPalette[10] = {
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
};

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.3f", v);
    return buf;
}

struct Range {
    double lo = 0.0;
    double hi = 1.0;

    void expand(double v) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    // A flat span would divide by zero when mapped to pixels.
    void pad_if_flat() {
        if (hi - lo < 1e-12) {
            lo -= 1.0;
            hi += 1.0;
        }
    }
    double to_x(double v) const { return kLeft + (v - lo) / (hi - lo) * (kRight - kLeft); }
    double to_y(double v) const { return kBottom - (v - lo) / (hi - lo) * (kBottom - kTop); }
};

std::string escape_text(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            default: out += c; break;
        }
    }
    return out;
}

void open_svg(std::ostringstream& o) {
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(kWidth)
      << "\" height=\"" << fmt(kHeight) << "\" viewBox=\"0 0 " << fmt(kWidth) << ' '
      << fmt(kHeight) << "\">\n";
    o << "<rect x=\"0\" y=\"0\" width=\"" << fmt(kWidth) << "\" height=\"" << fmt(kHeight)
      << "\" fill=\"#ffffff\"/>\n";
}

void axes(std::ostringstream& o, const Range& xr, const Range& yr,
          const std::string& xlabel, const std::string& ylabel) {
    o << "<line x1=\"" << fmt(kLeft) << "\" y1=\"" << fmt(kBottom) << "\" x2=\"" << fmt(kRight)
      << "\" y2=\"" << fmt(kBottom) << "\" stroke=\"#333333\" stroke-width=\"1\"/>\n";
    o << "<line x1=\"" << fmt(kLeft) << "\" y1=\"" << fmt(kTop) << "\" x2=\"" << fmt(kLeft)
      << "\" y2=\"" << fmt(kBottom) << "\" stroke=\"#333333\" stroke-width=\"1\"/>\n";
    o << "<text x=\"" << fmt(kLeft) << "\" y=\"" << fmt(kBottom + 18.0)
      << "\" font-family=\"monospace\" font-size=\"11\">" << fmt(xr.lo) << "</text>\n";
    o << "<text x=\"" << fmt(kRight - 40.0) << "\" y=\"" << fmt(kBottom + 18.0)
      << "\" font-family=\"monospace\" font-size=\"11\">" << fmt(xr.hi) << "</text>\n";
    o << "<text x=\"" << fmt(8.0) << "\" y=\"" << fmt(kBottom)
      << "\" font-family=\"monospace\" font-size=\"11\">" << fmt(yr.lo) << "</text>\n";
    o << "<text x=\"" << fmt(8.0) << "\" y=\"" << fmt(kTop + 4.0)
      << "\" font-family=\"monospace\" font-size=\"11\">" << fmt(yr.hi) << "</text>\n";
    o << "<text x=\"" << fmt((kLeft + kRight) / 2.0 - 30.0) << "\" y=\"" << fmt(kHeight - 8.0)
      << "\" font-family=\"monospace\" font-size=\"12\">" << escape_text(xlabel) << "</text>\n";
    o << "<text x=\"" << fmt(10.0) << "\" y=\"" << fmt(16.0)
      << "\" font-family=\"monospace\" font-size=\"12\">" << escape_text(ylabel) << "</text>\n";
}

void legend(std::ostringstream& o, const std::vector<std::string>& names) {
    for (size_t i = 0; i < names.size(); ++i) {
        double y = kTop + 14.0 * static_cast<double>(i);
        o << "<rect x=\"" << fmt(kRight - 150.0) << "\" y=\"" << fmt(y)
          << "\" width=\"10\" height=\"10\" fill=\"" << kPalette[i % 10] << "\"/>\n";
        o << "<text x=\"" << fmt(kRight - 136.0) << "\" y=\"" << fmt(y + 9.0)
          << "\" font-family=\"monospace\" font-size=\"11\">" << escape_text(names[i])
          << "</text>\n";
    }
}

void polyline(std::ostringstream& o, const std::vector<std::pair<double, double>>& pts,
              const Range& xr, const Range& yr, const char* color) {
    o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (size_t i = 0; i < pts.size(); ++i) {
        if (i) o << ' ';
        o << fmt(xr.to_x(pts[i].first)) << ',' << fmt(yr.to_y(pts[i].second));
    }
    o << "\"/>\n";
}

}  // namespace

std::string svg_eps_curve(const std::vector<std::vector<std::pair<double, double>>>& curves,
                          const std::vector<std::string>& names) {
    check_arg(!curves.empty(), "svg_eps_curve: no curves");
    check_arg(names.size() == curves.size(), "svg_eps_curve: names/curves size mismatch");
    Range xr{1e300, -1e300};
    for (const auto& c : curves) {
        check_arg(!c.empty(), "svg_eps_curve: empty curve");
        for (const auto& p : c) xr.expand(p.first);
    }
    xr.pad_if_flat();
    Range yr{0.0, 100.0};

    std::ostringstream o;
    open_svg(o);
    axes(o, xr, yr, "epsilon", "accuracy %");
    for (size_t i = 0; i < curves.size(); ++i) polyline(o, curves[i], xr, yr, kPalette[i % 10]);
    legend(o, names);
    o << "</svg>\n";
    return o.str();
}

std::string svg_loss_curves(const std::vector<std::vector<EpochMetrics>>& runs,
                            const std::vector<std::string>& names) {
    check_arg(!runs.empty(), "svg_loss_curves: no runs");
    check_arg(names.size() == runs.size(), "svg_loss_curves: names/runs size mismatch");
    Range xr{1e300, -1e300};
    Range yr{1e300, -1e300};
    for (const auto& r : runs) {
        check_arg(!r.empty(), "svg_loss_curves: empty run");
        for (const auto& m : r) {
            xr.expand(static_cast<double>(m.epoch));
            yr.expand(m.loss);
        }
    }
    xr.pad_if_flat();
    yr.pad_if_flat();

    std::ostringstream o;
    open_svg(o);
    axes(o, xr, yr, "epoch", "loss");
    for (size_t i = 0; i < runs.size(); ++i) {
        std::vector<std::pair<double, double>> pts;
        pts.reserve(runs[i].size());
        for (const auto& m : runs[i]) pts.emplace_back(static_cast<double>(m.epoch), m.loss);
        polyline(o, pts, xr, yr, kPalette[i % 10]);
    }
    legend(o, names);
    o << "</svg>\n";
    return o.str();
}

std::string svg_variant_bars(const std::vector<std::pair<std::string, double>>& bars) {
    check_arg(!bars.empty(), "svg_variant_bars: no bars");
    Range yr{0.0, 0.0};
    for (const auto& b : bars) yr.expand(b.second);
    if (yr.hi < 100.0) yr.hi = 100.0;  // bars are percentages in practice
    yr.pad_if_flat();

    std::ostringstream o;
    open_svg(o);
    Range xr{0.0, static_cast<double>(bars.size())};
    axes(o, xr, yr, "", "accuracy %");
    double slot = (kRight - kLeft) / static_cast<double>(bars.size());
    double bw = slot * 0.6;
    for (size_t i = 0; i < bars.size(); ++i) {
        double x = kLeft + slot * (static_cast<double>(i) + 0.2);
        double ytop = yr.to_y(bars[i].second);
        o << "<rect x=\"" << fmt(x) << "\" y=\"" << fmt(ytop) << "\" width=\"" << fmt(bw)
          << "\" height=\"" << fmt(kBottom - ytop) << "\" fill=\"" << kPalette[i % 10]
          << "\"/>\n";
        o << "<text x=\"" << fmt(x) << "\" y=\"" << fmt(kBottom + 18.0)
          << "\" font-family=\"monospace\" font-size=\"11\">" << escape_text(bars[i].first)
          << "</text>\n";
        o << "<text x=\"" << fmt(x) << "\" y=\"" << fmt(ytop - 4.0)
          << "\" font-family=\"monospace\" font-size=\"11\">" << fmt(bars[i].second)
          << "</text>\n";
    }
    o << "</svg>\n";
    return o.str();
}

std::string svg_embedding_scatter(const Tensor& xy, const std::vector<int>& labels) {
    check_arg(xy.rank() == 2 && xy.dim(1) == 2, "svg_embedding_scatter: want (N,2) points");
    check_arg(xy.dim(0) > 0, "svg_embedding_scatter: no points");
    check_arg(labels.size() == static_cast<size_t>(xy.dim(0)),
              "svg_embedding_scatter: labels size mismatch");
    Range xr{1e300, -1e300};
    Range yr{1e300, -1e300};
    int64_t n = xy.dim(0);
    for (int64_t i = 0; i < n; ++i) {
        xr.expand(xy.at2(i, 0));
        yr.expand(xy.at2(i, 1));
    }
    xr.pad_if_flat();
    yr.pad_if_flat();

    std::ostringstream o;
    open_svg(o);
    axes(o, xr, yr, "pc1", "pc2");
    for (int64_t i = 0; i < n; ++i) {
        int cls = labels[static_cast<size_t>(i)];
        check_arg(cls >= 0, "svg_embedding_scatter: negative label");
        o << "<circle cx=\"" << fmt(xr.to_x(xy.at2(i, 0))) << "\" cy=\""
          << fmt(yr.to_y(xy.at2(i, 1))) << "\" r=\"2\" fill=\"" << kPalette[cls % 10]
          << "\"/>\n";
    }
    o << "</svg>\n";
    return o.str();
}

}  // namespace amoc
