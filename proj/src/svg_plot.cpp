#include "cachediff/svg_plot.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace cachediff {

namespace {

constexpr std::array<const char*, 8> kPalette = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                                 "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string tick(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

struct Range {
    double lo = 0.0;
    double hi = 1.0;

    void widen() {
        if (hi > lo) return;
        const double pad = lo == 0.0 ? 0.5 : std::abs(lo) * 0.5;
        lo -= pad;
        hi += pad;
    }
    double unit(double v) const { return (v - lo) / (hi - lo); }
};

class Canvas {
public:
    Canvas(const PlotStyle& style, const std::string& title) : s_(style) {
        os_ << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << s_.width << "\" height=\"" << s_.height
            << "\" viewBox=\"0 0 " << s_.width << ' ' << s_.height << "\" data-schema-version=\"" << kSchemaVersion
            << "\">\n";
        os_ << "<rect width=\"" << s_.width << "\" height=\"" << s_.height << "\" fill=\"white\"/>\n";
        text(s_.width / 2.0, s_.margin / 2.0, title, "middle", 14);
    }

    double left() const { return s_.margin; }
    double right() const { return s_.width - s_.margin; }
    double top() const { return s_.margin; }
    double bottom() const { return s_.height - s_.margin; }

    void axes(const std::string& x_label, const std::string& y_label) {
        os_ << "<g stroke=\"black\" stroke-width=\"1\">\n";
        os_ << "<line x1=\"" << fmt(left()) << "\" y1=\"" << fmt(bottom()) << "\" x2=\"" << fmt(right()) << "\" y2=\""
            << fmt(bottom()) << "\"/>\n";
        os_ << "<line x1=\"" << fmt(left()) << "\" y1=\"" << fmt(top()) << "\" x2=\"" << fmt(left()) << "\" y2=\""
            << fmt(bottom()) << "\"/>\n";
        os_ << "</g>\n";
        text((left() + right()) / 2.0, s_.height - 12.0, x_label, "middle", 12);
        os_ << "<text x=\"16\" y=\"" << fmt((top() + bottom()) / 2.0)
            << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" transform=\"rotate(-90 16 "
            << fmt((top() + bottom()) / 2.0) << ")\">" << escape(y_label) << "</text>\n";
    }

    void ticks(const Range& x, const Range& y, int n = 4) {
        for (int i = 0; i <= n; ++i) {
            const double f = static_cast<double>(i) / n;
            const double px = left() + f * (right() - left());
            const double py = bottom() - f * (bottom() - top());
            text(px, bottom() + 16.0, tick(x.lo + f * (x.hi - x.lo)), "middle", 10);
            text(left() - 6.0, py + 3.0, tick(y.lo + f * (y.hi - y.lo)), "end", 10);
        }
    }

    void y_ticks(const Range& y, int n = 4) {
        for (int i = 0; i <= n; ++i) {
            const double f = static_cast<double>(i) / n;
            text(left() - 6.0, bottom() - f * (bottom() - top()) + 3.0, tick(y.lo + f * (y.hi - y.lo)), "end", 10);
        }
    }

    void text(double x, double y, const std::string& t, const char* anchor, int size) {
        os_ << "<text x=\"" << fmt(x) << "\" y=\"" << fmt(y) << "\" text-anchor=\"" << anchor
            << "\" font-family=\"sans-serif\" font-size=\"" << size << "\">" << escape(t) << "</text>\n";
    }

    void no_data() { text((left() + right()) / 2.0, (top() + bottom()) / 2.0, "no data", "middle", 14); }

    std::ostringstream& raw() { return os_; }

    std::string finish() {
        os_ << "</svg>\n";
        return os_.str();
    }

private:
    PlotStyle s_;
    std::ostringstream os_;
};

}  // namespace

std::string line_chart(const std::string& title, const std::string& x_label, const std::string& y_label,
                       const std::vector<Series>& series, const PlotStyle& style) {
    std::vector<Series> clean;
    for (const auto& s : series) {
        Series c{s.name, {}};
        for (const auto& p : s.points) {
            if (std::isfinite(p.first) && std::isfinite(p.second)) c.points.push_back(p);
        }
        if (!c.points.empty()) clean.push_back(std::move(c));
    }

    Canvas canvas(style, title);
    canvas.axes(x_label, y_label);
    if (clean.empty()) {
        canvas.no_data();
        return canvas.finish();
    }

    Range x{clean[0].points[0].first, clean[0].points[0].first};
    Range y{clean[0].points[0].second, clean[0].points[0].second};
    for (const auto& s : clean) {
        for (const auto& [px, py] : s.points) {
            x.lo = std::min(x.lo, px);
            x.hi = std::max(x.hi, px);
            y.lo = std::min(y.lo, py);
            y.hi = std::max(y.hi, py);
        }
    }
    x.widen();
    y.widen();
    canvas.ticks(x, y);

    auto& os = canvas.raw();
    for (std::size_t i = 0; i < clean.size(); ++i) {
        const char* color = kPalette[i % kPalette.size()];
        os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t k = 0; k < clean[i].points.size(); ++k) {
            const auto& [px, py] = clean[i].points[k];
            const double sx = canvas.left() + x.unit(px) * (canvas.right() - canvas.left());
            const double sy = canvas.bottom() - y.unit(py) * (canvas.bottom() - canvas.top());
            os << (k ? " " : "") << fmt(sx) << ',' << fmt(sy);
        }
        os << "\"/>\n";
        const double ly = canvas.top() + 14.0 * static_cast<double>(i);
        os << "<line x1=\"" << fmt(canvas.right() - 110.0) << "\" y1=\"" << fmt(ly) << "\" x2=\""
           << fmt(canvas.right() - 94.0) << "\" y2=\"" << fmt(ly) << "\" stroke=\"" << color
           << "\" stroke-width=\"2\"/>\n";
        canvas.text(canvas.right() - 90.0, ly + 4.0, clean[i].name, "start", 10);
    }
    return canvas.finish();
}

std::string bar_chart(const std::string& title, const std::string& y_label, const std::vector<Bar>& bars,
                      const PlotStyle& style) {
    std::vector<Bar> clean;
    for (const auto& b : bars) {
        if (std::isfinite(b.value)) clean.push_back(b);
    }
    Canvas canvas(style, title);
    canvas.axes("", y_label);
    if (clean.empty()) {
        canvas.no_data();
        return canvas.finish();
    }
    Range y{0.0, 0.0};
    for (const auto& b : clean) {
        y.lo = std::min(y.lo, b.value);
        y.hi = std::max(y.hi, b.value);
    }
    y.widen();
    canvas.y_ticks(y);

    auto& os = canvas.raw();
    const double slot = (canvas.right() - canvas.left()) / static_cast<double>(clean.size());
    const double zero = canvas.bottom() - y.unit(0.0) * (canvas.bottom() - canvas.top());
    for (std::size_t i = 0; i < clean.size(); ++i) {
        const double top = canvas.bottom() - y.unit(clean[i].value) * (canvas.bottom() - canvas.top());
        const double x0 = canvas.left() + slot * (static_cast<double>(i) + 0.15);
        os << "<rect x=\"" << fmt(x0) << "\" y=\"" << fmt(std::min(top, zero)) << "\" width=\"" << fmt(slot * 0.7)
           << "\" height=\"" << fmt(std::abs(zero - top)) << "\" fill=\"" << kPalette[i % kPalette.size()] << "\"/>\n";
        canvas.text(x0 + slot * 0.35, canvas.bottom() + 16.0, clean[i].label, "middle", 10);
    }
    return canvas.finish();
}

std::string feature_mse_plot(const RunReport& report) {
    std::vector<Series> series;
    for (const auto& e : report.entries) {
        if (e.strategy == Strategy::no_cache) continue;
        Series s{e.label, {}};
        if (e.sweep_value) s.name += "@" + tick(*e.sweep_value);
        for (std::size_t k = 0; k < e.feature_mse.size(); ++k) s.points.emplace_back(static_cast<double>(k), e.feature_mse[k]);
        series.push_back(std::move(s));
    }
    return line_chart("Feature MSE vs no_cache", "sampling step", "feature MSE", series);
}

std::string bias_trend_plot(const RunReport& report) {
    Series low{"low_energy", {}};
    Series high{"high_energy", {}};
    for (const auto& e : report.reference_bias_trend) {
        low.points.emplace_back(static_cast<double>(e.t), e.low_energy);
        high.points.emplace_back(static_cast<double>(e.t), e.high_energy);
    }
    return line_chart("CFG bias energy by band", "diffusion timestep t", "energy", {low, high});
}

std::string cost_plot(const RunReport& report) {
    std::vector<Bar> bars;
    for (const auto& e : report.entries) {
        std::string label = e.label;
        if (e.sweep_value) label += "@" + tick(*e.sweep_value);
        bars.push_back({label, e.mac_ratio()});
    }
    return bar_chart("MAC ratio vs no_cache", "MAC ratio", bars);
}

}  // namespace cachediff
