#pragma once

#include "cachediff/report.hpp"

#include <string>
#include <utility>
#include <vector>

namespace cachediff {

struct Series {
    std::string name;
    std::vector<std::pair<double, double>> points;
};

struct Bar {
    std::string label;
    double value = 0.0;
};

struct PlotStyle {
    int width = 640;
    int height = 400;
    int margin = 56;
};

// Self-contained SVG line chart. Non-finite points are dropped; when nothing
// is left the chart still has axes plus a "no data" label.
std::string line_chart(const std::string& title, const std::string& x_label, const std::string& y_label,
                       const std::vector<Series>& series, const PlotStyle& style = {});

std::string bar_chart(const std::string& title, const std::string& y_label, const std::vector<Bar>& bars,
                      const PlotStyle& style = {});

// Per-step feature MSE per strategy; bias low/high energy against t; and
// MAC ratio plus median-latency bars.
std::string feature_mse_plot(const RunReport& report);
std::string bias_trend_plot(const RunReport& report);
std::string cost_plot(const RunReport& report);

}  // namespace cachediff
