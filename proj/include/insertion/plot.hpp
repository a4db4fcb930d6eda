#pragma once

#include "insertion/persist.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace insertion {

/// Per-episode summary of final distance across seeds.
struct CurveData {
  std::vector<int> episode;
  std::vector<double> mean;
  std::vector<double> lo;  // min over seeds
  std::vector<double> hi;  // max over seeds
  std::vector<std::vector<double>> series;  // one per seed, aligned to `episode`
};

/// Aligns runs by episode number; an episode enters the curve only if every
/// run logged it. Throws Error if there is nothing to plot.
CurveData curve_data(const std::vector<std::vector<MetricsRow>>& runs);

/// SVG line chart of the mean with a shaded min/max band, in millimetres.
std::string learning_curve_svg(const CurveData& data, const std::string& title);

struct Bar {
  std::string label;
  double value = 0.0;  // in [0, 1]
};

/// Horizontal success-rate bar chart.
std::string bar_chart_svg(const std::vector<Bar>& bars, const std::string& title);

/// Plot geometry shared by the charts, exposed for tests.
struct PlotFrame {
  double width = 640, height = 400;
  double left = 70, right = 20, top = 40, bottom = 50;
  double x_min = 0, x_max = 1, y_min = 0, y_max = 1;

  double px(double x) const;
  double py(double y) const;
};
PlotFrame curve_frame(const CurveData& data);

void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace insertion
