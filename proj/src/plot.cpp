#include "insertion/plot.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>

namespace insertion {

CurveData curve_data(const std::vector<std::vector<MetricsRow>>& runs) {
  std::vector<std::map<int, double>> by_episode;
  for (const auto& run : runs) {
    std::map<int, double> m;
    for (const auto& row : run) m[row.episode] = row.final_distance_m;
    if (!m.empty()) by_episode.push_back(std::move(m));
  }
  if (by_episode.empty()) throw Error("empty plot: no metrics rows");

  CurveData out;
  out.series.resize(by_episode.size());
  for (const auto& [ep, _] : by_episode.front()) {
    std::vector<double> values;
    for (const auto& m : by_episode) {
      const auto it = m.find(ep);
      if (it == m.end()) break;
      values.push_back(it->second);
    }
    if (values.size() != by_episode.size()) continue;
    out.episode.push_back(ep);
    double sum = 0.0;
    for (std::size_t s = 0; s < values.size(); ++s) {
      out.series[s].push_back(values[s]);
      sum += values[s];
    }
    out.mean.push_back(sum / static_cast<double>(values.size()));
    out.lo.push_back(*std::min_element(values.begin(), values.end()));
    out.hi.push_back(*std::max_element(values.begin(), values.end()));
  }
  if (out.episode.empty()) throw Error("empty plot: runs share no episodes");
  return out;
}

double PlotFrame::px(double x) const {
  const double span = x_max > x_min ? x_max - x_min : 1.0;
  return left + (x - x_min) / span * (width - left - right);
}

double PlotFrame::py(double y) const {
  const double span = y_max > y_min ? y_max - y_min : 1.0;
  return height - bottom - (y - y_min) / span * (height - top - bottom);
}

PlotFrame curve_frame(const CurveData& data) {
  PlotFrame f;
  f.x_min = data.episode.front();
  f.x_max = std::max(data.episode.back(), data.episode.front() + 1);
  f.y_min = 0.0;
  f.y_max = 1e3 * *std::max_element(data.hi.begin(), data.hi.end());
  if (!(f.y_max > 0.0)) f.y_max = 1.0;
  return f;
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string svg_open(const PlotFrame& f, const std::string& title) {
  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt(f.width) + "\" height=\"" +
                  fmt(f.height) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s += "<text x=\"" + fmt(f.width / 2) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" +
       escape(title) + "</text>\n";
  return s;
}

std::string axes(const PlotFrame& f, const std::string& xlabel, const std::string& ylabel) {
  std::string s;
  const double x0 = f.left, x1 = f.width - f.right, y0 = f.height - f.bottom, y1 = f.top;
  s += "<line x1=\"" + fmt(x0) + "\" y1=\"" + fmt(y0) + "\" x2=\"" + fmt(x1) + "\" y2=\"" + fmt(y0) +
       "\" stroke=\"black\"/>\n";
  s += "<line x1=\"" + fmt(x0) + "\" y1=\"" + fmt(y0) + "\" x2=\"" + fmt(x0) + "\" y2=\"" + fmt(y1) +
       "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = f.x_min + (f.x_max - f.x_min) * i / 4.0;
    const double yv = f.y_min + (f.y_max - f.y_min) * i / 4.0;
    char xl[32], yl[32];
    std::snprintf(xl, sizeof xl, "%.0f", xv);
    std::snprintf(yl, sizeof yl, "%.3g", yv);
    s += "<text x=\"" + fmt(f.px(xv)) + "\" y=\"" + fmt(y0 + 16) + "\" text-anchor=\"middle\">" + xl + "</text>\n";
    s += "<text x=\"" + fmt(x0 - 6) + "\" y=\"" + fmt(f.py(yv) + 4) + "\" text-anchor=\"end\">" + yl + "</text>\n";
  }
  s += "<text x=\"" + fmt((x0 + x1) / 2) + "\" y=\"" + fmt(f.height - 12) + "\" text-anchor=\"middle\">" +
       escape(xlabel) + "</text>\n";
  s += "<text transform=\"translate(16," + fmt((y0 + y1) / 2) + ") rotate(-90)\" text-anchor=\"middle\">" +
       escape(ylabel) + "</text>\n";
  return s;
}

}  // namespace

std::string learning_curve_svg(const CurveData& data, const std::string& title) {
  if (data.episode.empty()) throw Error("empty plot: no points");
  const PlotFrame f = curve_frame(data);
  std::string s = svg_open(f, title);
  s += axes(f, "episode", "final distance (mm)");

  std::string band;
  for (std::size_t i = 0; i < data.episode.size(); ++i) {
    band += fmt(f.px(data.episode[i])) + "," + fmt(f.py(1e3 * data.hi[i])) + " ";
  }
  for (std::size_t i = data.episode.size(); i-- > 0;) {
    band += fmt(f.px(data.episode[i])) + "," + fmt(f.py(1e3 * data.lo[i])) + " ";
  }
  s += "<polygon class=\"band\" points=\"" + band + "\" fill=\"#4477aa\" fill-opacity=\"0.25\" stroke=\"none\"/>\n";

  std::string line;
  for (std::size_t i = 0; i < data.episode.size(); ++i) {
    line += fmt(f.px(data.episode[i])) + "," + fmt(f.py(1e3 * data.mean[i])) + " ";
  }
  s += "<polyline class=\"mean\" points=\"" + line + "\" fill=\"none\" stroke=\"#4477aa\" stroke-width=\"1.5\"/>\n";
  s += "</svg>\n";
  return s;
}

std::string bar_chart_svg(const std::vector<Bar>& bars, const std::string& title) {
  if (bars.empty()) throw Error("empty plot: no bars");
  PlotFrame f;
  f.left = 330;
  f.height = f.top + f.bottom + 22.0 * static_cast<double>(bars.size());
  std::string s = svg_open(f, title);
  const double x0 = f.left, x1 = f.width - f.right;
  const double y_axis = f.height - f.bottom;
  for (std::size_t i = 0; i < bars.size(); ++i) {
    const double y = f.top + 22.0 * static_cast<double>(i);
    const double v = std::clamp(bars[i].value, 0.0, 1.0);
    s += "<text x=\"" + fmt(x0 - 6) + "\" y=\"" + fmt(y + 15) + "\" text-anchor=\"end\">" + escape(bars[i].label) +
         "</text>\n";
    s += "<rect x=\"" + fmt(x0) + "\" y=\"" + fmt(y + 3) + "\" width=\"" + fmt(v * (x1 - x0)) +
         "\" height=\"16\" fill=\"#228833\"/>\n";
    char pct[16];
    std::snprintf(pct, sizeof pct, "%.0f%%", 100.0 * bars[i].value);
    s += "<text x=\"" + fmt(x0 + v * (x1 - x0) + 4) + "\" y=\"" + fmt(y + 15) + "\">" + pct + "</text>\n";
  }
  s += "<line x1=\"" + fmt(x0) + "\" y1=\"" + fmt(y_axis) + "\" x2=\"" + fmt(x1) + "\" y2=\"" + fmt(y_axis) +
       "\" stroke=\"black\"/>\n";
  s += "<text x=\"" + fmt((x0 + x1) / 2) + "\" y=\"" + fmt(f.height - 12) +
       "\" text-anchor=\"middle\">success rate</text>\n";
  s += "</svg>\n";
  return s;
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("failed writing " + path.string());
}

}  // namespace insertion
