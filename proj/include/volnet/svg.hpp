#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "volnet/explain.hpp"

namespace volnet::svg {

struct Line {
  std::string label;
  std::vector<double> values;
};

struct Panel {
  std::string title;
  std::vector<Line> lines;
};

inline std::string escape(std::string_view s) {
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

inline constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                           "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

/// Side-by-side line charts sharing the y range [y_min, y_max].
inline std::string line_panels(std::string_view title, const std::vector<Panel>& panels, double y_min = 0.0,
                               double y_max = 1.0) {
  const double pw = 360, ph = 240, ml = 40, mt = 50, gap = 30, legend = 16;
  std::size_t max_lines = 0;
  for (const auto& p : panels) max_lines = std::max(max_lines, p.lines.size());
  const double width = ml + static_cast<double>(panels.size()) * (pw + gap);
  const double height = mt + ph + 40 + legend * static_cast<double>(max_lines);
  std::string out = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0f}\" height=\"{:.0f}\" font-family=\"sans-serif\" "
      "font-size=\"11\">\n<text x=\"{:.0f}\" y=\"20\" font-size=\"14\">{}</text>\n",
      width, height, ml, escape(title));
  const double span = y_max > y_min ? y_max - y_min : 1.0;
  for (std::size_t p = 0; p < panels.size(); ++p) {
    const double x0 = ml + static_cast<double>(p) * (pw + gap);
    out += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\">{}</text>\n", x0, mt - 8, escape(panels[p].title));
    out += fmt::format("<rect x=\"{:.1f}\" y=\"{:.1f}\" width=\"{:.1f}\" height=\"{:.1f}\" fill=\"none\" "
                       "stroke=\"#444\"/>\n",
                       x0, mt, pw, ph);
    out += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"end\">{:.2f}</text>\n", x0 - 4, mt + 4, y_max);
    out += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"end\">{:.2f}</text>\n", x0 - 4, mt + ph, y_min);
    for (std::size_t l = 0; l < panels[p].lines.size(); ++l) {
      const auto& line = panels[p].lines[l];
      const char* color = kPalette[l % std::size(kPalette)];
      std::string pts;
      const double n = static_cast<double>(std::max<std::size_t>(line.values.size(), 2) - 1);
      for (std::size_t i = 0; i < line.values.size(); ++i) {
        const double v = std::clamp(line.values[i], y_min, y_max);
        pts += fmt::format("{}{:.1f},{:.1f}", i ? " " : "", x0 + pw * static_cast<double>(i) / n,
                           mt + ph * (1.0 - (v - y_min) / span));
      }
      out += fmt::format("<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"2\" points=\"{}\"/>\n", color, pts);
      const double ly = mt + ph + 30 + legend * static_cast<double>(l);
      out += fmt::format("<rect x=\"{:.1f}\" y=\"{:.1f}\" width=\"10\" height=\"10\" fill=\"{}\"/>\n", x0,
                         ly - 9, color);
      out += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\">{}</text>\n", x0 + 14, ly, escape(line.label));
    }
  }
  return out + "</svg>\n";
}

/// Horizontal bars of mean |phi| in rank order.
inline std::string importance_bars(std::string_view title, const std::vector<Importance>& ranking) {
  const double ml = 190, bar_w = 320, row = 20, mt = 40;
  double top = 0.0;
  for (const auto& r : ranking) top = std::max(top, r.mean_abs_phi);
  if (top <= 0.0) top = 1.0;
  std::string out = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0f}\" height=\"{:.0f}\" font-family=\"sans-serif\" "
      "font-size=\"11\">\n<text x=\"10\" y=\"20\" font-size=\"14\">{}</text>\n",
      ml + bar_w + 90, mt + row * static_cast<double>(ranking.size()) + 10, escape(title));
  for (std::size_t i = 0; i < ranking.size(); ++i) {
    const double y = mt + row * static_cast<double>(i);
    const double w = bar_w * ranking[i].mean_abs_phi / top;
    out += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"end\">{}</text>\n", ml - 6, y + 13,
                       escape(ranking[i].feature));
    out += fmt::format("<rect x=\"{:.1f}\" y=\"{:.1f}\" width=\"{:.1f}\" height=\"{:.1f}\" fill=\"#1f77b4\"/>\n", ml,
                       y + 3, w, row - 6);
    out += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\">{:.4f}</text>\n", ml + w + 4, y + 13,
                       ranking[i].mean_abs_phi);
  }
  return out + "</svg>\n";
}

}  // namespace volnet::svg
