#pragma once

// Minimal SVG chart of a sweep: mean accuracy line plus min/max whiskers and an IQR box per
// fault rate. Grid points are spaced evenly on the x axis.

#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "ftclip/resilience.hpp"

namespace ftclip {

struct SweepSeries {
  std::string label;
  const SweepResult* sweep = nullptr;
};

inline void write_sweep_svg(std::ostream& os, const std::vector<SweepSeries>& series, const std::string& title) {
  constexpr double W = 640, H = 400, left = 60, right = 20, top = 40, bottom = 60;
  static const char* colors[] = {"#d62728", "#1f77b4", "#2ca02c", "#9467bd"};
  const double pw = W - left - right, ph = H - top - bottom;
  char buf[256];
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << W / 2 << "\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">"
     << title << "</text>\n";
  std::snprintf(buf, sizeof buf,
                "<line x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\" stroke=\"black\"/>\n"
                "<line x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\" stroke=\"black\"/>\n",
                left, top, left, top + ph, left, top + ph, left + pw, top + ph);
  os << buf;
  for (int k = 0; k <= 4; ++k) {
    const double y = top + ph * (1.0 - k / 4.0);
    std::snprintf(buf, sizeof buf,
                  "<text x=\"%g\" y=\"%g\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">%d%%</text>\n",
                  left - 5, y + 3, k * 25);
    os << buf;
  }
  if (series.empty() || !series.front().sweep) {
    os << "</svg>\n";
    return;
  }
  const auto& rates = series.front().sweep->rates;
  const std::size_t n = rates.size();
  auto xpos = [&](std::size_t i) { return left + pw * (n > 1 ? static_cast<double>(i) / static_cast<double>(n - 1) : 0.5); };
  auto ypos = [&](double acc) { return top + ph * (1.0 - acc); };
  for (std::size_t i = 0; i < n; ++i) {
    std::snprintf(buf, sizeof buf,
                  "<text x=\"%g\" y=\"%g\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">%s</text>\n",
                  xpos(i), top + ph + 15, format_rate(rates[i]).c_str());
    os << buf;
  }
  for (std::size_t s = 0; s < series.size(); ++s) {
    const auto& sw = *series[s].sweep;
    const char* color = colors[s % 4];
    const double off = (static_cast<double>(s) - 0.5 * static_cast<double>(series.size() - 1)) * 8.0;
    std::string path;
    for (std::size_t i = 0; i < sw.summary.size() && i < n; ++i) {
      const auto& m = sw.summary[i];
      const double x = xpos(i) + off;
      std::snprintf(buf, sizeof buf,
                    "<line x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\" stroke=\"%s\"/>\n"
                    "<rect x=\"%g\" y=\"%g\" width=\"6\" height=\"%g\" fill=\"none\" stroke=\"%s\"/>\n",
                    x, ypos(m.max), x, ypos(m.min), color, x - 3, ypos(m.q3), ypos(m.q1) - ypos(m.q3), color);
      os << buf;
      std::snprintf(buf, sizeof buf, "%s%g,%g", path.empty() ? "" : " ", x, ypos(m.mean));
      path += buf;
    }
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"" << path << "\"/>\n";
    std::snprintf(buf, sizeof buf,
                  "<text x=\"%g\" y=\"%g\" font-family=\"sans-serif\" font-size=\"11\" fill=\"%s\">%s</text>\n",
                  left + 10, top + 15 + 14.0 * static_cast<double>(s), color, series[s].label.c_str());
    os << buf;
  }
  std::snprintf(buf, sizeof buf,
                "<text x=\"%g\" y=\"%g\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">fault rate</text>\n",
                left + pw / 2, H - 15);
  os << buf << "</svg>\n";
}

}  // namespace ftclip
