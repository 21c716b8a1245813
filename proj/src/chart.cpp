#include "darthkit/chart.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "darthkit/errors.hpp"

namespace darthkit {

namespace {

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

std::string num(double v, int decimals = 1) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

}  // namespace

std::string bar_chart_svg(const std::string& title, const std::vector<std::string>& labels,
                          const std::vector<double>& values) {
  if (labels.size() != values.size()) throw ShapeError("bar_chart_svg: labels and values differ in length");
  const double bar_w = 60.0, gap = 30.0, left = 50.0, top = 40.0, plot_h = 200.0;
  const double width = left + gap + static_cast<double>(labels.size()) * (bar_w + gap);
  const double height = top + plot_h + 50.0;

  // Axis spans zero and every finite value; MOTA can be negative.
  double lo = 0.0, hi = 0.0;
  for (double v : values)
    if (std::isfinite(v)) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  if (hi - lo < 1e-9) hi = lo + 1.0;
  auto y_of = [&](double v) { return top + plot_h * (hi - v) / (hi - lo); };
  const double y0 = y_of(0.0);

  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(width, 0) + "\" height=\"" +
                   num(height, 0) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s += "<text x=\"" + num(width / 2, 1) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" + escape(title) +
       "</text>\n";
  s += "<line x1=\"" + num(left, 1) + "\" y1=\"" + num(y0, 1) + "\" x2=\"" + num(width - 10, 1) + "\" y2=\"" +
       num(y0, 1) + "\" stroke=\"black\"/>\n";
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double x = left + gap + static_cast<double>(i) * (bar_w + gap);
    const double cx = x + bar_w / 2;
    const double v = values[i];
    if (std::isfinite(v)) {
      const double y = std::min(y_of(v), y0);
      const double h = std::abs(y_of(v) - y0);
      s += "<rect x=\"" + num(x, 1) + "\" y=\"" + num(y, 1) + "\" width=\"" + num(bar_w, 1) + "\" height=\"" +
           num(h, 1) + "\" fill=\"" + (v < 0 ? "#c0504d" : "#4f81bd") + "\"/>\n";
      const double ty = v < 0 ? y + h + 14 : y - 4;
      s += "<text x=\"" + num(cx, 1) + "\" y=\"" + num(ty, 1) + "\" text-anchor=\"middle\">" + num(v) + "</text>\n";
    } else {
      s += "<text x=\"" + num(cx, 1) + "\" y=\"" + num(y0 - 4, 1) + "\" text-anchor=\"middle\">n/a</text>\n";
    }
    s += "<text x=\"" + num(cx, 1) + "\" y=\"" + num(top + plot_h + 30, 1) + "\" text-anchor=\"middle\">" +
         escape(labels[i]) + "</text>\n";
  }
  s += "</svg>\n";
  return s;
}

}  // namespace darthkit
