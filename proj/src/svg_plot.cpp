#include "repdisp/svg_plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "repdisp/error.hpp"

namespace repdisp {
namespace {

constexpr double kWidth = 640;
constexpr double kHeight = 420;
constexpr double kLeft = 70;
constexpr double kRight = 20;
constexpr double kTop = 40;
constexpr double kBottom = 55;
constexpr int kTicks = 5;

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

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

struct Range {
  double lo;
  double hi;
};

Range padded(double lo, double hi) {
  if (lo == hi) {
    const double pad = lo == 0.0 ? 1.0 : std::abs(lo) * 0.1;
    return {lo - pad, hi + pad};
  }
  const double pad = (hi - lo) * 0.05;
  return {lo - pad, hi + pad};
}

}  // namespace

PlotKind parse_plot_kind(const std::string& s) {
  if (s == "scatter") return PlotKind::scatter;
  if (s == "line") return PlotKind::line;
  fail(Errc::invalid_argument, "unknown plot kind '" + s + "' (expected scatter or line)");
}

std::string render_svg(const PlotSeries& s, PlotKind kind, const std::string& title) {
  if (s.x.size() != s.y.size()) fail(Errc::mismatch, "plot x and y differ in length");
  if (s.err && s.err->size() != s.x.size()) fail(Errc::mismatch, "plot error column differs in length");
  if (s.x.empty()) fail(Errc::invalid_argument, "nothing to plot");

  double xlo = *std::min_element(s.x.begin(), s.x.end());
  double xhi = *std::max_element(s.x.begin(), s.x.end());
  double ylo = s.y.front(), yhi = s.y.front();
  for (std::size_t i = 0; i < s.y.size(); ++i) {
    const double e = s.err ? std::abs((*s.err)[i]) : 0.0;
    ylo = std::min(ylo, s.y[i] - e);
    yhi = std::max(yhi, s.y[i] + e);
  }
  const Range xr = padded(xlo, xhi);
  const Range yr = padded(ylo, yhi);
  const double pw = kWidth - kLeft - kRight;
  const double ph = kHeight - kTop - kBottom;
  auto px = [&](double v) { return kLeft + (v - xr.lo) / (xr.hi - xr.lo) * pw; };
  auto py = [&](double v) { return kTop + ph - (v - yr.lo) / (yr.hi - yr.lo) * ph; };

  std::string o;
  o += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  o += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kWidth) + "\" height=\"" +
       num(kHeight) + "\" viewBox=\"0 0 " + num(kWidth) + " " + num(kHeight) + "\">\n";
  o += "<rect x=\"0\" y=\"0\" width=\"" + num(kWidth) + "\" height=\"" + num(kHeight) +
       "\" fill=\"white\"/>\n";
  if (!title.empty()) {
    o += "<text class=\"title\" x=\"" + num(kWidth / 2) + "\" y=\"22\" text-anchor=\"middle\" "
         "font-family=\"sans-serif\" font-size=\"14\">" + escape(title) + "</text>\n";
  }

  // axes
  o += "<g class=\"axes\" stroke=\"black\" stroke-width=\"1\">\n";
  o += "<line x1=\"" + num(kLeft) + "\" y1=\"" + num(kTop + ph) + "\" x2=\"" + num(kLeft + pw) +
       "\" y2=\"" + num(kTop + ph) + "\"/>\n";
  o += "<line x1=\"" + num(kLeft) + "\" y1=\"" + num(kTop) + "\" x2=\"" + num(kLeft) + "\" y2=\"" +
       num(kTop + ph) + "\"/>\n";
  o += "</g>\n";
  o += "<g class=\"ticks\" font-family=\"sans-serif\" font-size=\"10\">\n";
  for (int t = 0; t <= kTicks; ++t) {
    const double fx = xr.lo + (xr.hi - xr.lo) * t / kTicks;
    const double fy = yr.lo + (yr.hi - yr.lo) * t / kTicks;
    o += "<text x=\"" + num(px(fx)) + "\" y=\"" + num(kTop + ph + 16) +
         "\" text-anchor=\"middle\">" + tick_label(fx) + "</text>\n";
    o += "<text x=\"" + num(kLeft - 6) + "\" y=\"" + num(py(fy) + 3) +
         "\" text-anchor=\"end\">" + tick_label(fy) + "</text>\n";
  }
  o += "</g>\n";
  o += "<text class=\"xlabel\" x=\"" + num(kLeft + pw / 2) + "\" y=\"" + num(kHeight - 12) +
       "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" +
       escape(s.x_label) + "</text>\n";
  o += "<text class=\"ylabel\" x=\"16\" y=\"" + num(kTop + ph / 2) +
       "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" transform=\"rotate(-90 16 " +
       num(kTop + ph / 2) + ")\">" + escape(s.y_label) + "</text>\n";

  if (kind == PlotKind::line && s.x.size() > 1) {
    std::vector<std::size_t> order(s.x.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return s.x[a] < s.x[b]; });
    o += "<polyline class=\"series\" fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"1.5\" points=\"";
    for (std::size_t k = 0; k < order.size(); ++k) {
      if (k) o += ' ';
      o += num(px(s.x[order[k]])) + "," + num(py(s.y[order[k]]));
    }
    o += "\"/>\n";
  }

  if (s.err) {
    o += "<g class=\"errorbars\" stroke=\"#555555\" stroke-width=\"1\" fill=\"none\">\n";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      const double e = std::abs((*s.err)[i]);
      const double x = px(s.x[i]);
      const double top = py(s.y[i] + e);
      const double bot = py(s.y[i] - e);
      o += "<path class=\"whisker\" d=\"M" + num(x) + "," + num(top) + " V" + num(bot) + " M" +
           num(x - 4) + "," + num(top) + " H" + num(x + 4) + " M" + num(x - 4) + "," + num(bot) +
           " H" + num(x + 4) + "\"/>\n";
    }
    o += "</g>\n";
  }

  o += "<g class=\"markers\" fill=\"#1f77b4\">\n";
  for (std::size_t i = 0; i < s.x.size(); ++i) {
    o += "<circle class=\"marker\" cx=\"" + num(px(s.x[i])) + "\" cy=\"" + num(py(s.y[i])) +
         "\" r=\"3.5\"/>\n";
  }
  o += "</g>\n</svg>\n";
  return o;
}

}  // namespace repdisp
