#pragma once

#include <optional>
#include <string>
#include <vector>

namespace repdisp {

enum class PlotKind { scatter, line };

PlotKind parse_plot_kind(const std::string& s);

struct PlotSeries {
  std::string x_label;
  std::string y_label;
  std::vector<double> x;
  std::vector<double> y;
  std::optional<std::vector<double>> err;  // symmetric error bars on y
};

/// Renders a self-contained SVG document. Every point becomes one
/// `<circle class="marker">`; with error bars each point also gets one
/// `<path class="whisker">`. Output depends only on the input.
std::string render_svg(const PlotSeries& series, PlotKind kind, const std::string& title = {});

}  // namespace repdisp
