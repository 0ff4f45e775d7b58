#pragma once

#include <string>
#include <utility>
#include <vector>

namespace cyclelife::svg {

struct Series {
  std::string label;
  std::vector<std::pair<double, double>> points;
};

enum class ChartKind { scatter, line };

// Renders a fixed-size (720x480) chart with auto-scaled axes and nice tick
// values. Output is a pure function of the inputs: identical data renders
// byte-identical SVG. Throws if no series contains a point.
std::string render_chart(ChartKind kind, const std::vector<Series>& series,
                         const std::string& title, const std::string& x_label,
                         const std::string& y_label);

}  // namespace cyclelife::svg
