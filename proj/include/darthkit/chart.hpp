#pragma once

#include <string>
#include <vector>

namespace darthkit {

/// Standalone SVG bar chart, one bar per label. Non-finite values are drawn
/// as an empty slot marked "n/a". Output depends only on the inputs.
std::string bar_chart_svg(const std::string& title, const std::vector<std::string>& labels,
                          const std::vector<double>& values);

}  // namespace darthkit
