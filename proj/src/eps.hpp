#pragma once

#include <string>
#include <utility>
#include <vector>

#include "value.hpp"

namespace kfarm {

// A joined 2-D point plot with axis labels.
struct PlotSpec {
    std::vector<std::pair<double, double>> points;
    bool joined = true;
    std::string xlabel;
    std::string ylabel;
};

// Minimal deterministic EPS document. The data polyline is the only place
// that uses the `lineto` operator (axes are drawn with `rlineto`), so a
// joined plot of N points contains exactly N-1 `lineto` tokens.
std::string render_eps(const PlotSpec& spec);

// Figure values are tagged lists: {"plot", points, xlabel, ylabel}.
Value plot_to_value(const PlotSpec& spec);
PlotSpec plot_from_value(const Value& v);
bool is_plot_value(const Value& v);

} // namespace kfarm
