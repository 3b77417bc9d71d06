#include "eps.hpp"

#include <cmath>
#include <cstdio>

namespace kfarm {

namespace {

constexpr double kWidth = 360.0;
constexpr double kHeight = 234.0;
constexpr double kMargin = 0.10; // fraction of each dimension, both sides

std::string coord(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    return buf;
}

// PostScript string literal with the two supported escapes.
std::string ps_string(const std::string& s) {
    std::string out = "(";
    for (char c : s) {
        if (c == '(' || c == ')' || c == '\\')
            out += '\\';
        out += c;
    }
    out += ')';
    return out;
}

} // namespace

std::string render_eps(const PlotSpec& spec) {
    if (spec.points.empty())
        throw Error(Errc::bad_value, "render_eps: empty point list");
    double xmin = spec.points[0].first, xmax = xmin;
    double ymin = spec.points[0].second, ymax = ymin;
    for (const auto& [x, y] : spec.points) {
        if (!std::isfinite(x) || !std::isfinite(y))
            throw Error(Errc::bad_value, "render_eps: non-finite coordinate");
        xmin = std::min(xmin, x);
        xmax = std::max(xmax, x);
        ymin = std::min(ymin, y);
        ymax = std::max(ymax, y);
    }

    const double x0 = kWidth * kMargin, x1 = kWidth * (1.0 - kMargin);
    const double y0 = kHeight * kMargin, y1 = kHeight * (1.0 - kMargin);
    auto map_x = [&](double x) {
        if (xmax == xmin)
            return (x0 + x1) / 2.0; // degenerate range: centered
        return x0 + (x - xmin) / (xmax - xmin) * (x1 - x0);
    };
    auto map_y = [&](double y) {
        if (ymax == ymin)
            return (y0 + y1) / 2.0;
        return y0 + (y - ymin) / (ymax - ymin) * (y1 - y0);
    };

    std::string eps;
    eps += "%!PS-Adobe-3.0 EPSF-3.0\n";
    eps += "%%BoundingBox: 0 0 " + std::to_string(static_cast<int>(kWidth)) +
           " " + std::to_string(static_cast<int>(kHeight)) + "\n";
    eps += "%%Creator: kfarm\n";
    eps += "%%EndComments\n";
    eps += "/Helvetica findfont 10 scalefont setfont\n";

    // axes
    eps += "0.5 setlinewidth\n";
    eps += coord(x0) + " " + coord(y0) + " moveto " + coord(x1 - x0) +
           " 0 rlineto stroke\n";
    eps += coord(x0) + " " + coord(y0) + " moveto 0 " + coord(y1 - y0) +
           " rlineto stroke\n";

    // labels at the axis ends
    eps += ps_string(spec.xlabel) + " dup stringwidth pop neg " + coord(x1) +
           " add " + coord(y0 - 14.0) + " moveto show\n";
    eps += coord(x0 - 28.0) + " " + coord(y1 + 8.0) + " moveto " +
           ps_string(spec.ylabel) + " show\n";

    // data
    eps += "0.75 setlinewidth\n";
    if (spec.joined) {
        eps += coord(map_x(spec.points[0].first)) + " " +
               coord(map_y(spec.points[0].second)) + " moveto\n";
        for (std::size_t i = 1; i < spec.points.size(); ++i)
            eps += coord(map_x(spec.points[i].first)) + " " +
                   coord(map_y(spec.points[i].second)) + " lineto\n";
        eps += "stroke\n";
    } else {
        for (const auto& [x, y] : spec.points)
            eps += coord(map_x(x)) + " " + coord(map_y(y)) +
                   " 1.5 0 360 arc fill\n";
    }

    eps += "showpage\n";
    eps += "%%EOF\n";
    return eps;
}

Value plot_to_value(const PlotSpec& spec) {
    Value::List points;
    points.reserve(spec.points.size());
    for (const auto& [x, y] : spec.points)
        points.push_back(Value::list({Value::real(x), Value::real(y)}));
    return Value::list({Value::text("plot"), Value::list(std::move(points)),
                        Value::text(spec.xlabel), Value::text(spec.ylabel)});
}

bool is_plot_value(const Value& v) {
    if (!v.is_list() || v.as_list().size() != 4)
        return false;
    const auto& items = v.as_list();
    return items[0].is_text() && items[0].as_text() == "plot" &&
           items[1].is_list() && items[2].is_text() && items[3].is_text();
}

PlotSpec plot_from_value(const Value& v) {
    if (!is_plot_value(v))
        throw Error(Errc::bad_value, "expected a figure value "
                                     "{\"plot\", points, xlabel, ylabel}");
    const auto& items = v.as_list();
    PlotSpec spec;
    spec.joined = true;
    spec.xlabel = items[2].as_text();
    spec.ylabel = items[3].as_text();
    for (const auto& pt : items[1].as_list()) {
        if (!pt.is_list() || pt.as_list().size() != 2 ||
            !pt.as_list()[0].is_number() || !pt.as_list()[1].is_number())
            throw Error(Errc::bad_value, "plot points must be {x, y} pairs");
        spec.points.emplace_back(pt.as_list()[0].number(),
                                 pt.as_list()[1].number());
    }
    if (spec.points.empty())
        throw Error(Errc::bad_value, "plot needs at least one point");
    return spec;
}

} // namespace kfarm
