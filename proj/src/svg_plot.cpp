#include "assoclab/svg_plot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "assoclab/error.hpp"

namespace assoclab {
namespace svg {

namespace {

constexpr double kWidth = 640.0, kHeight = 420.0;
constexpr double kLeft = 70.0, kRight = 20.0, kTop = 40.0, kBottom = 50.0;

struct Scale {
  double min = 0.0, max = 1.0, lo_px = 0.0, hi_px = 1.0;

  double operator()(double v) const {
    if (max == min) return 0.5 * (lo_px + hi_px);
    return lo_px + (v - min) / (max - min) * (hi_px - lo_px);
  }
};

std::ofstream open_svg(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::InputError, "cannot write " + path);
  out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << kWidth
      << "' height='" << kHeight << "' font-family='sans-serif'>\n"
      << "<rect width='100%' height='100%' fill='white'/>\n";
  return out;
}

void axes(std::ofstream& out, const std::string& title, const std::string& x_label,
          const std::string& y_label, const Scale& sx, const Scale& sy) {
  out << "<text x='" << kWidth / 2 << "' y='22' text-anchor='middle' font-size='15'>"
      << title << "</text>\n";
  out << "<line x1='" << kLeft << "' y1='" << kHeight - kBottom << "' x2='"
      << kWidth - kRight << "' y2='" << kHeight - kBottom
      << "' stroke='black'/>\n";
  out << "<line x1='" << kLeft << "' y1='" << kTop << "' x2='" << kLeft << "' y2='"
      << kHeight - kBottom << "' stroke='black'/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double fx = sx.min + (sx.max - sx.min) * i / 5.0;
    const double fy = sy.min + (sy.max - sy.min) * i / 5.0;
    char bx[32], by[32];
    std::snprintf(bx, sizeof(bx), "%.3g", fx);
    std::snprintf(by, sizeof(by), "%.3g", fy);
    out << "<text x='" << sx(fx) << "' y='" << kHeight - kBottom + 16
        << "' text-anchor='middle' font-size='11'>" << bx << "</text>\n";
    out << "<text x='" << kLeft - 6 << "' y='" << sy(fy) + 4
        << "' text-anchor='end' font-size='11'>" << by << "</text>\n";
  }
  out << "<text x='" << kWidth / 2 << "' y='" << kHeight - 10
      << "' text-anchor='middle' font-size='13'>" << x_label << "</text>\n";
  out << "<text x='16' y='" << kHeight / 2
      << "' text-anchor='middle' font-size='13' transform='rotate(-90 16 "
      << kHeight / 2 << ")'>" << y_label << "</text>\n";
}

}  // namespace

void write_line_chart(const std::string& path, const std::string& title,
                      const std::string& x_label, const std::string& y_label,
                      const std::vector<Series>& series) {
  double xmin = std::numeric_limits<double>::max(), xmax = -xmin;
  double ymin = std::numeric_limits<double>::max(), ymax = -ymin;
  for (const auto& s : series)
    for (const auto& p : s.points) {
      xmin = std::min(xmin, p.x);
      xmax = std::max(xmax, p.x);
      ymin = std::min(ymin, p.y - p.err);
      ymax = std::max(ymax, p.y + p.err);
    }
  if (xmin > xmax) xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  if (ymin == ymax) ymin -= 0.5, ymax += 0.5;

  const Scale sx{xmin, xmax, kLeft, kWidth - kRight};
  const Scale sy{ymin, ymax, kHeight - kBottom, kTop};
  auto out = open_svg(path);
  axes(out, title, x_label, y_label, sx, sy);

  double legend_y = kTop + 6;
  for (const auto& s : series) {
    out << "<polyline fill='none' stroke='" << s.color << "' stroke-width='1.5' points='";
    for (const auto& p : s.points) out << sx(p.x) << "," << sy(p.y) << " ";
    out << "'/>\n";
    for (const auto& p : s.points) {
      if (p.err > 0.0)
        out << "<line x1='" << sx(p.x) << "' y1='" << sy(p.y - p.err) << "' x2='"
            << sx(p.x) << "' y2='" << sy(p.y + p.err) << "' stroke='" << s.color
            << "'/>\n";
      out << "<circle cx='" << sx(p.x) << "' cy='" << sy(p.y) << "' r='2.5' fill='"
          << s.color << "'/>\n";
      if (p.marked)
        out << "<text x='" << sx(p.x) << "' y='" << sy(p.y) - 8
            << "' text-anchor='middle' font-size='14'>*</text>\n";
    }
    out << "<text x='" << kWidth - kRight - 6 << "' y='" << legend_y
        << "' text-anchor='end' font-size='12' fill='" << s.color << "'>" << s.label
        << "</text>\n";
    legend_y += 16;
  }
  out << "</svg>\n";
}

void write_heatmap(const std::string& path, const std::string& title,
                   const std::string& x_label, const std::string& y_label,
                   int cols, int rows, const std::vector<HeatCell>& cells) {
  if (cols < 1 || rows < 1)
    throw Error(ErrorCode::InputError, "heatmap needs at least one cell");
  double vmax = 0.0;
  for (const auto& c : cells) vmax = std::max(vmax, c.value);
  const double cw = (kWidth - kLeft - kRight) / cols;
  const double ch = (kHeight - kTop - kBottom) / rows;

  auto out = open_svg(path);
  out << "<text x='" << kWidth / 2 << "' y='22' text-anchor='middle' font-size='15'>"
      << title << "</text>\n";
  for (const auto& c : cells) {
    const double frac = vmax > 0.0 ? c.value / vmax : 0.0;
    const int shade = static_cast<int>(245 - frac * 195);
    out << "<rect x='" << kLeft + c.col * cw << "' y='"
        << kHeight - kBottom - (c.row + 1) * ch << "' width='" << cw << "' height='"
        << ch << "' fill='rgb(" << shade << "," << shade << ",255)' stroke='#ccc'/>\n";
  }
  out << "<text x='" << kWidth / 2 << "' y='" << kHeight - 10
      << "' text-anchor='middle' font-size='13'>" << x_label << "</text>\n";
  out << "<text x='16' y='" << kHeight / 2
      << "' text-anchor='middle' font-size='13' transform='rotate(-90 16 "
      << kHeight / 2 << ")'>" << y_label << "</text>\n";
  out << "</svg>\n";
}

void write_histogram(const std::string& path, const std::string& title,
                     const std::string& x_label, const std::vector<double>& values,
                     int bins, const std::vector<double>& vlines) {
  if (values.empty() || bins < 1)
    throw Error(ErrorCode::InputError, "histogram needs values and bins");
  const double vmin = *std::min_element(values.begin(), values.end());
  double vmax = *std::max_element(values.begin(), values.end());
  if (vmax == vmin) vmax = vmin + 1.0;
  std::vector<int> counts(bins, 0);
  for (double v : values) {
    int b = static_cast<int>((v - vmin) / (vmax - vmin) * bins);
    counts[std::min(b, bins - 1)] += 1;
  }
  const int cmax = *std::max_element(counts.begin(), counts.end());

  const Scale sx{vmin, vmax, kLeft, kWidth - kRight};
  const Scale sy{0.0, static_cast<double>(cmax), kHeight - kBottom, kTop};
  auto out = open_svg(path);
  axes(out, title, x_label, "count", sx, sy);
  const double bw = (kWidth - kLeft - kRight) / bins;
  for (int i = 0; i < bins; ++i) {
    out << "<rect x='" << kLeft + i * bw << "' y='" << sy(counts[i]) << "' width='"
        << bw - 1 << "' height='" << (kHeight - kBottom) - sy(counts[i])
        << "' fill='steelblue'/>\n";
  }
  for (double v : vlines)
    out << "<line x1='" << sx(v) << "' y1='" << kTop << "' x2='" << sx(v) << "' y2='"
        << kHeight - kBottom << "' stroke='black' stroke-dasharray='4 3'/>\n";
  out << "</svg>\n";
}

}  // namespace svg
}  // namespace assoclab
