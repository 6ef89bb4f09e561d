#pragma once

#include <string>
#include <vector>

namespace assoclab {

// Minimal SVG charts for the export-plots command. Not publication styling,
// just readable rendered figures next to the raw plot-data tables.
namespace svg {

struct Point {
  double x = 0.0;
  double y = 0.0;
  double err = 0.0;   // symmetric error bar; 0 = none
  bool marked = false;  // significance marker
};

struct Series {
  std::string label;
  std::string color;
  std::vector<Point> points;
};

void write_line_chart(const std::string& path, const std::string& title,
                      const std::string& x_label, const std::string& y_label,
                      const std::vector<Series>& series);

struct HeatCell {
  int col = 0;
  int row = 0;
  double value = 0.0;
};

void write_heatmap(const std::string& path, const std::string& title,
                   const std::string& x_label, const std::string& y_label,
                   int cols, int rows, const std::vector<HeatCell>& cells);

void write_histogram(const std::string& path, const std::string& title,
                     const std::string& x_label, const std::vector<double>& values,
                     int bins, const std::vector<double>& vlines);

}  // namespace svg
}  // namespace assoclab
