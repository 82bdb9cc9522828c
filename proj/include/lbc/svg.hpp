#ifndef LBC_SVG_HPP
#define LBC_SVG_HPP

#include <string>
#include <vector>

#include "lbc/metrics.hpp"
#include "lbc/pdp.hpp"

namespace lbc::svg {

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
  std::string color = "#1f77b4";
  bool dashed = false;
  bool markers = false;
};

// Shaded region between two curves sharing x.
struct Band {
  std::string name;
  std::vector<double> x;
  std::vector<double> lower;
  std::vector<double> upper;
  std::string color = "#1f77b4";
  double opacity = 0.2;
};

struct Chart {
  std::string title;
  std::string x_label;
  std::string y_label;
  int width = 640;
  int height = 440;
  // Fixed axis ranges; derived from the data when lo >= hi.
  double x_min = 0.0, x_max = 0.0;
  double y_min = 0.0, y_max = 0.0;
  std::vector<Band> bands;    // drawn first, in order
  std::vector<Series> series;
};

// Standalone SVG document. Output depends only on the chart contents.
std::string render(const Chart& chart);

// Observed coverage against nominal level, with the identity diagonal.
std::string calibration_curve_chart(const std::vector<CurvePoint>& curve, const std::string& title);

// Mean curve with one shaded band per level, widest underneath.
std::string pdp_chart(const PdpResult& result, const std::string& target_name);

}  // namespace lbc::svg

#endif  // LBC_SVG_HPP
