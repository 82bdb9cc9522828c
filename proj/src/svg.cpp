#include "lbc/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace lbc::svg {

namespace {

constexpr int kMarginLeft = 70;
constexpr int kMarginRight = 150;
constexpr int kMarginTop = 40;
constexpr int kMarginBottom = 55;

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", std::abs(v) < 1e-12 ? 0.0 : v);
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

// Roughly five ticks at 1/2/5 x 10^k steps.
std::vector<double> nice_ticks(double lo, double hi) {
  const double span = hi - lo;
  const double raw = span / 5.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 5.0, 10.0}) {
    step = m * mag;
    if (step >= raw) break;
  }
  std::vector<double> ticks;
  for (double t = std::ceil(lo / step) * step; t <= hi + 1e-9 * span; t += step) ticks.push_back(t);
  return ticks;
}

struct Frame {
  double x0, x1, y0, y1;
  int w, h;
  double px(double x) const { return kMarginLeft + (x - x0) / (x1 - x0) * (w - kMarginLeft - kMarginRight); }
  double py(double y) const { return h - kMarginBottom - (y - y0) / (y1 - y0) * (h - kMarginTop - kMarginBottom); }
};

void extend(double& lo, double& hi, const std::vector<double>& v) {
  for (double x : v) {
    if (std::isfinite(x)) {
      lo = std::min(lo, x);
      hi = std::max(hi, x);
    }
  }
}

}  // namespace

std::string render(const Chart& chart) {
  double x0 = chart.x_min, x1 = chart.x_max, y0 = chart.y_min, y1 = chart.y_max;
  if (!(x0 < x1)) {
    x0 = std::numeric_limits<double>::infinity();
    x1 = -x0;
    for (const auto& s : chart.series) extend(x0, x1, s.x);
    for (const auto& b : chart.bands) extend(x0, x1, b.x);
  }
  if (!(y0 < y1)) {
    y0 = std::numeric_limits<double>::infinity();
    y1 = -y0;
    for (const auto& s : chart.series) extend(y0, y1, s.y);
    for (const auto& b : chart.bands) {
      extend(y0, y1, b.lower);
      extend(y0, y1, b.upper);
    }
    const double pad = 0.05 * (y1 - y0);
    y0 -= pad;
    y1 += pad;
  }
  if (!(x0 < x1)) {
    x0 -= 0.5;
    x1 += 0.5;
  }
  if (!(y0 < y1)) {
    y0 -= 0.5;
    y1 += 0.5;
  }
  const Frame f{x0, x1, y0, y1, chart.width, chart.height};

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << chart.width << "\" height=\""
      << chart.height << "\" viewBox=\"0 0 " << chart.width << ' ' << chart.height
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out << "<rect x=\"0\" y=\"0\" width=\"" << chart.width << "\" height=\"" << chart.height
      << "\" fill=\"white\"/>\n";
  if (!chart.title.empty()) {
    out << "<text x=\"" << chart.width / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
        << escape(chart.title) << "</text>\n";
  }

  // Axes and grid.
  const double left = f.px(x0), right = f.px(x1), top = f.py(y1), bottom = f.py(y0);
  out << "<g stroke=\"#dddddd\" stroke-width=\"1\">\n";
  for (double t : nice_ticks(x0, x1)) {
    out << "<line x1=\"" << fmt(f.px(t)) << "\" y1=\"" << fmt(top) << "\" x2=\"" << fmt(f.px(t))
        << "\" y2=\"" << fmt(bottom) << "\"/>\n";
  }
  for (double t : nice_ticks(y0, y1)) {
    out << "<line x1=\"" << fmt(left) << "\" y1=\"" << fmt(f.py(t)) << "\" x2=\"" << fmt(right)
        << "\" y2=\"" << fmt(f.py(t)) << "\"/>\n";
  }
  out << "</g>\n";
  out << "<rect x=\"" << fmt(left) << "\" y=\"" << fmt(top) << "\" width=\"" << fmt(right - left)
      << "\" height=\"" << fmt(bottom - top) << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (double t : nice_ticks(x0, x1)) {
    out << "<text x=\"" << fmt(f.px(t)) << "\" y=\"" << fmt(bottom + 16)
        << "\" text-anchor=\"middle\">" << tick_label(t) << "</text>\n";
  }
  for (double t : nice_ticks(y0, y1)) {
    out << "<text x=\"" << fmt(left - 6) << "\" y=\"" << fmt(f.py(t) + 4)
        << "\" text-anchor=\"end\">" << tick_label(t) << "</text>\n";
  }
  out << "<text x=\"" << fmt((left + right) / 2) << "\" y=\"" << chart.height - 12
      << "\" text-anchor=\"middle\">" << escape(chart.x_label) << "</text>\n";
  out << "<text transform=\"translate(18 " << fmt((top + bottom) / 2)
      << ") rotate(-90)\" text-anchor=\"middle\">" << escape(chart.y_label) << "</text>\n";

  for (const auto& band : chart.bands) {
    out << "<polygon fill=\"" << band.color << "\" fill-opacity=\"" << fmt(band.opacity)
        << "\" stroke=\"none\" points=\"";
    for (std::size_t i = 0; i < band.x.size(); ++i) {
      out << fmt(f.px(band.x[i])) << ',' << fmt(f.py(band.upper[i])) << ' ';
    }
    for (std::size_t i = band.x.size(); i-- > 0;) {
      out << fmt(f.px(band.x[i])) << ',' << fmt(f.py(band.lower[i])) << (i > 0 ? " " : "");
    }
    out << "\"/>\n";
  }
  for (const auto& s : chart.series) {
    out << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"2\""
        << (s.dashed ? " stroke-dasharray=\"6 4\"" : "") << " points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      out << fmt(f.px(s.x[i])) << ',' << fmt(f.py(s.y[i])) << (i + 1 < s.x.size() ? " " : "");
    }
    out << "\"/>\n";
    if (s.markers) {
      for (std::size_t i = 0; i < s.x.size(); ++i) {
        out << "<circle cx=\"" << fmt(f.px(s.x[i])) << "\" cy=\"" << fmt(f.py(s.y[i]))
            << "\" r=\"3.5\" fill=\"" << s.color << "\"/>\n";
      }
    }
  }

  // Legend.
  double ly = top + 10;
  const double lx = right + 14;
  for (const auto& band : chart.bands) {
    out << "<rect x=\"" << fmt(lx) << "\" y=\"" << fmt(ly - 8) << "\" width=\"18\" height=\"10\" fill=\""
        << band.color << "\" fill-opacity=\"" << fmt(band.opacity) << "\"/>\n";
    out << "<text x=\"" << fmt(lx + 24) << "\" y=\"" << fmt(ly + 1) << "\">" << escape(band.name)
        << "</text>\n";
    ly += 18;
  }
  for (const auto& s : chart.series) {
    out << "<line x1=\"" << fmt(lx) << "\" y1=\"" << fmt(ly - 3) << "\" x2=\"" << fmt(lx + 18)
        << "\" y2=\"" << fmt(ly - 3) << "\" stroke=\"" << s.color << "\" stroke-width=\"2\""
        << (s.dashed ? " stroke-dasharray=\"6 4\"" : "") << "/>\n";
    out << "<text x=\"" << fmt(lx + 24) << "\" y=\"" << fmt(ly + 1) << "\">" << escape(s.name)
        << "</text>\n";
    ly += 18;
  }
  out << "</svg>\n";
  return out.str();
}

std::string calibration_curve_chart(const std::vector<CurvePoint>& curve, const std::string& title) {
  Chart chart;
  chart.title = title;
  chart.x_label = "expected coverage (alpha)";
  chart.y_label = "observed coverage";
  chart.x_min = 0.0;
  chart.x_max = 1.0;
  chart.y_min = 0.0;
  chart.y_max = 1.0;
  chart.series.push_back({"ideal", {0.0, 1.0}, {0.0, 1.0}, "#888888", true, false});
  Series observed{"observed", {}, {}, "#d62728", false, true};
  for (const auto& p : curve) {
    observed.x.push_back(p.alpha);
    observed.y.push_back(p.coverage);
  }
  chart.series.push_back(std::move(observed));
  return render(chart);
}

std::string pdp_chart(const PdpResult& result, const std::string& target_name) {
  Chart chart;
  chart.title = "Partial dependence: " + result.feature;
  chart.x_label = result.feature;
  chart.y_label = target_name;
  const std::vector<double> grid(result.grid.data(), result.grid.data() + result.grid.size());
  const std::size_t n_levels = result.levels.size();
  for (std::size_t k = n_levels; k-- > 0;) {
    Band band;
    char name[32];
    std::snprintf(name, sizeof(name), "alpha = %g", result.levels[k]);
    band.name = name;
    band.x = grid;
    for (Index g = 0; g < result.grid.size(); ++g) {
      band.lower.push_back(result.lower(g, static_cast<Index>(k)));
      band.upper.push_back(result.upper(g, static_cast<Index>(k)));
    }
    band.color = "#1f77b4";
    band.opacity = 0.12 + 0.5 / static_cast<double>(n_levels + 1);
    chart.bands.push_back(std::move(band));
  }
  chart.series.push_back({"expected prediction", grid,
                          std::vector<double>(result.mean_curve.data(),
                                              result.mean_curve.data() + result.mean_curve.size()),
                          "#08306b", false, false});
  return render(chart);
}

}  // namespace lbc::svg
