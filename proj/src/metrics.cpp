#include "lbc/metrics.hpp"

#include <cmath>
#include <sstream>

#include "lbc/errors.hpp"

namespace lbc {

double empirical_coverage(const VectorD& y, const VectorD& y_hat, const VectorD& delta) {
  if (y.size() == 0) throw DataError("coverage of an empty set is undefined");
  if (y_hat.size() != y.size() || delta.size() != y.size()) {
    throw DimensionError("coverage inputs differ in length");
  }
  const auto inside = ((y_hat - delta).array() <= y.array()) && (y.array() <= (y_hat + delta).array());
  return static_cast<double>(inside.count()) / static_cast<double>(y.size());
}

double rmse(const VectorD& y_true, const VectorD& y_pred) {
  if (y_true.size() == 0) throw DataError("rmse of an empty set is undefined");
  if (y_pred.size() != y_true.size()) throw DimensionError("rmse inputs differ in length");
  return std::sqrt((y_true - y_pred).squaredNorm() / static_cast<double>(y_true.size()));
}

CalibrationReport ece(const VectorD& y, const IntervalPrediction& prediction,
                      const CalibrationLevels& levels) {
  if (y.size() == 0) throw DataError("empty test set");
  if (prediction.widths.cols() != static_cast<Index>(levels.size())) {
    throw DimensionError("interval prediction has the wrong number of levels");
  }
  CalibrationReport report;
  report.levels = levels.values();
  report.n_test = y.size();
  // Neumaier summation: the level gaps are few but of mixed magnitude, and
  // naive accumulation can be an ulp off the exact total.
  double total = 0.0, compensation = 0.0;
  for (std::size_t a = 0; a < levels.size(); ++a) {
    const double c = empirical_coverage(y, prediction.mean, prediction.widths.col(static_cast<Index>(a)));
    report.coverage.push_back(c);
    const double term = std::abs(levels[a] - c);
    const double t = total + term;
    compensation += std::abs(total) >= term ? (total - t) + term : (term - t) + total;
    total = t;
  }
  total += compensation;
  const double n_levels = static_cast<double>(levels.size());
  report.ece_mean = total / n_levels;
  // Defined through the mean so that ece_sum == |A| * ece_mean holds exactly.
  report.ece_sum = n_levels * report.ece_mean;
  report.rmse = rmse(y, prediction.mean);
  return report;
}

std::vector<CurvePoint> calibration_curve(const VectorD& y, const IntervalPrediction& prediction,
                                          const CalibrationLevels& levels) {
  const CalibrationReport report = ece(y, prediction, levels);
  std::vector<CurvePoint> curve;
  for (std::size_t a = 0; a < levels.size(); ++a) curve.push_back({levels[a], report.coverage[a]});
  return curve;
}

nlohmann::json to_json(const CalibrationReport& report) {
  nlohmann::json per_level = nlohmann::json::array();
  for (std::size_t a = 0; a < report.levels.size(); ++a) {
    per_level.push_back({{"alpha", report.levels[a]}, {"coverage", report.coverage[a]}});
  }
  return {
      {"levels", per_level},
      {"ece_mean", report.ece_mean},
      {"ece_sum", report.ece_sum},
      {"rmse", report.rmse},
      {"n_test", report.n_test},
  };
}

CalibrationReport report_from_json(const nlohmann::json& doc) {
  CalibrationReport report;
  for (const auto& entry : doc.at("levels")) {
    report.levels.push_back(entry.at("alpha").get<double>());
    report.coverage.push_back(entry.at("coverage").get<double>());
  }
  report.ece_mean = doc.at("ece_mean").get<double>();
  report.ece_sum = doc.at("ece_sum").get<double>();
  report.rmse = doc.at("rmse").get<double>();
  report.n_test = doc.at("n_test").get<Index>();
  return report;
}

std::string curve_to_csv(const std::vector<CurvePoint>& curve) {
  std::ostringstream out;
  out << "alpha,coverage,ideal\n";
  for (const auto& p : curve) {
    out << format_number(p.alpha) << ',' << format_number(p.coverage) << ',' << format_number(p.alpha)
        << '\n';
  }
  return out.str();
}

}  // namespace lbc
