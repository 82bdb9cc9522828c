#ifndef LBC_METRICS_HPP
#define LBC_METRICS_HPP

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lbc/intervals.hpp"
#include "lbc/nn.hpp"

namespace lbc {

// Fraction of samples with y_hat - delta <= y <= y_hat + delta. Both ends
// are inclusive.
double empirical_coverage(const VectorD& y, const VectorD& y_hat, const VectorD& delta);

double rmse(const VectorD& y_true, const VectorD& y_pred);

struct CalibrationReport {
  std::vector<double> levels;
  std::vector<double> coverage;
  double ece_mean = 0.0;  // mean over levels of |alpha - coverage|
  double ece_sum = 0.0;   // sum of the same terms
  double rmse = 0.0;
  Index n_test = 0;
};

// Hard-indicator coverage per level, both ECE aggregations, and the RMSE of
// the interval centres. All quantities are in the units of the inputs.
CalibrationReport ece(const VectorD& y, const IntervalPrediction& prediction,
                      const CalibrationLevels& levels);

struct CurvePoint {
  double alpha = 0.0;
  double coverage = 0.0;
};

std::vector<CurvePoint> calibration_curve(const VectorD& y, const IntervalPrediction& prediction,
                                          const CalibrationLevels& levels);

nlohmann::json to_json(const CalibrationReport& report);
CalibrationReport report_from_json(const nlohmann::json& doc);

// CSV with columns alpha, coverage, ideal.
std::string curve_to_csv(const std::vector<CurvePoint>& curve);

}  // namespace lbc

#endif  // LBC_METRICS_HPP
