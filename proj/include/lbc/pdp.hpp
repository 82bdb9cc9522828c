#ifndef LBC_PDP_HPP
#define LBC_PDP_HPP

// Partial dependence: P(s) = (1/N_t) sum_i F(s, x_i^c), with the complement
// features x_i^c taken from background (training) rows. Interval bands are
// the background averages of the per-row bounds y_hat -/+ delta.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "lbc/data.hpp"
#include "lbc/intervals.hpp"
#include "lbc/nn.hpp"

namespace lbc {

struct PdpResult {
  std::string feature;
  Index feature_index = 0;
  VectorD grid;
  VectorD mean_curve;
  std::vector<double> levels;
  MatrixD lower;  // [grid x levels]
  MatrixD upper;  // [grid x levels]
  Index n_background = 0;
};

using IntervalPredictor = std::function<IntervalPrediction(const MatrixD&)>;

// grid_size evenly spaced points over the observed range of the feature.
VectorD feature_grid(const MatrixD& background, Index feature, Index grid_size);

VectorD partial_dependence(const MlpD& model, const MatrixD& background, Index feature,
                           const VectorD& grid);
VectorD partial_dependence(const MlpD& model, const MatrixD& background, Index feature,
                           Index grid_size = 50);

PdpResult partial_dependence_with_intervals(const IntervalPredictor& predict,
                                            const MatrixD& background, Index feature,
                                            const CalibrationLevels& levels, const VectorD& grid);

PdpResult partial_dependence_with_intervals(const MlpD& mean_model, const MlpD& width_model,
                                            const MatrixD& background, Index feature,
                                            const CalibrationLevels& levels, Index grid_size = 50);

// At most max_rows background rows, drawn without replacement.
MatrixD subsample_background(const MatrixD& background, Index max_rows, std::uint64_t seed);

// Maps grid and curves from standardized to original units.
PdpResult to_original_units(const PdpResult& result, const Standardization& stats);

// Columns: grid, mean, lower_<alpha>..., upper_<alpha>...
std::string pdp_to_csv(const PdpResult& result);

}  // namespace lbc

#endif  // LBC_PDP_HPP
