#include "lbc/pdp.hpp"

#include <numeric>
#include <sstream>

#include "lbc/calibrate.hpp"
#include "lbc/errors.hpp"
#include "lbc/random.hpp"

namespace lbc {

namespace {

void check_feature(const MatrixD& background, Index feature) {
  if (background.rows() == 0) throw DataError("partial dependence needs background rows");
  if (feature < 0 || feature >= background.cols()) {
    throw DimensionError("feature index " + std::to_string(feature) + " out of range");
  }
}

std::string level_tag(double alpha) {
  std::ostringstream s;
  s << alpha;
  return s.str();
}

}  // namespace

VectorD feature_grid(const MatrixD& background, Index feature, Index grid_size) {
  check_feature(background, feature);
  if (grid_size < 2) throw std::invalid_argument("grid_size must be at least 2");
  return VectorD::LinSpaced(grid_size, background.col(feature).minCoeff(),
                            background.col(feature).maxCoeff());
}

VectorD partial_dependence(const MlpD& model, const MatrixD& background, Index feature,
                           const VectorD& grid) {
  check_feature(background, feature);
  if (model.output_dim() != 1) throw DimensionError("partial dependence needs a single-output model");
  VectorD curve(grid.size());
  MatrixD x = background;
  for (Index g = 0; g < grid.size(); ++g) {
    x.col(feature).setConstant(grid(g));
    curve(g) = forward(model, x).col(0).mean();
  }
  return curve;
}

VectorD partial_dependence(const MlpD& model, const MatrixD& background, Index feature,
                           Index grid_size) {
  return partial_dependence(model, background, feature, feature_grid(background, feature, grid_size));
}

PdpResult partial_dependence_with_intervals(const IntervalPredictor& predict,
                                            const MatrixD& background, Index feature,
                                            const CalibrationLevels& levels, const VectorD& grid) {
  check_feature(background, feature);
  const Index n_levels = static_cast<Index>(levels.size());
  PdpResult result;
  result.feature_index = feature;
  result.grid = grid;
  result.levels = levels.values();
  result.n_background = background.rows();
  result.mean_curve.resize(grid.size());
  result.lower.resize(grid.size(), n_levels);
  result.upper.resize(grid.size(), n_levels);

  MatrixD x = background;
  for (Index g = 0; g < grid.size(); ++g) {
    x.col(feature).setConstant(grid(g));
    const IntervalPrediction pred = predict(x);
    if (pred.widths.cols() != n_levels) throw DimensionError("predictor returned the wrong level count");
    result.mean_curve(g) = pred.mean.mean();
    for (Index a = 0; a < n_levels; ++a) {
      result.lower(g, a) = pred.lower(a).mean();
      result.upper(g, a) = pred.upper(a).mean();
    }
  }
  return result;
}

PdpResult partial_dependence_with_intervals(const MlpD& mean_model, const MlpD& width_model,
                                            const MatrixD& background, Index feature,
                                            const CalibrationLevels& levels, Index grid_size) {
  return partial_dependence_with_intervals(
      [&](const MatrixD& x) { return predict_intervals(mean_model, width_model, x, levels); },
      background, feature, levels, feature_grid(background, feature, grid_size));
}

MatrixD subsample_background(const MatrixD& background, Index max_rows, std::uint64_t seed) {
  if (max_rows <= 0 || background.rows() <= max_rows) return background;
  std::vector<Index> idx(static_cast<std::size_t>(background.rows()));
  std::iota(idx.begin(), idx.end(), Index{0});
  Rng rng(seed);
  shuffle(idx.begin(), idx.end(), rng);
  idx.resize(static_cast<std::size_t>(max_rows));
  std::sort(idx.begin(), idx.end());
  MatrixD out(max_rows, background.cols());
  for (Index i = 0; i < max_rows; ++i) out.row(i) = background.row(idx[i]);
  return out;
}

PdpResult to_original_units(const PdpResult& result, const Standardization& stats) {
  PdpResult out = result;
  for (Index g = 0; g < out.grid.size(); ++g) {
    out.grid(g) = unstandardize_feature(result.grid(g), result.feature_index, stats);
  }
  out.mean_curve = unstandardize_targets(result.mean_curve, stats);
  out.lower = (result.lower.array() * stats.target_std + stats.target_mean).matrix();
  out.upper = (result.upper.array() * stats.target_std + stats.target_mean).matrix();
  return out;
}

std::string pdp_to_csv(const PdpResult& result) {
  std::ostringstream out;
  out << "grid,mean";
  for (double a : result.levels) out << ",lower_" << level_tag(a);
  for (double a : result.levels) out << ",upper_" << level_tag(a);
  out << '\n';
  for (Index g = 0; g < result.grid.size(); ++g) {
    out << format_number(result.grid(g)) << ',' << format_number(result.mean_curve(g));
    for (Index a = 0; a < result.lower.cols(); ++a) out << ',' << format_number(result.lower(g, a));
    for (Index a = 0; a < result.upper.cols(); ++a) out << ',' << format_number(result.upper(g, a));
    out << '\n';
  }
  return out.str();
}

}  // namespace lbc
