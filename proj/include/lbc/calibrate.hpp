#ifndef LBC_CALIBRATE_HPP
#define LBC_CALIBRATE_HPP

// Learn-by-calibrating: a mean network F and a multi-level width network G
// trained by alternating steps. G minimises a calibration error for one
// randomly drawn level per iteration with F frozen; F then minimises a
// width-weighted hinge loss against G's intervals with G frozen.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "lbc/data.hpp"
#include "lbc/intervals.hpp"
#include "lbc/nn.hpp"

namespace lbc {

struct LbcConfig {
  double lambda1 = 0.1;
  double lambda2 = 0.1;
  double tau = 0.05;
  std::size_t iterations = 1000;
  double lr_theta = 5e-5;  // mean network
  double lr_phi = 1e-4;    // width network
  // Sigmoid sharpness of the smooth coverage indicator (standardized units).
  double sharpness = 50.0;
  std::vector<Index> hidden = {64, 64, 64, 64, 64};
  // Full-batch steps up to this many samples, minibatches above it.
  Index full_batch_limit = 2048;
  Index minibatch = 512;
  // Optional MSE warm start of the mean network; off by default.
  std::size_t pretrain_iterations = 0;
  double pretrain_lr = 1e-3;
  // Validation metrics every this many iterations (0 disables).
  std::size_t eval_every = 0;
  std::uint64_t seed = 0;

  void validate() const;
};

// Element-wise sigmoid(k (y - (y_hat - delta))) * sigmoid(k ((y_hat + delta) - y)).
double coverage_indicator_smooth(double y, double y_hat, double delta, double k);
VectorD coverage_indicator_smooth(const VectorD& y, const VectorD& y_hat, const VectorD& delta,
                                  double k);

// A scalar loss and its gradient with respect to one input vector.
struct LossAndGradient {
  double value = 0.0;
  VectorD gradient;
};

// |alpha - mean_i smooth_cover_i| + mean_i (lambda1 |y_hat + delta - y| +
// lambda2 |y - (y_hat - delta)|). Gradient is with respect to delta; y_hat is
// held fixed.
LossAndGradient calibration_width_loss(const VectorD& y, const VectorD& y_hat, const VectorD& delta,
                                       double alpha, const LbcConfig& config);

// sum_i w_i [max(0, y_hat - delta - y + tau) + max(0, y - y_hat - delta + tau)]
// with w_i = delta_i / sum_j delta_j. Gradient is with respect to y_hat;
// delta is held fixed.
LossAndGradient interval_hinge_loss(const VectorD& y, const VectorD& y_hat, const VectorD& delta,
                                    double tau);

// Widths for every level; the model must carry a cumulative-softplus head
// with one output per level.
MatrixD predict_widths(const MlpD& width_model, const MatrixD& x, const CalibrationLevels& levels);

IntervalPrediction predict_intervals(const MlpD& mean_model, const MlpD& width_model,
                                     const MatrixD& x, const CalibrationLevels& levels);

struct LbcModels {
  MlpD mean_model;
  MlpD width_model;
};

// Freshly initialised F and G for inputs of the given width.
LbcModels init_lbc_models(Index input_dim, const LbcConfig& config, const CalibrationLevels& levels);

struct HistoryRow {
  std::size_t iteration = 0;
  double alpha = 0.0;
  double loss_g = 0.0;
  double loss_f = 0.0;
  std::optional<double> val_rmse;
  std::optional<double> val_ece;
};

struct LbcResult {
  MlpD mean_model;
  MlpD width_model;
  std::vector<HistoryRow> history;
};

// Runs the alternating trainer on standardized data. Validation metrics (in
// standardized units) are recorded when config.eval_every > 0 and a
// validation set is given. Throws DivergenceError on a non-finite loss.
LbcResult train_lbc(const Dataset& train, const LbcConfig& config, const CalibrationLevels& levels,
                    const Dataset* validation = nullptr);

enum class HalfStep { kWidth, kMean };

// Called after every half-step with the current models.
using StepObserver =
    std::function<void(std::size_t iteration, HalfStep step, const MlpD& mean_model, const MlpD& width_model)>;

// Same, starting from the given models.
LbcResult train_lbc(const Dataset& train, LbcModels init, const LbcConfig& config,
                    const CalibrationLevels& levels, const Dataset* validation = nullptr,
                    const StepObserver& observer = {});

std::string history_to_csv(const std::vector<HistoryRow>& history);

}  // namespace lbc

#endif  // LBC_CALIBRATE_HPP
