#ifndef LBC_BASELINES_HPP
#define LBC_BASELINES_HPP

// Comparison trainers sharing the MLP and optimizer of the calibration
// trainer: plain squared error, a heteroscedastic Gaussian network, and MC
// dropout.

#include <cstdint>
#include <string>
#include <vector>

#include "lbc/data.hpp"
#include "lbc/intervals.hpp"
#include "lbc/nn.hpp"

namespace lbc {

struct BaselineConfig {
  std::size_t iterations = 1000;
  double learning_rate = 1e-3;
  std::vector<Index> hidden = {64, 64, 64, 64, 64};
  Index full_batch_limit = 2048;
  Index minibatch = 512;
  double dropout = 0.1;
  std::size_t mc_passes = 50;
  double log_variance_floor = -10.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct HeadLoss {
  double value = 0.0;
  MatrixD gradient;  // same shape as the network output
};

// (1/N) sum (y - pred)^2 over a single-column output.
HeadLoss squared_error_loss(const VectorD& y, const MatrixD& output);

// (1/N) sum [(y - mu)^2 / (2 sigma^2) + log(sigma^2) / 2] with output columns
// (mu, log sigma^2). The log-variance is clamped from below at `floor`; the
// gradient through the clamp is zero.
HeadLoss gaussian_nll(const VectorD& y, const MatrixD& output, double floor);

struct TrainedBaseline {
  MlpD model;
  std::vector<double> loss_history;  // one entry per iteration
};

TrainedBaseline train_mse(const Dataset& train, const BaselineConfig& config);
TrainedBaseline train_hnn(const Dataset& train, const BaselineConfig& config);
// Squared-error training with inverted dropout (rate config.dropout) on every
// hidden layer.
TrainedBaseline train_mc_dropout(const Dataset& train, const BaselineConfig& config);

struct GaussianPrediction {
  VectorD mean;
  VectorD std;
};

GaussianPrediction predict_hnn(const MlpD& model, const MatrixD& x, double log_variance_floor);

// Mean and sample standard deviation over `passes` stochastic forwards. Pass
// p draws its masks from derive_seed(seed, p). Throws if passes < 2.
GaussianPrediction predict_mc_dropout(const MlpD& model, const MatrixD& x, std::size_t passes,
                                      std::uint64_t seed);

// Standard-normal quantile function.
double normal_quantile(double p);

// mean +/- z_{(1 + alpha) / 2} * std for every level.
IntervalPrediction gaussian_intervals(const GaussianPrediction& prediction,
                                      const CalibrationLevels& levels);

std::string loss_history_to_csv(const std::vector<double>& history);

}  // namespace lbc

#endif  // LBC_BASELINES_HPP
