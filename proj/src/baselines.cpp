#include "lbc/baselines.hpp"

#include <cmath>
#include <functional>
#include <numbers>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "lbc/errors.hpp"
#include "lbc/random.hpp"

namespace lbc {

namespace {

std::vector<Index> layer_dims(Index input_dim, const std::vector<Index>& hidden, Index output_dim) {
  std::vector<Index> dims{input_dim};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(output_dim);
  return dims;
}

using HeadLossFn = std::function<HeadLoss(const VectorD&, const MatrixD&)>;

// Shared loop: one Adam step per iteration on a full batch or a sampled
// minibatch. Dropout masks are drawn when the model has a dropout rate.
TrainedBaseline fit(const Dataset& train, MlpD model, const BaselineConfig& config,
                    const HeadLossFn& loss_fn) {
  config.validate();
  train.validate();
  if (train.size() == 0) throw DataError("empty training set");
  TrainedBaseline result;
  Rng rng(derive_seed(config.seed, 3));
  Rng dropout_rng(derive_seed(config.seed, 4));
  AdamState<double> adam = make_adam(model, config.learning_rate);
  ForwardTrace<double> trace;
  const Index n = train.size();
  const bool full_batch = n <= config.full_batch_limit;
  const Index batch = full_batch ? n : std::min(config.minibatch, n);
  std::vector<Index> idx(static_cast<std::size_t>(n));

  for (std::size_t it = 0; it < config.iterations; ++it) {
    MatrixD x;
    VectorD y;
    if (full_batch) {
      x = train.features;
      y = train.targets;
    } else {
      std::iota(idx.begin(), idx.end(), Index{0});
      x.resize(batch, train.dim());
      y.resize(batch);
      for (Index i = 0; i < batch; ++i) {
        const auto j = i + static_cast<Index>(uniform_index(rng, static_cast<std::uint64_t>(n - i)));
        std::swap(idx[i], idx[j]);
        x.row(i) = train.features.row(idx[i]);
        y(i) = train.targets(idx[i]);
      }
    }
    const MatrixD out = forward_traced(model, x, trace, model.dropout > 0.0 ? &dropout_rng : nullptr);
    const HeadLoss loss = loss_fn(y, out);
    if (!std::isfinite(loss.value)) throw DivergenceError(it, "loss is not finite");
    try {
      adam_step(model, backward(model, trace, loss.gradient), adam);
    } catch (const NonFiniteError& e) {
      throw DivergenceError(it, e.what());
    }
    result.loss_history.push_back(loss.value);
  }
  result.model = std::move(model);
  return result;
}

}  // namespace

void BaselineConfig::validate() const {
  std::vector<std::string> problems;
  if (!(learning_rate > 0.0)) problems.push_back("learning_rate must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) problems.push_back("dropout must lie in [0, 1)");
  if (mc_passes < 2) problems.push_back("mc_passes must be at least 2");
  if (minibatch <= 0) problems.push_back("minibatch must be positive");
  if (!std::isfinite(log_variance_floor)) problems.push_back("log_variance_floor must be finite");
  for (Index h : hidden) {
    if (h <= 0) problems.push_back("hidden widths must be positive");
  }
  if (!problems.empty()) {
    std::string msg = "invalid configuration:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw std::invalid_argument(msg);
  }
}

HeadLoss squared_error_loss(const VectorD& y, const MatrixD& output) {
  if (output.cols() != 1 || output.rows() != y.size()) throw DimensionError("squared error shape mismatch");
  if (y.size() == 0) throw DataError("loss over an empty batch");
  const double n = static_cast<double>(y.size());
  const VectorD residual = output.col(0) - y;
  return {residual.squaredNorm() / n, 2.0 * residual / n};
}

HeadLoss gaussian_nll(const VectorD& y, const MatrixD& output, double floor) {
  if (output.cols() != 2 || output.rows() != y.size()) throw DimensionError("Gaussian NLL shape mismatch");
  if (y.size() == 0) throw DataError("loss over an empty batch");
  const double n = static_cast<double>(y.size());
  HeadLoss loss;
  loss.gradient = MatrixD::Zero(output.rows(), 2);
  for (Index i = 0; i < y.size(); ++i) {
    const double mu = output(i, 0);
    const double raw = output(i, 1);
    const double log_var = std::max(raw, floor);
    const double inv_var = std::exp(-log_var);
    const double r = y(i) - mu;
    loss.value += 0.5 * r * r * inv_var + 0.5 * log_var;
    loss.gradient(i, 0) = -r * inv_var / n;
    if (raw > floor) loss.gradient(i, 1) = (0.5 - 0.5 * r * r * inv_var) / n;
  }
  loss.value /= n;
  return loss;
}

TrainedBaseline train_mse(const Dataset& train, const BaselineConfig& config) {
  MlpD model = make_mlp<double>(layer_dims(train.dim(), config.hidden, 1), HeadActivation::kIdentity,
                                derive_seed(config.seed, 1));
  return fit(train, std::move(model), config, squared_error_loss);
}

TrainedBaseline train_hnn(const Dataset& train, const BaselineConfig& config) {
  MlpD model = make_mlp<double>(layer_dims(train.dim(), config.hidden, 2), HeadActivation::kIdentity,
                                derive_seed(config.seed, 1));
  const double floor = config.log_variance_floor;
  return fit(train, std::move(model), config,
             [floor](const VectorD& y, const MatrixD& out) { return gaussian_nll(y, out, floor); });
}

TrainedBaseline train_mc_dropout(const Dataset& train, const BaselineConfig& config) {
  MlpD model = make_mlp<double>(layer_dims(train.dim(), config.hidden, 1), HeadActivation::kIdentity,
                                derive_seed(config.seed, 1), config.dropout);
  return fit(train, std::move(model), config, squared_error_loss);
}

GaussianPrediction predict_hnn(const MlpD& model, const MatrixD& x, double log_variance_floor) {
  if (model.output_dim() != 2) throw DimensionError("heteroscedastic model must have two outputs");
  const MatrixD out = forward(model, x);
  GaussianPrediction pred;
  pred.mean = out.col(0);
  pred.std = (0.5 * out.col(1).array().max(log_variance_floor)).exp().matrix();
  return pred;
}

GaussianPrediction predict_mc_dropout(const MlpD& model, const MatrixD& x, std::size_t passes,
                                      std::uint64_t seed) {
  if (passes < 2) throw std::invalid_argument("MC dropout needs at least two passes");
  if (model.output_dim() != 1) throw DimensionError("MC dropout model must have one output");
  const Index n = x.rows();
  MatrixD samples(n, static_cast<Index>(passes));
  ForwardTrace<double> trace;
  for (std::size_t p = 0; p < passes; ++p) {
    Rng rng(derive_seed(seed, p));
    samples.col(static_cast<Index>(p)) = forward_traced(model, x, trace, &rng).col(0);
  }
  // Shifted by the first pass, so identical passes give exactly zero spread.
  const double count = static_cast<double>(passes);
  const MatrixD shifted = samples.colwise() - samples.col(0);
  const VectorD sum = shifted.rowwise().sum();
  GaussianPrediction pred;
  pred.mean = samples.col(0) + sum / count;
  const VectorD ss = shifted.array().square().rowwise().sum().matrix() - sum.cwiseAbs2() / count;
  pred.std = (ss.cwiseMax(0.0) / (count - 1.0)).cwiseSqrt();
  return pred;
}

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("quantile probability must lie in (0, 1)");
  // Acklam's rational approximation, then one Halley step on erfc.
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                 1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                 6.680131188771972e+01,  -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                 -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                 3.754408661907416e+00};
  constexpr double p_low = 0.02425;
  double x;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - p_low) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double e = 0.5 * std::erfc(-x / std::numbers::sqrt2) - p;
  const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
  return x - u / (1.0 + 0.5 * x * u);
}

IntervalPrediction gaussian_intervals(const GaussianPrediction& prediction,
                                      const CalibrationLevels& levels) {
  IntervalPrediction out;
  out.mean = prediction.mean;
  out.widths.resize(prediction.mean.size(), static_cast<Index>(levels.size()));
  for (std::size_t a = 0; a < levels.size(); ++a) {
    out.widths.col(static_cast<Index>(a)) = normal_quantile(0.5 * (1.0 + levels[a])) * prediction.std;
  }
  return out;
}

std::string loss_history_to_csv(const std::vector<double>& history) {
  std::ostringstream out;
  out << "iteration,loss\n";
  for (std::size_t i = 0; i < history.size(); ++i) out << i << ',' << format_number(history[i]) << '\n';
  return out.str();
}

}  // namespace lbc
