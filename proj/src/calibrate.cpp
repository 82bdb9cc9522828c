#include "lbc/calibrate.hpp"

#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "lbc/errors.hpp"
#include "lbc/metrics.hpp"
#include "lbc/random.hpp"

namespace lbc {

namespace {

constexpr double kWeightGuard = 1e-12;

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

void check_lengths(const VectorD& y, const VectorD& y_hat, const VectorD& delta) {
  if (y.size() == 0) throw DataError("loss over an empty batch");
  if (y_hat.size() != y.size() || delta.size() != y.size()) {
    throw DimensionError("loss inputs differ in length");
  }
}

std::vector<Index> draw_batch(Index n, Index batch, Rng& rng) {
  std::vector<Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Index{0});
  for (Index i = 0; i < batch; ++i) {
    const auto j = i + static_cast<Index>(uniform_index(rng, static_cast<std::uint64_t>(n - i)));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(static_cast<std::size_t>(batch));
  return idx;
}

MatrixD rows_of(const MatrixD& m, const std::vector<Index>& rows) {
  MatrixD out(static_cast<Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Index>(i)) = m.row(rows[i]);
  return out;
}

VectorD rows_of(const VectorD& v, const std::vector<Index>& rows) {
  VectorD out(static_cast<Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) out(static_cast<Index>(i)) = v(rows[i]);
  return out;
}

}  // namespace

void LbcConfig::validate() const {
  std::vector<std::string> problems;
  if (!(lambda1 >= 0.0)) problems.push_back("lambda1 must be non-negative");
  if (!(lambda2 >= 0.0)) problems.push_back("lambda2 must be non-negative");
  if (!(tau >= 0.0)) problems.push_back("tau must be non-negative");
  if (!(lr_theta > 0.0)) problems.push_back("lr_theta must be positive");
  if (!(lr_phi > 0.0)) problems.push_back("lr_phi must be positive");
  if (!(sharpness > 0.0)) problems.push_back("sharpness must be positive");
  if (!(pretrain_lr > 0.0)) problems.push_back("pretrain_lr must be positive");
  if (minibatch <= 0) problems.push_back("minibatch must be positive");
  for (Index h : hidden) {
    if (h <= 0) problems.push_back("hidden widths must be positive");
  }
  if (!problems.empty()) {
    std::string msg = "invalid configuration:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw std::invalid_argument(msg);
  }
}

double coverage_indicator_smooth(double y, double y_hat, double delta, double k) {
  return sigmoid(k * (y - (y_hat - delta))) * sigmoid(k * ((y_hat + delta) - y));
}

VectorD coverage_indicator_smooth(const VectorD& y, const VectorD& y_hat, const VectorD& delta,
                                  double k) {
  check_lengths(y, y_hat, delta);
  VectorD out(y.size());
  for (Index i = 0; i < y.size(); ++i) out(i) = coverage_indicator_smooth(y(i), y_hat(i), delta(i), k);
  return out;
}

LossAndGradient calibration_width_loss(const VectorD& y, const VectorD& y_hat, const VectorD& delta,
                                       double alpha, const LbcConfig& config) {
  check_lengths(y, y_hat, delta);
  const double n = static_cast<double>(y.size());
  const double k = config.sharpness;

  VectorD cover(y.size());
  VectorD dcover(y.size());
  double regularizer = 0.0;
  VectorD dreg(y.size());
  for (Index i = 0; i < y.size(); ++i) {
    const double sa = sigmoid(k * (y(i) - (y_hat(i) - delta(i))));
    const double sb = sigmoid(k * ((y_hat(i) + delta(i)) - y(i)));
    cover(i) = sa * sb;
    dcover(i) = k * sa * sb * (2.0 - sa - sb);
    const double upper_gap = y_hat(i) + delta(i) - y(i);
    const double lower_gap = y(i) - (y_hat(i) - delta(i));
    regularizer += config.lambda1 * std::abs(upper_gap) + config.lambda2 * std::abs(lower_gap);
    dreg(i) = config.lambda1 * sign(upper_gap) + config.lambda2 * sign(lower_gap);
  }
  const double mean_cover = cover.sum() / n;

  LossAndGradient out;
  out.value = std::abs(alpha - mean_cover) + regularizer / n;
  out.gradient = (sign(mean_cover - alpha) * dcover + dreg) / n;
  if (!std::isfinite(out.value) || !out.gradient.allFinite()) {
    throw NonFiniteError("calibration width loss is not finite");
  }
  return out;
}

LossAndGradient interval_hinge_loss(const VectorD& y, const VectorD& y_hat, const VectorD& delta,
                                    double tau) {
  check_lengths(y, y_hat, delta);
  const double total = std::max(delta.sum(), kWeightGuard);
  LossAndGradient out;
  out.gradient = VectorD::Zero(y.size());
  for (Index i = 0; i < y.size(); ++i) {
    const double w = delta(i) / total;
    const double below = (y_hat(i) - delta(i)) - y(i) + tau;  // lower edge above target
    const double above = y(i) - (y_hat(i) + delta(i)) + tau;  // upper edge below target
    if (below > 0.0) {
      out.value += w * below;
      out.gradient(i) += w;
    }
    if (above > 0.0) {
      out.value += w * above;
      out.gradient(i) -= w;
    }
  }
  if (!std::isfinite(out.value) || !out.gradient.allFinite()) {
    throw NonFiniteError("interval hinge loss is not finite");
  }
  return out;
}

MatrixD predict_widths(const MlpD& width_model, const MatrixD& x, const CalibrationLevels& levels) {
  if (width_model.output_dim() != static_cast<Index>(levels.size())) {
    throw DimensionError("width model has " + std::to_string(width_model.output_dim()) +
                         " outputs for " + std::to_string(levels.size()) + " levels");
  }
  if (width_model.head != HeadActivation::kCumulativeSoftplus) {
    throw std::invalid_argument("width model needs a cumulative-softplus head");
  }
  return forward(width_model, x);
}

IntervalPrediction predict_intervals(const MlpD& mean_model, const MlpD& width_model,
                                     const MatrixD& x, const CalibrationLevels& levels) {
  if (mean_model.output_dim() != 1) throw DimensionError("mean model must have one output");
  IntervalPrediction pred;
  pred.mean = forward(mean_model, x).col(0);
  pred.widths = predict_widths(width_model, x, levels);
  return pred;
}

LbcModels init_lbc_models(Index input_dim, const LbcConfig& config, const CalibrationLevels& levels) {
  config.validate();
  std::vector<Index> mean_dims{input_dim};
  mean_dims.insert(mean_dims.end(), config.hidden.begin(), config.hidden.end());
  std::vector<Index> width_dims = mean_dims;
  mean_dims.push_back(1);
  width_dims.push_back(static_cast<Index>(levels.size()));
  return {make_mlp<double>(mean_dims, HeadActivation::kIdentity, derive_seed(config.seed, 1)),
          make_mlp<double>(width_dims, HeadActivation::kCumulativeSoftplus, derive_seed(config.seed, 2))};
}

LbcResult train_lbc(const Dataset& train, const LbcConfig& config, const CalibrationLevels& levels,
                    const Dataset* validation) {
  return train_lbc(train, init_lbc_models(train.dim(), config, levels), config, levels, validation);
}

LbcResult train_lbc(const Dataset& train, LbcModels init, const LbcConfig& config,
                    const CalibrationLevels& levels, const Dataset* validation,
                    const StepObserver& observer) {
  config.validate();
  train.validate();
  if (train.size() == 0) throw DataError("empty training set");

  LbcResult result;
  result.mean_model = std::move(init.mean_model);
  result.width_model = std::move(init.width_model);
  MlpD& mean_model = result.mean_model;
  MlpD& width_model = result.width_model;
  mean_model.validate();
  width_model.validate();
  if (mean_model.input_dim() != train.dim() || width_model.input_dim() != train.dim()) {
    throw DimensionError("model input width does not match the data");
  }
  if (mean_model.output_dim() != 1) throw DimensionError("mean model must have one output");

  Rng rng(derive_seed(config.seed, 3));
  const Index n = train.size();
  const bool full_batch = n <= config.full_batch_limit;
  const Index batch = full_batch ? n : std::min(config.minibatch, n);

  auto batch_for_step = [&](MatrixD& x, VectorD& y) {
    if (full_batch) {
      x = train.features;
      y = train.targets;
    } else {
      const auto rows = draw_batch(n, batch, rng);
      x = rows_of(train.features, rows);
      y = rows_of(train.targets, rows);
    }
  };

  ForwardTrace<double> trace;
  MatrixD x;
  VectorD y;

  if (config.pretrain_iterations > 0) {
    AdamState<double> warm = make_adam(mean_model, config.pretrain_lr);
    for (std::size_t it = 0; it < config.pretrain_iterations; ++it) {
      batch_for_step(x, y);
      const VectorD y_hat = forward_traced(mean_model, x, trace).col(0);
      const MatrixD upstream = 2.0 * (y_hat - y) / static_cast<double>(y.size());
      try {
        adam_step(mean_model, backward(mean_model, trace, upstream), warm);
      } catch (const NonFiniteError& e) {
        throw DivergenceError(it, e.what());
      }
    }
  }

  AdamState<double> theta = make_adam(mean_model, config.lr_theta);
  AdamState<double> phi = make_adam(width_model, config.lr_phi);
  const Index n_levels = static_cast<Index>(levels.size());

  for (std::size_t it = 0; it < config.iterations; ++it) {
    HistoryRow row;
    row.iteration = it;
    const Index level = static_cast<Index>(uniform_index(rng, levels.size()));
    row.alpha = levels[static_cast<std::size_t>(level)];

    try {
      // Width step with the mean network frozen.
      batch_for_step(x, y);
      {
        const VectorD y_hat = forward(mean_model, x).col(0);
        const MatrixD widths = forward_traced(width_model, x, trace);
        const LossAndGradient loss =
            calibration_width_loss(y, y_hat, widths.col(level), row.alpha, config);
        row.loss_g = loss.value;
        MatrixD upstream = MatrixD::Zero(x.rows(), n_levels);
        upstream.col(level) = loss.gradient;
        adam_step(width_model, backward(width_model, trace, upstream), phi);
      }
      if (observer) observer(it, HalfStep::kWidth, mean_model, width_model);

      // Mean step with the width network frozen.
      batch_for_step(x, y);
      {
        const VectorD delta = predict_widths(width_model, x, levels).col(level);
        const VectorD y_hat = forward_traced(mean_model, x, trace).col(0);
        const LossAndGradient loss = interval_hinge_loss(y, y_hat, delta, config.tau);
        row.loss_f = loss.value;
        const MatrixD upstream = loss.gradient;
        adam_step(mean_model, backward(mean_model, trace, upstream), theta);
      }
      if (observer) observer(it, HalfStep::kMean, mean_model, width_model);
    } catch (const NonFiniteError& e) {
      throw DivergenceError(it, e.what());
    }

    if (config.eval_every > 0 && validation != nullptr && (it + 1) % config.eval_every == 0) {
      const IntervalPrediction pred =
          predict_intervals(mean_model, width_model, validation->features, levels);
      const CalibrationReport report = ece(validation->targets, pred, levels);
      row.val_rmse = report.rmse;
      row.val_ece = report.ece_mean;
    }
    result.history.push_back(row);
  }
  return result;
}

std::string history_to_csv(const std::vector<HistoryRow>& history) {
  std::ostringstream out;
  out << "iteration,alpha,loss_g,loss_f,val_rmse,val_ece\n";
  for (const auto& row : history) {
    out << row.iteration << ',' << format_number(row.alpha) << ',' << format_number(row.loss_g) << ','
        << format_number(row.loss_f) << ',' << (row.val_rmse ? format_number(*row.val_rmse) : "")
        << ',' << (row.val_ece ? format_number(*row.val_ece) : "") << '\n';
  }
  return out.str();
}

}  // namespace lbc
