#include "lbc/baselines.hpp"

#include <cmath>

#include "gtest/gtest.h"
#include "lbc/errors.hpp"
#include "lbc/metrics.hpp"
#include "test_util.hpp"

namespace lbc {
namespace {

using testing::linear_dataset;
using testing::max_relative_error;
using testing::random_matrix;
using testing::random_vector;

constexpr double kPi = 3.14159265358979323846;

// Standard-normal CDF from the all-positive series
//   erf(x) = 2/sqrt(pi) exp(-x^2) sum_n 2^n x^(2n+1) / (1*3*...*(2n+1)).
double normal_cdf_series(double z) {
  const double x = std::abs(z) / std::sqrt(2.0);
  double term = x, sum = x;
  for (int n = 1; n < 200; ++n) {
    term *= 2.0 * x * x / (2.0 * n + 1.0);
    sum += term;
  }
  const double erf = 2.0 / std::sqrt(kPi) * std::exp(-x * x) * sum;
  return z >= 0 ? 0.5 * (1.0 + erf) : 0.5 * (1.0 - erf);
}

double quantile_by_bisection(double p) {
  double lo = -10.0, hi = 10.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (normal_cdf_series(mid) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

BaselineConfig small_config() {
  BaselineConfig c;
  c.hidden = {16, 16};
  c.iterations = 30;
  c.seed = 3;
  return c;
}

double nll_oracle(const VectorD& y, const MatrixD& out, double floor) {
  double total = 0.0;
  for (Index i = 0; i < y.size(); ++i) {
    const double lv = std::max(out(i, 1), floor);
    total += (y(i) - out(i, 0)) * (y(i) - out(i, 0)) / (2.0 * std::exp(lv)) + 0.5 * lv;
  }
  return total / static_cast<double>(y.size());
}

TEST(NormalQuantile, MatchesSeriesOracle) {
  EXPECT_NEAR(normal_quantile(0.95), 1.6449, 5e-5);
  for (double p : {1e-6, 0.001, 0.02, 0.1, 0.3, 0.5, 0.55, 0.7, 0.9, 0.95, 0.975, 0.999, 1 - 1e-6}) {
    EXPECT_NEAR(normal_quantile(p), quantile_by_bisection(p), 1e-9) << p;
  }
  EXPECT_THROW(normal_quantile(0.0), std::invalid_argument);
  EXPECT_THROW(normal_quantile(1.0), std::invalid_argument);
}

TEST(GaussianNll, MatchesOracleAndFiniteDifferences) {
  Rng rng(4);
  for (int trial = 0; trial < 30; ++trial) {
    const VectorD y = random_vector(8, rng);
    const MatrixD out = random_matrix(8, 2, rng);
    const HeadLoss l = gaussian_nll(y, out, -10.0);
    EXPECT_NEAR(l.value, nll_oracle(y, out, -10.0), 1e-12);
    std::vector<double> analytic, numeric;
    for (Index i = 0; i < 8; ++i) {
      for (Index j = 0; j < 2; ++j) {
        MatrixD up = out, down = out;
        up(i, j) += 1e-6;
        down(i, j) -= 1e-6;
        analytic.push_back(l.gradient(i, j));
        numeric.push_back((nll_oracle(y, up, -10.0) - nll_oracle(y, down, -10.0)) / 2e-6);
      }
    }
    EXPECT_LT(max_relative_error(analytic, numeric, 1e-8), 1e-4);
  }
}

TEST(GaussianNll, FloorStopsTheGradient) {
  MatrixD out(1, 2);
  out << 0.0, -20.0;
  const HeadLoss l = gaussian_nll((VectorD(1) << 0.0).finished(), out, -10.0);
  EXPECT_DOUBLE_EQ(l.value, -5.0);
  EXPECT_EQ(l.gradient(0, 1), 0.0);
}

TEST(SquaredError, ValueAndGradient) {
  MatrixD out(2, 1);
  out << 3.0, 4.0;
  const HeadLoss l = squared_error_loss(VectorD::Zero(2), out);
  EXPECT_DOUBLE_EQ(l.value, 12.5);
  EXPECT_DOUBLE_EQ(l.gradient(0, 0), 3.0);
  EXPECT_DOUBLE_EQ(l.gradient(1, 0), 4.0);
}

TEST(TrainMse, ConstantZeroTarget) {
  Dataset d = linear_dataset(64, 0.0, 0.0, 1);
  BaselineConfig c = small_config();
  c.iterations = 300;
  const TrainedBaseline t = train_mse(d, c);
  const double fit = rmse(d.targets, forward(t.model, d.features).col(0));
  EXPECT_LT(fit, 1e-2);
  EXPECT_LT(t.loss_history.back(), t.loss_history.front());
}

TEST(TrainMse, LinearFunction) {
  // Standardized noise-free y = 2x; default architecture and schedule.
  const Dataset train = standardize(linear_dataset(400, 2.0, 0.0, 2)).train;
  BaselineConfig c;
  c.seed = 5;
  const TrainedBaseline t = train_mse(train, c);
  const Dataset test = standardize(linear_dataset(400, 2.0, 0.0, 2), {linear_dataset(200, 2.0, 0.0, 3)}).others[0];
  EXPECT_LT(rmse(test.targets, forward(t.model, test.features).col(0)), 0.05);
}

TEST(TrainMse, Deterministic) {
  const Dataset d = linear_dataset(50, 1.0, 0.3, 4);
  EXPECT_EQ(train_mse(d, small_config()).model, train_mse(d, small_config()).model);
  EXPECT_EQ(train_hnn(d, small_config()).model, train_hnn(d, small_config()).model);
  EXPECT_EQ(train_mc_dropout(d, small_config()).model, train_mc_dropout(d, small_config()).model);
}

TEST(TrainHnn, RecoversHomoscedasticNoise) {
  const Dataset train = linear_dataset(1000, 1.0, 0.5, 6);
  const Dataset test = linear_dataset(500, 1.0, 0.5, 7);
  BaselineConfig c;
  c.seed = 1;
  const TrainedBaseline t = train_hnn(train, c);
  const GaussianPrediction p = predict_hnn(t.model, test.features, c.log_variance_floor);
  EXPECT_NEAR(p.std.mean(), 0.5, 0.1);
  EXPECT_TRUE((p.std.array() > 0.0).all());
}

TEST(McDropout, NoDropoutMeansNoSpread) {
  MlpD m = testing::random_model({2, 8, 1}, HeadActivation::kIdentity, 1);
  Rng rng(1);
  const MatrixD x = random_matrix(6, 2, rng);
  const GaussianPrediction p = predict_mc_dropout(m, x, 10, 3);
  EXPECT_TRUE(p.std.isZero(0.0));
  EXPECT_EQ(p.mean, forward(m, x).col(0));
}

TEST(McDropout, SeededAndValidated) {
  MlpD m = testing::random_model({2, 8, 1}, HeadActivation::kIdentity, 1);
  m.dropout = 0.1;
  Rng rng(2);
  const MatrixD x = random_matrix(6, 2, rng);
  const GaussianPrediction a = predict_mc_dropout(m, x, 20, 9);
  const GaussianPrediction b = predict_mc_dropout(m, x, 20, 9);
  EXPECT_EQ(a.mean, b.mean);
  EXPECT_EQ(a.std, b.std);
  EXPECT_NE(predict_mc_dropout(m, x, 20, 10).std, a.std);
  EXPECT_THROW(predict_mc_dropout(m, x, 1, 9), std::invalid_argument);
}

TEST(McDropout, SpreadStabilizesWithManyPasses) {
  MlpD m = testing::random_model({3, 32, 32, 1}, HeadActivation::kIdentity, 12);
  m.dropout = 0.1;
  Rng rng(3);
  const MatrixD x = random_matrix(4, 3, rng);
  constexpr int kRepeats = 10;
  MatrixD stds(x.rows(), kRepeats);
  for (int r = 0; r < kRepeats; ++r) stds.col(r) = predict_mc_dropout(m, x, 1000, 100 + r).std;
  for (Index i = 0; i < x.rows(); ++i) {
    const double mean = stds.row(i).mean();
    const double spread = std::sqrt((stds.row(i).array() - mean).square().sum() / (kRepeats - 1));
    EXPECT_GT(mean, 0.0);
    EXPECT_LT(spread, 0.05 * mean) << "sample " << i;
  }
}

TEST(GaussianIntervals, WidthsStrictlyIncreaseWithLevel) {
  GaussianPrediction p;
  p.mean = VectorD::Zero(3);
  p.std = (VectorD(3) << 0.1, 1.0, 7.0).finished();
  const IntervalPrediction iv = gaussian_intervals(p, CalibrationLevels());
  for (Index a = 1; a < 5; ++a) EXPECT_TRUE((iv.widths.col(a).array() > iv.widths.col(a - 1).array()).all());
  EXPECT_NEAR(iv.widths(1, 4), 1.6448536269514722, 1e-12);
}

TEST(BaselineConfig, Validation) {
  BaselineConfig c;
  c.dropout = 1.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = BaselineConfig();
  c.learning_rate = -1.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

}  // namespace
}  // namespace lbc
