#include "lbc/pdp.hpp"

#include <cmath>

#include "gtest/gtest.h"
#include "lbc/calibrate.hpp"
#include "lbc/errors.hpp"
#include "test_util.hpp"

namespace lbc {
namespace {

using testing::random_matrix;

MlpD linear_model(const VectorD& w, double b) {
  MlpD m = zero_mlp<double>({w.size(), 1}, HeadActivation::kIdentity);
  m.weights[0].col(0) = w;
  m.biases[0](0) = b;
  return m;
}

// Width network whose cumulative-softplus outputs are the constants given.
MlpD constant_width_model(Index dim, const std::vector<double>& widths) {
  MlpD m = zero_mlp<double>({dim, static_cast<Index>(widths.size())}, HeadActivation::kCumulativeSoftplus);
  double prev = 0.0;
  for (std::size_t a = 0; a < widths.size(); ++a) {
    const double inc = widths[a] - prev;  // softplus^-1(inc) = log(expm1(inc))
    m.biases[0](static_cast<Index>(a)) = std::log(std::expm1(inc));
    prev = widths[a];
  }
  return m;
}

TEST(Grid, SpansObservedRange) {
  MatrixD bg(3, 2);
  bg << 1, -2, 5, 0, 3, 4;
  const VectorD g = feature_grid(bg, 1, 4);
  EXPECT_EQ(g(0), -2.0);
  EXPECT_EQ(g(3), 4.0);
  for (Index i = 1; i < 4; ++i) EXPECT_GT(g(i), g(i - 1));
  EXPECT_EQ(partial_dependence(linear_model(VectorD::Ones(2), 0), bg, 0).size(), 50);
}

TEST(Pdp, ConstantModel) {
  Rng rng(1);
  const VectorD curve = partial_dependence(linear_model(VectorD::Zero(3), 2.5), random_matrix(20, 3, rng), 1, 10);
  EXPECT_TRUE((curve.array() == 2.5).all());
}

TEST(Pdp, LinearModelOracle) {
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const Index d = 1 + static_cast<Index>(uniform_index(rng, 6));
    const VectorD w = testing::random_vector(d, rng);
    const double b = standard_normal(rng);
    const MatrixD bg = random_matrix(5 + static_cast<Index>(uniform_index(rng, 30)), d, rng, 3.0);
    const Index s = static_cast<Index>(uniform_index(rng, static_cast<std::uint64_t>(d)));
    const VectorD grid = feature_grid(bg, s, 11);
    const VectorD curve = partial_dependence(linear_model(w, b), bg, s, grid);
    double intercept = b;
    for (Index j = 0; j < d; ++j) {
      if (j != s) intercept += w(j) * bg.col(j).mean();
    }
    for (Index g = 0; g < grid.size(); ++g) EXPECT_NEAR(curve(g), intercept + w(s) * grid(g), 1e-9);
  }
}

TEST(Pdp, AdditiveModelKeepsShape) {
  Rng rng(3);
  const MatrixD bg = random_matrix(40, 3, rng);
  const IntervalPredictor additive = [](const MatrixD& x) {
    IntervalPrediction p;
    p.mean = (x.col(0).array().sin() + x.col(1).array().square() - x.col(2).array().exp()).matrix();
    p.widths = MatrixD::Constant(x.rows(), 1, 0.5);
    return p;
  };
  const VectorD grid = feature_grid(bg, 0, 25);
  const PdpResult r = partial_dependence_with_intervals(additive, bg, 0, CalibrationLevels({0.5}), grid);
  const double offset = r.mean_curve(0) - std::sin(grid(0));
  for (Index g = 0; g < grid.size(); ++g) EXPECT_NEAR(r.mean_curve(g) - std::sin(grid(g)), offset, 1e-12);
  EXPECT_NEAR(offset, (bg.col(1).array().square() - bg.col(2).array().exp()).mean(), 1e-12);
}

TEST(Pdp, ConstantWidthGivesBandOfTwiceTheWidth) {
  Rng rng(4);
  const MatrixD bg = random_matrix(30, 2, rng);
  const std::vector<double> widths{0.2, 0.5, 0.9, 1.4, 2.0};
  const PdpResult r = partial_dependence_with_intervals(linear_model(VectorD::Zero(2), 1.0),
                                                        constant_width_model(2, widths), bg, 1, CalibrationLevels(), 20);
  for (Index g = 0; g < 20; ++g) {
    EXPECT_DOUBLE_EQ(r.mean_curve(g), 1.0);
    for (Index a = 0; a < 5; ++a) {
      EXPECT_NEAR(r.upper(g, a) - r.lower(g, a), 2.0 * widths[static_cast<std::size_t>(a)], 1e-12);
      EXPECT_NEAR(r.upper(g, a), 1.0 + widths[static_cast<std::size_t>(a)], 1e-12);
    }
  }
  EXPECT_EQ(r.n_background, 30);
}

TEST(Pdp, BandsAreNestedAndContainTheMean) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    const MatrixD bg = random_matrix(25, 3, rng);
    const MlpD mean = testing::random_model({3, 8, 1}, HeadActivation::kIdentity, seed);
    const MlpD width = testing::random_model({3, 8, 5}, HeadActivation::kCumulativeSoftplus, seed + 100);
    const PdpResult r = partial_dependence_with_intervals(mean, width, bg, 2, CalibrationLevels(), 15);
    EXPECT_NEAR((r.mean_curve - partial_dependence(mean, bg, 2, r.grid)).cwiseAbs().maxCoeff(), 0.0, 1e-12);
    for (Index g = 0; g < 15; ++g) {
      EXPECT_LE(r.lower(g, 0), r.mean_curve(g));
      EXPECT_GE(r.upper(g, 0), r.mean_curve(g));
      for (Index a = 1; a < 5; ++a) {
        EXPECT_LE(r.lower(g, a), r.lower(g, a - 1));
        EXPECT_GE(r.upper(g, a), r.upper(g, a - 1));
      }
    }
  }
}

TEST(Pdp, BackgroundOrderDoesNotMatter) {
  Rng rng(5);
  const MatrixD bg = random_matrix(20, 3, rng);
  MatrixD reversed = bg.colwise().reverse();
  const MlpD m = testing::random_model({3, 8, 1}, HeadActivation::kIdentity, 9);
  const VectorD grid = feature_grid(bg, 1, 10);
  EXPECT_LT((partial_dependence(m, bg, 1, grid) - partial_dependence(m, reversed, 1, grid)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Pdp, Errors) {
  const MlpD m = linear_model(VectorD::Ones(2), 0);
  EXPECT_THROW(partial_dependence(m, MatrixD(0, 2), 0), DataError);
  EXPECT_THROW(partial_dependence(m, MatrixD::Ones(3, 2), 2), DimensionError);
  EXPECT_THROW(partial_dependence(m, MatrixD::Ones(3, 2), 0, 1), std::invalid_argument);
}

TEST(Pdp, SubsampleAndUnits) {
  Rng rng(6);
  const MatrixD bg = random_matrix(100, 2, rng);
  const MatrixD sub = subsample_background(bg, 10, 1);
  EXPECT_EQ(sub.rows(), 10);
  EXPECT_EQ(sub, subsample_background(bg, 10, 1));
  EXPECT_EQ(subsample_background(bg, 500, 1).rows(), 100);

  Standardization stats;
  stats.feature_mean = RowVector<double>::Constant(2, 10.0);
  stats.feature_std = RowVector<double>::Constant(2, 2.0);
  stats.constant_feature = {false, false};
  stats.target_mean = 5.0;
  stats.target_std = 3.0;
  PdpResult r;
  r.feature_index = 1;
  r.grid = VectorD::Ones(1);
  r.mean_curve = VectorD::Ones(1);
  r.levels = {0.5};
  r.lower = MatrixD::Zero(1, 1);
  r.upper = MatrixD::Constant(1, 1, 2.0);
  const PdpResult o = to_original_units(r, stats);
  EXPECT_DOUBLE_EQ(o.grid(0), 12.0);
  EXPECT_DOUBLE_EQ(o.mean_curve(0), 8.0);
  EXPECT_DOUBLE_EQ(o.lower(0, 0), 5.0);
  EXPECT_DOUBLE_EQ(o.upper(0, 0), 11.0);
  const std::string csv = pdp_to_csv(o);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "grid,mean,lower_0.5,upper_0.5");
}

}  // namespace
}  // namespace lbc
