#include "lbc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gtest/gtest.h"
#include "lbc/errors.hpp"
#include "test_util.hpp"

namespace lbc {
namespace {

using testing::random_vector;

VectorD vec(std::initializer_list<double> v) {
  VectorD out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

double coverage_loop(const VectorD& y, const VectorD& y_hat, const VectorD& delta) {
  int inside = 0;
  for (Index i = 0; i < y.size(); ++i) {
    if (y_hat(i) - delta(i) <= y(i) && y(i) <= y_hat(i) + delta(i)) ++inside;
  }
  return static_cast<double>(inside) / static_cast<double>(y.size());
}

TEST(Coverage, Examples) {
  EXPECT_EQ(empirical_coverage(vec({0.5, 2}), vec({0, 0}), vec({1, 1})), 0.5);
  EXPECT_EQ(empirical_coverage(vec({1, 2}), vec({1, 2}), vec({0, 0})), 1.0);
  EXPECT_EQ(empirical_coverage(vec({100, -100}), vec({0, 0}), vec({1, 1})), 0.0);
  EXPECT_EQ(empirical_coverage(vec({1, -1}), vec({0, 0}), vec({1, 1})), 1.0);  // both edges inclusive
}

TEST(Coverage, Errors) {
  EXPECT_THROW(empirical_coverage(VectorD(0), VectorD(0), VectorD(0)), DataError);
  EXPECT_THROW(empirical_coverage(vec({1}), vec({1, 2}), vec({1})), DimensionError);
}

TEST(Coverage, MatchesLoopOracle) {
  Rng rng(10);
  for (int trial = 0; trial < 100; ++trial) {
    const Index n = 1 + static_cast<Index>(uniform_index(rng, 20));
    VectorD y = random_vector(n, rng), y_hat = random_vector(n, rng), delta(n);
    for (Index i = 0; i < n; ++i) {
      delta(i) = uniform(rng, 0.0, 2.0);
      if (uniform01(rng) < 0.2) y(i) = y_hat(i) + delta(i);  // exercise the boundary
    }
    EXPECT_EQ(empirical_coverage(y, y_hat, delta), coverage_loop(y, y_hat, delta));
  }
}

TEST(Coverage, MonotoneUnderWidening) {
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const VectorD y = random_vector(30, rng), y_hat = random_vector(30, rng);
    VectorD delta(30), wider(30);
    for (Index i = 0; i < 30; ++i) {
      delta(i) = uniform(rng, 0.0, 1.5);
      wider(i) = delta(i) + uniform(rng, 0.0, 0.5);
    }
    EXPECT_LE(empirical_coverage(y, y_hat, delta), empirical_coverage(y, y_hat, wider));
  }
}

IntervalPrediction with_widths(const VectorD& mean, const MatrixD& widths) { return {mean, widths}; }

TEST(Ece, EverythingCovered) {
  const CalibrationLevels levels;
  const CalibrationReport r = ece(vec({0, 1}), with_widths(vec({0, 1}), MatrixD::Ones(2, 5)), levels);
  for (double c : r.coverage) EXPECT_EQ(c, 1.0);
  EXPECT_EQ(r.ece_mean, 0.5);
  EXPECT_EQ(r.ece_sum, 2.5);
  EXPECT_EQ(r.rmse, 0.0);
  EXPECT_EQ(r.n_test, 2);
}

TEST(Ece, PerfectCalibration) {
  // Ten samples at distances 0.5, 1.5, ..., 9.5; width w covers round(w) of them.
  VectorD y(10);
  for (Index i = 0; i < 10; ++i) y(i) = static_cast<double>(i) + 0.5;
  MatrixD widths(10, 5);
  for (Index a = 0; a < 5; ++a) widths.col(a).setConstant(static_cast<double>(2 * a + 1));
  const CalibrationReport r = ece(y, with_widths(VectorD::Zero(10), widths), CalibrationLevels());
  EXPECT_EQ(r.coverage, (std::vector<double>{0.1, 0.3, 0.5, 0.7, 0.9}));
  EXPECT_EQ(r.ece_mean, 0.0);
  EXPECT_EQ(r.ece_sum, 0.0);
  const auto curve = calibration_curve(y, with_widths(VectorD::Zero(10), widths), CalibrationLevels());
  ASSERT_EQ(curve.size(), 5u);
  EXPECT_EQ(curve[2].alpha, 0.5);
  EXPECT_EQ(curve[2].coverage, 0.5);
}

TEST(Ece, SumIsLevelCountTimesMean) {
  Rng rng(12);
  for (int trial = 0; trial < 200; ++trial) {
    const Index n = 1 + static_cast<Index>(uniform_index(rng, 40));
    const VectorD y = random_vector(n, rng), mean = random_vector(n, rng);
    MatrixD w(n, 5);
    for (Index i = 0; i < n; ++i) {
      double acc = 0.0;
      for (Index a = 0; a < 5; ++a) w(i, a) = (acc += uniform(rng, 0.0, 0.8));
    }
    const CalibrationReport r = ece(y, with_widths(mean, w), CalibrationLevels());
    EXPECT_EQ(r.ece_sum, 5.0 * r.ece_mean);
    double oracle = 0.0;
    for (Index a = 0; a < 5; ++a) oracle += std::abs(CalibrationLevels()[a] - coverage_loop(y, mean, w.col(a)));
    EXPECT_NEAR(r.ece_sum, oracle, 1e-12);
    // Nested widths give non-decreasing coverage.
    for (std::size_t a = 1; a < 5; ++a) EXPECT_GE(r.coverage[a], r.coverage[a - 1]);
  }
}

TEST(Ece, Errors) {
  EXPECT_THROW(ece(VectorD(0), with_widths(VectorD(0), MatrixD(0, 5)), CalibrationLevels()), DataError);
  EXPECT_THROW(ece(vec({1}), with_widths(vec({1}), MatrixD::Ones(1, 3)), CalibrationLevels()), DimensionError);
}

TEST(Rmse, Examples) {
  EXPECT_EQ(rmse(vec({1, 2, 3}), vec({1, 2, 3})), 0.0);
  EXPECT_NEAR(rmse(vec({0, 0}), vec({3, 4})), 3.5355339059327378, 1e-15);
  EXPECT_EQ(rmse(vec({2}), vec({-1.5})), 3.5);
  EXPECT_THROW(rmse(VectorD(0), VectorD(0)), DataError);
}

TEST(Rmse, PermutationInvariantAndZeroOnlyOnMatch) {
  Rng rng(13);
  for (int trial = 0; trial < 50; ++trial) {
    const VectorD y = random_vector(25, rng), p = random_vector(25, rng);
    std::vector<Index> perm(25);
    std::iota(perm.begin(), perm.end(), Index{0});
    shuffle(perm.begin(), perm.end(), rng);
    VectorD yp(25), pp(25);
    for (Index i = 0; i < 25; ++i) {
      yp(i) = y(perm[i]);
      pp(i) = p(perm[i]);
    }
    EXPECT_NEAR(rmse(y, p), rmse(yp, pp), 1e-14);
    EXPECT_GT(rmse(y, p), 0.0);
    VectorD q = y;
    q(static_cast<Index>(uniform_index(rng, 25))) += 1e-9;
    EXPECT_EQ(rmse(y, q) == 0.0, q == y);
  }
}

TEST(Report, JsonRoundTrip) {
  const CalibrationReport r =
      ece(vec({0.1, 0.7, -0.2}), with_widths(vec({0, 0, 0}), MatrixD::Constant(3, 5, 0.3)), CalibrationLevels());
  const CalibrationReport back = report_from_json(nlohmann::json::parse(to_json(r).dump()));
  EXPECT_EQ(back.levels, r.levels);
  EXPECT_EQ(back.coverage, r.coverage);
  EXPECT_EQ(back.ece_mean, r.ece_mean);
  EXPECT_EQ(back.ece_sum, r.ece_sum);
  EXPECT_EQ(back.rmse, r.rmse);
  EXPECT_EQ(back.n_test, r.n_test);
}

TEST(Curve, CsvHasDiagonal) {
  EXPECT_EQ(curve_to_csv({{0.1, 0.2}, {0.5, 0.5}}), "alpha,coverage,ideal\n0.10000000000000001,0.20000000000000001,0.10000000000000001\n0.5,0.5,0.5\n");
}

}  // namespace
}  // namespace lbc
