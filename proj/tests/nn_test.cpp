#include "lbc/nn.hpp"

#include <cmath>
#include <filesystem>

#include "gtest/gtest.h"
#include "lbc/checkpoint.hpp"
#include "test_util.hpp"

namespace lbc {
namespace {

using testing::flatten_gradients;
using testing::max_relative_error;
using testing::min_hidden_margin;
using testing::numeric_gradient;
using testing::random_matrix;
using testing::random_model;

MlpD affine(double w, double b) {
  MlpD m = zero_mlp<double>({1, 1}, HeadActivation::kIdentity);
  m.weights[0](0, 0) = w;
  m.biases[0](0) = b;
  return m;
}

TEST(Forward, ZeroParametersGiveZeroOutput) {
  const MlpD m = zero_mlp<double>({3, 4, 2}, HeadActivation::kIdentity);
  Rng rng(1);
  const MatrixD out = forward(m, random_matrix(5, 3, rng));
  EXPECT_EQ(out.rows(), 5);
  EXPECT_EQ(out.cols(), 2);
  EXPECT_TRUE(out.isZero(0.0));
}

TEST(Forward, SingleAffineLayer) {
  const MatrixD out = forward(affine(2.0, 1.0), MatrixD(MatrixD::Constant(1, 1, 3.0)));
  EXPECT_DOUBLE_EQ(out(0, 0), 7.0);
}

TEST(Forward, HiddenReluClampsNegative) {
  MlpD m = zero_mlp<double>({1, 1, 1}, HeadActivation::kIdentity);
  m.weights[0](0, 0) = -1.0;
  m.weights[1](0, 0) = 1.0;
  EXPECT_DOUBLE_EQ(forward(m, MatrixD(MatrixD::Constant(1, 1, 3.0)))(0, 0), 0.0);
}

TEST(Forward, RejectsBadInput) {
  const MlpD m = zero_mlp<double>({3, 2, 1}, HeadActivation::kIdentity);
  EXPECT_THROW(forward(m, MatrixD(MatrixD::Zero(2, 4))), DimensionError);
  MatrixD x = MatrixD::Zero(2, 3);
  x(1, 2) = std::nan("");
  EXPECT_THROW(forward(m, x), NonFiniteError);
}

TEST(Forward, IsBitDeterministic) {
  const MlpD m = random_model({4, 8, 8, 3}, HeadActivation::kCumulativeSoftplus, 11);
  Rng rng(2);
  const MatrixD x = random_matrix(17, 4, rng);
  EXPECT_EQ(forward(m, x), forward(m, x));
}

TEST(Forward, WorksInSinglePrecision) {
  Mlp<float> m = make_mlp<float>({2, 3, 1}, HeadActivation::kSoftplus, 5);
  const Matrix<float> out = forward(m, Matrix<float>(Matrix<float>::Ones(4, 2)));
  EXPECT_EQ(out.rows(), 4);
  EXPECT_TRUE((out.array() > 0.0f).all());
}

TEST(Forward, TracedMatchesPlainWithoutDropout) {
  MlpD m = random_model({3, 6, 6, 2}, HeadActivation::kIdentity, 4);
  Rng rng(3);
  const MatrixD x = random_matrix(9, 3, rng);
  ForwardTrace<double> trace;
  Rng drop(0);
  EXPECT_EQ(forward_traced(m, x, trace, &drop), forward(m, x));  // dropout rate 0
  EXPECT_TRUE(trace.masks.empty());
}

TEST(Backward, ZeroUpstreamGivesZeroGradients) {
  const MlpD m = random_model({3, 5, 2}, HeadActivation::kIdentity, 8);
  Rng rng(4);
  const Gradients<double> g = backward(m, random_matrix(6, 3, rng), MatrixD(MatrixD::Zero(6, 2)));
  for (std::size_t l = 0; l < g.weights.size(); ++l) {
    EXPECT_TRUE(g.weights[l].isZero(0.0));
    EXPECT_TRUE(g.biases[l].isZero(0.0));
  }
}

TEST(Backward, SingleAffineByHand) {
  const Gradients<double> g = backward(affine(0.7, -0.2), MatrixD(MatrixD::Constant(1, 1, 3.0)), MatrixD(MatrixD::Ones(1, 1)));
  EXPECT_DOUBLE_EQ(g.weights[0](0, 0), 3.0);
  EXPECT_DOUBLE_EQ(g.biases[0](0), 1.0);
}

TEST(Backward, RejectsMismatchedUpstream) {
  const MlpD m = random_model({3, 5, 2}, HeadActivation::kIdentity, 8);
  EXPECT_THROW(backward(m, MatrixD(MatrixD::Zero(4, 3)), MatrixD(MatrixD::Zero(4, 3))), DimensionError);
}

// Linear functional sum(U . F(x)) for a random U: its parameter gradient is
// exactly what backward() returns.
class BackwardFiniteDifference : public ::testing::TestWithParam<HeadActivation> {};

TEST_P(BackwardFiniteDifference, MatchesCentralDifferences) {
  int checked = 0;
  for (std::uint64_t seed = 0; checked < 10 && seed < 100; ++seed) {
    const MlpD m = random_model({3, 6, 5, 4}, GetParam(), seed);
    Rng rng(seed + 500);
    const MatrixD x = random_matrix(7, 3, rng);
    const MatrixD upstream = random_matrix(7, 4, rng);
    if (min_hidden_margin(m, x) < 1e-3) continue;
    const auto analytic = flatten_gradients(m, backward(m, x, upstream));
    const auto numeric =
        numeric_gradient(m, [&](const MlpD& p) { return forward(p, x).cwiseProduct(upstream).sum(); });
    EXPECT_LT(max_relative_error(analytic, numeric), 1e-4) << "seed " << seed;
    ++checked;
  }
  EXPECT_EQ(checked, 10);
}

INSTANTIATE_TEST_SUITE_P(Heads, BackwardFiniteDifference,
                         ::testing::Values(HeadActivation::kIdentity, HeadActivation::kSoftplus,
                                           HeadActivation::kCumulativeSoftplus));

TEST(Backward, DropoutMasksFlowThroughGradient) {
  MlpD m = random_model({2, 6, 1}, HeadActivation::kIdentity, 21);
  m.dropout = 0.5;
  Rng rng(9);
  const MatrixD x = random_matrix(5, 2, rng);
  ForwardTrace<double> trace;
  Rng drop(77);
  forward_traced(m, x, trace, &drop);
  ASSERT_EQ(trace.masks.size(), 1u);
  const ForwardTrace<double> frozen = trace;
  // With the masks fixed the network is a deterministic function again.
  auto masked_forward = [&](const MlpD& p) {
    MatrixD h = ((x * p.weights[0]).rowwise() + p.biases[0]).cwiseMax(0.0).cwiseProduct(frozen.masks[0]);
    return ((h * p.weights[1]).rowwise() + p.biases[1]).sum();
  };
  const auto analytic = flatten_gradients(m, backward(m, frozen, MatrixD(MatrixD::Ones(5, 1))));
  const auto numeric = numeric_gradient(m, masked_forward);
  EXPECT_LT(max_relative_error(analytic, numeric), 1e-4);
}

TEST(Adam, ZeroGradientIsNoOp) {
  MlpD m = random_model({3, 4, 2}, HeadActivation::kIdentity, 3);
  const MlpD before = m;
  AdamState<double> state = make_adam(m, 0.01);
  adam_step(m, Gradients<double>::zeros_like(m), state);
  EXPECT_EQ(m, before);
  EXPECT_EQ(state.step, 1u);
}

TEST(Adam, ZeroGradientIsNoOpForAnyState) {
  MlpD m = random_model({3, 4, 2}, HeadActivation::kIdentity, 3);
  AdamState<double> state = make_adam(m, 0.01);
  Rng rng(5);
  for (int i = 0; i < 5; ++i) {
    Gradients<double> g = Gradients<double>::zeros_like(m);
    for (auto& w : g.weights) w = random_matrix(w.rows(), w.cols(), rng);
    adam_step(m, g, state);
  }
  // Moments are non-zero now, but a zero gradient still must not move the
  // parameters.
  const MlpD before = m;
  Gradients<double> zero = Gradients<double>::zeros_like(m);
  for (std::size_t l = 0; l < zero.weights.size(); ++l) {
    state.first.weights[l].setZero();
    state.first.biases[l].setZero();
  }
  adam_step(m, zero, state);
  EXPECT_EQ(m, before);
  EXPECT_EQ(state.step, 6u);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  MlpD m = affine(1.0, 0.0);
  AdamState<double> state = make_adam(m, 0.01);
  Gradients<double> g = Gradients<double>::zeros_like(m);
  g.weights[0](0, 0) = 1.0;
  adam_step(m, g, state);
  // m_hat / sqrt(v_hat) = 1, so the step is lr / (1 + eps).
  EXPECT_NEAR(1.0 - m.weights[0](0, 0), 0.01, 1e-9);
}

TEST(Adam, TwoUnitSteps) {
  MlpD m = affine(1.0, 0.0);
  AdamState<double> state = make_adam(m, 0.01);
  Gradients<double> g = Gradients<double>::zeros_like(m);
  g.weights[0](0, 0) = 1.0;
  adam_step(m, g, state);
  adam_step(m, g, state);
  const double decrease = 1.0 - m.weights[0](0, 0);
  EXPECT_GT(decrease, 0.019);
  EXPECT_LE(decrease, 0.020);
  EXPECT_EQ(state.step, 2u);
}

TEST(Adam, RejectsNonFiniteGradient) {
  MlpD m = affine(1.0, 0.0);
  const MlpD before = m;
  AdamState<double> state = make_adam(m, 0.01);
  Gradients<double> g = Gradients<double>::zeros_like(m);
  g.biases[0](0) = INFINITY;
  EXPECT_THROW(adam_step(m, g, state), NonFiniteError);
  EXPECT_EQ(m, before);
  EXPECT_EQ(state.step, 0u);
}

TEST(Mlp, ValidateCatchesBrokenShapes) {
  MlpD m = make_mlp<double>({2, 3, 1}, HeadActivation::kIdentity, 0);
  m.weights[1].resize(4, 1);
  EXPECT_THROW(m.validate(), DimensionError);
  EXPECT_THROW(make_mlp<double>({2}, HeadActivation::kIdentity, 0), DimensionError);
}

TEST(Mlp, InitializationIsSeededAndBounded) {
  const MlpD a = make_mlp<double>({16, 8, 1}, HeadActivation::kIdentity, 42);
  const MlpD b = make_mlp<double>({16, 8, 1}, HeadActivation::kIdentity, 42);
  EXPECT_EQ(a, b);
  EXPECT_LE(a.weights[0].cwiseAbs().maxCoeff(), 0.25);
  EXPECT_TRUE(a.biases[0].isZero(0.0));
}

TEST(Checkpoint, JsonRoundTripIsExact) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    MlpD m = random_model({3, 7, 5}, HeadActivation::kCumulativeSoftplus, seed);
    m.dropout = 0.1;
    const Checkpoint back = checkpoint_from_json(
        nlohmann::json::parse(checkpoint_to_json({m, "lbc", "width"}).dump()));
    EXPECT_EQ(back.model, m);
    EXPECT_EQ(back.method, "lbc");
    EXPECT_EQ(back.role, "width");
  }
}

TEST(Checkpoint, FileRoundTripAndRejectsGarbage) {
  const auto dir = std::filesystem::temp_directory_path() / "lbc_nn_test";
  std::filesystem::create_directories(dir);
  const MlpD m = random_model({2, 3, 1}, HeadActivation::kIdentity, 1);
  save_checkpoint(dir / "m.json", {m, "mse", "mean"});
  EXPECT_EQ(load_checkpoint(dir / "m.json").model, m);
  EXPECT_THROW(checkpoint_from_json(nlohmann::json{{"format", "other"}}), DataError);
  nlohmann::json doc = checkpoint_to_json({m, "mse", "mean"});
  doc["parameters"].erase(0);
  EXPECT_THROW(checkpoint_from_json(doc), DimensionError);
}

}  // namespace
}  // namespace lbc
