#ifndef LBC_NN_HPP
#define LBC_NN_HPP

// Fully connected ReLU networks with a hand-written backward pass and an
// Adam optimizer. Everything is templated on the scalar type; training code
// uses double throughout.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "lbc/errors.hpp"
#include "lbc/random.hpp"

namespace lbc {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

using Eigen::Index;

enum class HeadActivation {
  kIdentity,
  kSoftplus,
  // out_j = sum_{k <= j} softplus(z_k): positive and non-decreasing along the
  // output row.
  kCumulativeSoftplus,
};

inline std::string_view head_name(HeadActivation head) {
  switch (head) {
    case HeadActivation::kIdentity:
      return "identity";
    case HeadActivation::kSoftplus:
      return "softplus";
    case HeadActivation::kCumulativeSoftplus:
      return "cumulative_softplus";
  }
  return "identity";
}

inline HeadActivation parse_head(std::string_view name) {
  if (name == "identity") return HeadActivation::kIdentity;
  if (name == "softplus") return HeadActivation::kSoftplus;
  if (name == "cumulative_softplus") return HeadActivation::kCumulativeSoftplus;
  throw std::invalid_argument("unknown head activation '" + std::string(name) + "'");
}

template <typename Scalar>
Scalar softplus(Scalar z) {
  using std::exp;
  using std::log1p;
  using std::abs;
  return (z > Scalar(0) ? z : Scalar(0)) + log1p(exp(-abs(z)));
}

template <typename Scalar>
Scalar sigmoid(Scalar z) {
  using std::exp;
  if (z >= Scalar(0)) return Scalar(1) / (Scalar(1) + exp(-z));
  const Scalar e = exp(z);
  return e / (Scalar(1) + e);
}

// Weights of layer l are stored [fan_in x fan_out] so a batch X [n x d]
// maps through X * W + b.
template <typename Scalar>
struct Mlp {
  std::vector<Index> layer_dims;
  std::vector<Matrix<Scalar>> weights;
  std::vector<RowVector<Scalar>> biases;
  HeadActivation head = HeadActivation::kIdentity;
  // Inverted-dropout rate used by stochastic passes on hidden layers.
  Scalar dropout = Scalar(0);
  std::uint64_t seed = 0;

  Index input_dim() const { return layer_dims.front(); }
  Index output_dim() const { return layer_dims.back(); }
  std::size_t num_layers() const { return weights.size(); }

  Index parameter_count() const {
    Index n = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + biases[l].size();
    return n;
  }

  bool all_finite() const {
    for (std::size_t l = 0; l < weights.size(); ++l) {
      if (!weights[l].allFinite() || !biases[l].allFinite()) return false;
    }
    return true;
  }

  // Throws DimensionError unless the parameter shapes chain through
  // layer_dims.
  void validate() const {
    if (layer_dims.size() < 2) throw DimensionError("an Mlp needs at least two layer dims");
    for (Index d : layer_dims) {
      if (d <= 0) throw DimensionError("layer dims must be positive");
    }
    if (weights.size() != layer_dims.size() - 1 || biases.size() != weights.size()) {
      throw DimensionError("parameter count does not match layer dims");
    }
    for (std::size_t l = 0; l < weights.size(); ++l) {
      if (weights[l].rows() != layer_dims[l] || weights[l].cols() != layer_dims[l + 1] ||
          biases[l].size() != layer_dims[l + 1]) {
        throw DimensionError("layer " + std::to_string(l) + " has inconsistent shape");
      }
    }
    if (dropout < Scalar(0) || dropout >= Scalar(1)) {
      throw std::invalid_argument("dropout rate must lie in [0, 1)");
    }
  }

  bool operator==(const Mlp& other) const {
    if (layer_dims != other.layer_dims || head != other.head || dropout != other.dropout ||
        seed != other.seed) {
      return false;
    }
    for (std::size_t l = 0; l < weights.size(); ++l) {
      if (weights[l] != other.weights[l] || biases[l] != other.biases[l]) return false;
    }
    return true;
  }
};

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases.
template <typename Scalar>
Mlp<Scalar> make_mlp(std::vector<Index> layer_dims, HeadActivation head, std::uint64_t seed,
                     Scalar dropout = Scalar(0)) {
  Mlp<Scalar> model;
  model.layer_dims = std::move(layer_dims);
  model.head = head;
  model.seed = seed;
  model.dropout = dropout;
  if (model.layer_dims.size() < 2) throw DimensionError("an Mlp needs at least two layer dims");
  Rng rng(seed);
  for (std::size_t l = 0; l + 1 < model.layer_dims.size(); ++l) {
    const Index fan_in = model.layer_dims[l];
    const Index fan_out = model.layer_dims[l + 1];
    if (fan_in <= 0 || fan_out <= 0) throw DimensionError("layer dims must be positive");
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Matrix<Scalar> w(fan_in, fan_out);
    for (Index i = 0; i < fan_in; ++i) {
      for (Index j = 0; j < fan_out; ++j) w(i, j) = static_cast<Scalar>(uniform(rng, -bound, bound));
    }
    model.weights.push_back(std::move(w));
    model.biases.push_back(RowVector<Scalar>::Zero(fan_out));
  }
  model.validate();
  return model;
}

template <typename Scalar>
Mlp<Scalar> zero_mlp(std::vector<Index> layer_dims, HeadActivation head) {
  Mlp<Scalar> model = make_mlp<Scalar>(std::move(layer_dims), head, 0);
  for (auto& w : model.weights) w.setZero();
  return model;
}

template <typename Scalar>
struct Gradients {
  std::vector<Matrix<Scalar>> weights;
  std::vector<RowVector<Scalar>> biases;

  static Gradients zeros_like(const Mlp<Scalar>& model) {
    Gradients g;
    for (std::size_t l = 0; l < model.num_layers(); ++l) {
      g.weights.push_back(Matrix<Scalar>::Zero(model.weights[l].rows(), model.weights[l].cols()));
      g.biases.push_back(RowVector<Scalar>::Zero(model.biases[l].size()));
    }
    return g;
  }

  bool all_finite() const {
    for (std::size_t l = 0; l < weights.size(); ++l) {
      if (!weights[l].allFinite() || !biases[l].allFinite()) return false;
    }
    return true;
  }

  bool congruent_with(const Mlp<Scalar>& model) const {
    if (weights.size() != model.num_layers() || biases.size() != model.num_layers()) return false;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      if (weights[l].rows() != model.weights[l].rows() ||
          weights[l].cols() != model.weights[l].cols() ||
          biases[l].size() != model.biases[l].size()) {
        return false;
      }
    }
    return true;
  }
};

// Intermediate values of one forward pass, consumed by backward().
template <typename Scalar>
struct ForwardTrace {
  std::vector<Matrix<Scalar>> inputs;  // input to layer l
  std::vector<Matrix<Scalar>> pre;     // X_l * W_l + b_l
  std::vector<Matrix<Scalar>> masks;   // scaled dropout masks per hidden layer; empty if none
};

namespace detail {

template <typename Scalar>
void check_input(const Mlp<Scalar>& model, const Matrix<Scalar>& x) {
  if (x.cols() != model.input_dim()) {
    throw DimensionError("input has " + std::to_string(x.cols()) + " columns, model expects " +
                         std::to_string(model.input_dim()));
  }
  if (!x.allFinite()) throw NonFiniteError("non-finite value in model input");
}

template <typename Scalar>
Matrix<Scalar> apply_head(HeadActivation head, const Matrix<Scalar>& z) {
  switch (head) {
    case HeadActivation::kIdentity:
      return z;
    case HeadActivation::kSoftplus:
      return z.unaryExpr([](Scalar v) { return softplus(v); });
    case HeadActivation::kCumulativeSoftplus: {
      Matrix<Scalar> out = z.unaryExpr([](Scalar v) { return softplus(v); });
      for (Index j = 1; j < out.cols(); ++j) out.col(j) += out.col(j - 1);
      return out;
    }
  }
  return z;
}

// d(sum upstream . head(z)) / dz
template <typename Scalar>
Matrix<Scalar> head_backward(HeadActivation head, const Matrix<Scalar>& z,
                             const Matrix<Scalar>& upstream) {
  switch (head) {
    case HeadActivation::kIdentity:
      return upstream;
    case HeadActivation::kSoftplus:
      return upstream.cwiseProduct(z.unaryExpr([](Scalar v) { return sigmoid(v); }));
    case HeadActivation::kCumulativeSoftplus: {
      // Reverse cumulative sum: z_k feeds every output j >= k.
      Matrix<Scalar> tail = upstream;
      for (Index j = tail.cols() - 2; j >= 0; --j) tail.col(j) += tail.col(j + 1);
      return tail.cwiseProduct(z.unaryExpr([](Scalar v) { return sigmoid(v); }));
    }
  }
  return upstream;
}

}  // namespace detail

// Forward pass recording what backward() needs. If dropout_rng is given and
// the model has a non-zero dropout rate, hidden activations are masked.
template <typename Scalar>
Matrix<Scalar> forward_traced(const Mlp<Scalar>& model, const Matrix<Scalar>& x,
                              ForwardTrace<Scalar>& trace, Rng* dropout_rng = nullptr) {
  detail::check_input(model, x);
  const std::size_t layers = model.num_layers();
  const bool drop = dropout_rng != nullptr && model.dropout > Scalar(0);
  const Scalar keep_scale = Scalar(1) / (Scalar(1) - model.dropout);
  trace.inputs.assign(layers, Matrix<Scalar>());
  trace.pre.assign(layers, Matrix<Scalar>());
  trace.masks.clear();
  if (drop) trace.masks.assign(layers - 1, Matrix<Scalar>());

  Matrix<Scalar> a = x;
  for (std::size_t l = 0; l < layers; ++l) {
    trace.inputs[l] = a;
    trace.pre[l] = (a * model.weights[l]).rowwise() + model.biases[l];
    if (l + 1 < layers) {
      a = trace.pre[l].cwiseMax(Scalar(0));
      if (drop) {
        Matrix<Scalar> mask(a.rows(), a.cols());
        for (Index j = 0; j < mask.cols(); ++j) {
          for (Index i = 0; i < mask.rows(); ++i) {
            mask(i, j) = uniform01(*dropout_rng) < static_cast<double>(model.dropout) ? Scalar(0)
                                                                                    : keep_scale;
          }
        }
        a = a.cwiseProduct(mask);
        trace.masks[l] = std::move(mask);
      }
    }
  }
  return detail::apply_head(model.head, trace.pre.back());
}

// Deterministic forward pass (dropout off).
template <typename Scalar>
Matrix<Scalar> forward(const Mlp<Scalar>& model, const Matrix<Scalar>& x) {
  detail::check_input(model, x);
  Matrix<Scalar> a = x;
  for (std::size_t l = 0; l < model.num_layers(); ++l) {
    Matrix<Scalar> z = (a * model.weights[l]).rowwise() + model.biases[l];
    if (l + 1 < model.num_layers()) {
      a = z.cwiseMax(Scalar(0));
    } else {
      return detail::apply_head(model.head, z);
    }
  }
  return a;
}

// Gradient of sum_{i,j} upstream(i,j) * output(i,j) with respect to every
// parameter, for the pass recorded in trace.
template <typename Scalar>
Gradients<Scalar> backward(const Mlp<Scalar>& model, const ForwardTrace<Scalar>& trace,
                           const Matrix<Scalar>& upstream) {
  const std::size_t layers = model.num_layers();
  if (trace.pre.size() != layers) throw DimensionError("trace does not belong to this model");
  const Index n = trace.pre.back().rows();
  if (upstream.rows() != n || upstream.cols() != model.output_dim()) {
    throw DimensionError("upstream gradient shape does not match the forward pass");
  }
  Gradients<Scalar> grads = Gradients<Scalar>::zeros_like(model);
  Matrix<Scalar> delta = detail::head_backward(model.head, trace.pre.back(), upstream);
  for (std::size_t l = layers; l-- > 0;) {
    grads.weights[l].noalias() = trace.inputs[l].transpose() * delta;
    grads.biases[l] = delta.colwise().sum();
    if (l == 0) break;
    Matrix<Scalar> back = delta * model.weights[l].transpose();
    if (!trace.masks.empty()) back = back.cwiseProduct(trace.masks[l - 1]);
    delta = back.cwiseProduct(
        trace.pre[l - 1].unaryExpr([](Scalar v) { return v > Scalar(0) ? Scalar(1) : Scalar(0); }));
  }
  return grads;
}

template <typename Scalar>
Gradients<Scalar> backward(const Mlp<Scalar>& model, const Matrix<Scalar>& x,
                           const Matrix<Scalar>& upstream) {
  ForwardTrace<Scalar> trace;
  forward_traced(model, x, trace);
  return backward(model, trace, upstream);
}

template <typename Scalar>
struct AdamState {
  Gradients<Scalar> first;
  Gradients<Scalar> second;
  std::uint64_t step = 0;
  Scalar learning_rate = Scalar(1e-3);
  Scalar beta1 = Scalar(0.9);
  Scalar beta2 = Scalar(0.999);
  Scalar epsilon = Scalar(1e-8);
};

template <typename Scalar>
AdamState<Scalar> make_adam(const Mlp<Scalar>& model, Scalar learning_rate) {
  if (!(learning_rate > Scalar(0))) throw std::invalid_argument("learning rate must be positive");
  AdamState<Scalar> state;
  state.first = Gradients<Scalar>::zeros_like(model);
  state.second = Gradients<Scalar>::zeros_like(model);
  state.learning_rate = learning_rate;
  return state;
}

// One bias-corrected Adam update. The model and state are left untouched if
// the gradient or the resulting parameters are not finite.
template <typename Scalar>
void adam_step(Mlp<Scalar>& model, const Gradients<Scalar>& grads, AdamState<Scalar>& state) {
  if (!grads.congruent_with(model) || !state.first.congruent_with(model) ||
      !state.second.congruent_with(model)) {
    throw DimensionError("gradient or optimizer state shape does not match the model");
  }
  if (!grads.all_finite()) throw NonFiniteError("non-finite gradient rejected");

  const std::uint64_t t = state.step + 1;
  const Scalar c1 = Scalar(1) - std::pow(state.beta1, static_cast<Scalar>(t));
  const Scalar c2 = Scalar(1) - std::pow(state.beta2, static_cast<Scalar>(t));
  const Scalar b1 = state.beta1;
  const Scalar b2 = state.beta2;
  const Scalar lr = state.learning_rate;
  const Scalar eps = state.epsilon;

  auto update = [&](const auto& param, const auto& g, auto& m, auto& v) {
    m = b1 * m + (Scalar(1) - b1) * g;
    v = b2 * v + (Scalar(1) - b2) * g.cwiseAbs2();
    return (param.array() - lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps)).matrix().eval();
  };

  Gradients<Scalar> first = state.first;
  Gradients<Scalar> second = state.second;
  std::vector<Matrix<Scalar>> weights(model.num_layers());
  std::vector<RowVector<Scalar>> biases(model.num_layers());
  for (std::size_t l = 0; l < model.num_layers(); ++l) {
    weights[l] = update(model.weights[l], grads.weights[l], first.weights[l], second.weights[l]);
    biases[l] = update(model.biases[l], grads.biases[l], first.biases[l], second.biases[l]);
    if (!weights[l].allFinite() || !biases[l].allFinite()) {
      throw NonFiniteError("update produced non-finite parameters");
    }
  }
  model.weights = std::move(weights);
  model.biases = std::move(biases);
  state.first = std::move(first);
  state.second = std::move(second);
  state.step = t;
}

// Flattened parameters: for each layer, weights row-major over
// [fan_in x fan_out] followed by the bias.
template <typename Scalar>
std::vector<Scalar> flatten_parameters(const Mlp<Scalar>& model) {
  std::vector<Scalar> flat;
  flat.reserve(static_cast<std::size_t>(model.parameter_count()));
  for (std::size_t l = 0; l < model.num_layers(); ++l) {
    const auto& w = model.weights[l];
    for (Index i = 0; i < w.rows(); ++i) {
      for (Index j = 0; j < w.cols(); ++j) flat.push_back(w(i, j));
    }
    for (Index j = 0; j < model.biases[l].size(); ++j) flat.push_back(model.biases[l](j));
  }
  return flat;
}

template <typename Scalar>
void unflatten_parameters(Mlp<Scalar>& model, const std::vector<Scalar>& flat) {
  if (static_cast<Index>(flat.size()) != model.parameter_count()) {
    throw DimensionError("expected " + std::to_string(model.parameter_count()) +
                         " parameters, got " + std::to_string(flat.size()));
  }
  std::size_t k = 0;
  for (std::size_t l = 0; l < model.num_layers(); ++l) {
    auto& w = model.weights[l];
    for (Index i = 0; i < w.rows(); ++i) {
      for (Index j = 0; j < w.cols(); ++j) w(i, j) = flat[k++];
    }
    for (Index j = 0; j < model.biases[l].size(); ++j) model.biases[l](j) = flat[k++];
  }
}

using MlpD = Mlp<double>;
using MatrixD = Matrix<double>;
using VectorD = Vector<double>;

}  // namespace lbc

#endif  // LBC_NN_HPP
