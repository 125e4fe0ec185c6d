#pragma once

#include "tgn/autodiff.hpp"
#include "tgn/types.hpp"

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace tgn {

enum class Activation { Tanh, Relu, Sigmoid, Identity };

enum class BiasMode { None, Learned };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& name);

// sigma(0) == 0 exactly. Bias-free networks depend on it to carry zeros.
constexpr bool maps_zero_to_zero(Activation a) {
  return a == Activation::Tanh || a == Activation::Relu || a == Activation::Identity;
}

template <typename Scalar>
Scalar activate(Activation a, Scalar x) {
  using std::exp;
  using std::tanh;
  switch (a) {
    case Activation::Tanh:
      return tanh(x);
    case Activation::Relu:
      return x > Scalar(0) ? x : Scalar(0);
    case Activation::Sigmoid:
      return Scalar(1) / (Scalar(1) + exp(-x));
    case Activation::Identity:
      return x;
  }
  return x;
}

/// One dense layer, stored input-major: y = x * weight (+ bias).
struct DenseLayer {
  Matrix weight;                    // fan_in x fan_out
  std::optional<Matrix> bias;       // 1 x fan_out; absent in bias-free networks

  Index fan_in() const { return weight.rows(); }
  Index fan_out() const { return weight.cols(); }
};

/// Weights of a multilayer perceptron.
///
/// Layer shapes chain (fan_out of layer i == fan_in of layer i + 1). A
/// bias-free set has no bias vectors at all, not zero-valued ones.
struct ParamSet {
  std::vector<DenseLayer> layers;
  BiasMode bias_mode = BiasMode::None;
  std::uint64_t seed = 0;

  Index input_width() const { return layers.empty() ? 0 : layers.front().fan_in(); }
  Index output_width() const { return layers.empty() ? 0 : layers.back().fan_out(); }
  std::vector<Index> layer_sizes() const;
  std::size_t parameter_count() const;
  bool bias_free() const { return bias_mode == BiasMode::None; }
};

ParamSet init_params(std::span<const Index> layer_sizes, BiasMode bias_mode, std::uint64_t seed);
inline ParamSet init_params(std::initializer_list<Index> layer_sizes, BiasMode bias_mode,
                            std::uint64_t seed) {
  return init_params(std::span<const Index>(layer_sizes.begin(), layer_sizes.size()), bias_mode,
                     seed);
}

void check_activation(const ParamSet& params, Activation activation);

/// Batched forward pass: one record per row. Hidden layers apply the
/// activation, the last layer is linear.
template <typename Derived>
MatX<typename Derived::Scalar> mlp_forward_rows(const ParamSet& params,
                                                const Eigen::MatrixBase<Derived>& input,
                                                Activation activation) {
  using Scalar = typename Derived::Scalar;
  check_activation(params, activation);
  if (input.cols() != params.input_width()) {
    throw ShapeError("mlp_forward: input width " + std::to_string(input.cols()) +
                     " != fan-in " + std::to_string(params.input_width()));
  }
  MatX<Scalar> h = input;
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    const DenseLayer& layer = params.layers[i];
    MatX<Scalar> z = h * layer.weight.template cast<Scalar>();
    if (layer.bias) z.rowwise() += layer.bias->row(0).template cast<Scalar>();
    if (i + 1 < params.layers.size()) {
      z = z.unaryExpr([activation](Scalar v) { return activate(activation, v); });
    }
    h = std::move(z);
  }
  return h;
}

template <typename Derived>
VecX<typename Derived::Scalar> mlp_forward(const ParamSet& params,
                                           const Eigen::MatrixBase<Derived>& input,
                                           Activation activation) {
  static_assert(Derived::ColsAtCompileTime == 1, "mlp_forward expects a column vector");
  return mlp_forward_rows(params, input.transpose(), activation).transpose();
}

// ---- Losses ---------------------------------------------------------------

enum class LossKind { Mse, SoftmaxCrossEntropy };

double mse(const Vector& prediction, const Vector& target);
double softmax_cross_entropy(const Vector& logits, Index target);
Vector softmax(const Vector& logits);

// ---- Parameter lists --------------------------------------------------------

// Flat, ordered view of trainable matrices: per layer, weight then bias.
std::vector<Matrix*> parameter_refs(ParamSet& params);
std::vector<Matrix> parameter_values(const ParamSet& params);

struct TapedLayer {
  ad::Var weight;
  std::optional<ad::Var> bias;
};

// Registers a ParamSet's matrices as variables on the tape, consuming
// `vars` in parameter_refs() order starting at `offset`.
std::vector<TapedLayer> bind_layers(const ParamSet& params, std::span<const ad::Var> vars,
                                    std::size_t& offset);

ad::Var mlp_forward(std::span<const TapedLayer> layers, ad::Var input, Activation activation);

ad::Var activate(ad::Var v, Activation activation);

// ---- Gradients --------------------------------------------------------------

// Builds a scalar objective on the tape from variables bound to `params`.
using Objective = std::function<ad::Var(ad::Tape&, std::span<const ad::Var>)>;

double evaluate(const Objective& objective, std::span<const Matrix> params);

// Exact reverse-mode gradient, one matrix per parameter.
std::vector<Matrix> grad_of(const Objective& objective, std::span<const Matrix> params);

// Max over all entries of |g - fd| / max(|g|, |fd|, 1e-3), where fd is the
// central difference with step h.
double finite_diff_check(const Objective& objective, std::span<const Matrix> params, double h);

// L2 penalty: coefficient * sum of squared entries of every weight matrix.
ad::Var l2_penalty(std::span<const ad::Var> weights, double coefficient);

// ---- Adam -------------------------------------------------------------------

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double decay_rate = 1.0;     // multiplicative per decay_period steps
  double decay_period = 1000;  // steps
};

struct AdamState {
  AdamConfig config;
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;
  std::int64_t step = 0;

  // Rate applied by the next update: base * decay^(step / period).
  double effective_rate() const { return effective_rate_at(step); }
  double effective_rate_at(std::int64_t at_step) const;

  static AdamState zeros_like(std::span<Matrix* const> params, const AdamConfig& config);
  static AdamState zeros_like(std::span<const Matrix> params, const AdamConfig& config);
};

void adam_step(std::span<Matrix* const> params, std::span<const Matrix> grads, AdamState& state);

}  // namespace tgn
