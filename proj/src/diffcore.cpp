#include "tgn/diffcore.hpp"

#include "tgn/random.hpp"

#include <algorithm>
#include <cmath>

namespace tgn {

std::string to_string(Activation a) {
  switch (a) {
    case Activation::Tanh:
      return "tanh";
    case Activation::Relu:
      return "relu";
    case Activation::Sigmoid:
      return "sigmoid";
    case Activation::Identity:
      return "identity";
  }
  return "?";
}

Activation activation_from_string(const std::string& name) {
  if (name == "tanh") return Activation::Tanh;
  if (name == "relu") return Activation::Relu;
  if (name == "sigmoid") return Activation::Sigmoid;
  if (name == "identity") return Activation::Identity;
  throw ConfigError("unknown activation '" + name + "'");
}

std::vector<Index> ParamSet::layer_sizes() const {
  std::vector<Index> sizes;
  if (layers.empty()) return sizes;
  sizes.push_back(layers.front().fan_in());
  for (const auto& l : layers) sizes.push_back(l.fan_out());
  return sizes;
}

std::size_t ParamSet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) {
    n += static_cast<std::size_t>(l.weight.size());
    if (l.bias) n += static_cast<std::size_t>(l.bias->size());
  }
  return n;
}

ParamSet init_params(std::span<const Index> layer_sizes, BiasMode bias_mode, std::uint64_t seed) {
  if (layer_sizes.size() < 2) throw ConfigError("init_params: need at least input and output sizes");
  for (Index s : layer_sizes) {
    if (s < 1) throw ConfigError("init_params: layer sizes must be >= 1");
  }
  ParamSet params;
  params.bias_mode = bias_mode;
  params.seed = seed;
  Rng rng(seed);
  for (std::size_t i = 0; i + 1 < layer_sizes.size(); ++i) {
    const Index fan_in = layer_sizes[i];
    const Index fan_out = layer_sizes[i + 1];
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    DenseLayer layer;
    layer.weight.resize(fan_in, fan_out);
    for (Index r = 0; r < fan_in; ++r) {
      for (Index c = 0; c < fan_out; ++c) layer.weight(r, c) = rng.uniform(-limit, limit);
    }
    if (bias_mode == BiasMode::Learned) layer.bias = Matrix::Zero(1, fan_out);
    params.layers.push_back(std::move(layer));
  }
  return params;
}

void check_activation(const ParamSet& params, Activation activation) {
  if (params.layers.empty()) throw ConfigError("network has no layers");
  for (std::size_t i = 0; i + 1 < params.layers.size(); ++i) {
    if (params.layers[i].fan_out() != params.layers[i + 1].fan_in()) {
      throw ShapeError("layer " + std::to_string(i) + " fan-out does not match next fan-in");
    }
  }
  if (params.bias_free() && !maps_zero_to_zero(activation)) {
    throw ConfigError("activation '" + to_string(activation) +
                      "' does not map 0 to 0 and cannot be used in a bias-free network");
  }
}

double mse(const Vector& prediction, const Vector& target) {
  if (prediction.size() != target.size()) throw ShapeError("mse: length mismatch");
  if (prediction.size() == 0) throw ShapeError("mse: empty input");
  return (prediction - target).squaredNorm() / static_cast<double>(prediction.size());
}

Vector softmax(const Vector& logits) {
  const double mx = logits.maxCoeff();
  Vector e = (logits.array() - mx).exp().matrix();
  return e / e.sum();
}

double softmax_cross_entropy(const Vector& logits, Index target) {
  if (target < 0 || target >= logits.size()) {
    throw InputError("class index " + std::to_string(target) + " outside [0, " +
                     std::to_string(logits.size()) + ")");
  }
  const double mx = logits.maxCoeff();
  const double lse = mx + std::log((logits.array() - mx).exp().sum());
  return lse - logits[target];
}

std::vector<Matrix*> parameter_refs(ParamSet& params) {
  std::vector<Matrix*> refs;
  for (auto& l : params.layers) {
    refs.push_back(&l.weight);
    if (l.bias) refs.push_back(&*l.bias);
  }
  return refs;
}

std::vector<Matrix> parameter_values(const ParamSet& params) {
  std::vector<Matrix> values;
  for (const auto& l : params.layers) {
    values.push_back(l.weight);
    if (l.bias) values.push_back(*l.bias);
  }
  return values;
}

std::vector<TapedLayer> bind_layers(const ParamSet& params, std::span<const ad::Var> vars,
                                    std::size_t& offset) {
  std::vector<TapedLayer> layers;
  for (const auto& l : params.layers) {
    if (offset >= vars.size()) throw ShapeError("bind_layers: too few variables");
    TapedLayer t{vars[offset++], std::nullopt};
    if (l.bias) {
      if (offset >= vars.size()) throw ShapeError("bind_layers: too few variables");
      t.bias = vars[offset++];
    }
    layers.push_back(t);
  }
  return layers;
}

ad::Var activate(ad::Var v, Activation activation) {
  switch (activation) {
    case Activation::Tanh:
      return ad::tanh(v);
    case Activation::Relu:
      return ad::relu(v);
    case Activation::Sigmoid:
      return ad::sigmoid(v);
    case Activation::Identity:
      return v;
  }
  return v;
}

ad::Var mlp_forward(std::span<const TapedLayer> layers, ad::Var input, Activation activation) {
  if (layers.empty()) throw ConfigError("network has no layers");
  const bool bias_free = std::none_of(layers.begin(), layers.end(),
                                      [](const TapedLayer& l) { return l.bias.has_value(); });
  if (bias_free && !maps_zero_to_zero(activation)) {
    throw ConfigError("activation '" + to_string(activation) +
                      "' does not map 0 to 0 and cannot be used in a bias-free network");
  }
  ad::Var h = input;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    h = ad::matmul(h, layers[i].weight);
    if (layers[i].bias) h = ad::add_row(h, *layers[i].bias);
    if (i + 1 < layers.size()) h = activate(h, activation);
  }
  return h;
}

double evaluate(const Objective& objective, std::span<const Matrix> params) {
  ad::Tape tape;
  std::vector<ad::Var> vars;
  vars.reserve(params.size());
  for (const Matrix& p : params) vars.push_back(tape.constant(p));
  return objective(tape, vars).scalar();
}

std::vector<Matrix> grad_of(const Objective& objective, std::span<const Matrix> params) {
  ad::Tape tape;
  std::vector<ad::Var> vars;
  vars.reserve(params.size());
  for (const Matrix& p : params) vars.push_back(tape.variable(p));
  ad::Var root = objective(tape, vars);
  tape.backward(root);
  std::vector<Matrix> grads;
  grads.reserve(vars.size());
  for (const ad::Var& v : vars) grads.push_back(tape.grad(v));
  return grads;
}

double finite_diff_check(const Objective& objective, std::span<const Matrix> params, double h) {
  if (!(h > 0.0)) throw ConfigError("finite_diff_check: step must be positive");
  const std::vector<Matrix> analytic = grad_of(objective, params);
  std::vector<Matrix> probe(params.begin(), params.end());
  double worst = 0.0;
  for (std::size_t i = 0; i < probe.size(); ++i) {
    for (Index j = 0; j < probe[i].size(); ++j) {
      const double saved = probe[i](j);
      probe[i](j) = saved + h;
      const double up = evaluate(objective, probe);
      probe[i](j) = saved - h;
      const double down = evaluate(objective, probe);
      probe[i](j) = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[i](j);
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-3});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
  }
  return worst;
}

ad::Var l2_penalty(std::span<const ad::Var> weights, double coefficient) {
  if (weights.empty()) throw UsageError("l2_penalty: no weights");
  ad::Var total = ad::sum_squares(weights.front());
  for (std::size_t i = 1; i < weights.size(); ++i) total = ad::add(total, ad::sum_squares(weights[i]));
  return ad::scale(total, coefficient);
}

double AdamState::effective_rate_at(std::int64_t at_step) const {
  return config.learning_rate *
         std::pow(config.decay_rate, static_cast<double>(at_step) / config.decay_period);
}

AdamState AdamState::zeros_like(std::span<Matrix* const> params, const AdamConfig& config) {
  AdamState s;
  s.config = config;
  for (const Matrix* p : params) {
    s.first_moment.push_back(Matrix::Zero(p->rows(), p->cols()));
    s.second_moment.push_back(Matrix::Zero(p->rows(), p->cols()));
  }
  return s;
}

AdamState AdamState::zeros_like(std::span<const Matrix> params, const AdamConfig& config) {
  AdamState s;
  s.config = config;
  for (const Matrix& p : params) {
    s.first_moment.push_back(Matrix::Zero(p.rows(), p.cols()));
    s.second_moment.push_back(Matrix::Zero(p.rows(), p.cols()));
  }
  return s;
}

void adam_step(std::span<Matrix* const> params, std::span<const Matrix> grads, AdamState& state) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size()) {
    throw ShapeError("adam_step: parameter, gradient and state counts differ");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->rows() != grads[i].rows() || params[i]->cols() != grads[i].cols() ||
        state.first_moment[i].rows() != grads[i].rows() ||
        state.first_moment[i].cols() != grads[i].cols()) {
      throw ShapeError("adam_step: shape mismatch at parameter " + std::to_string(i));
    }
  }
  const AdamConfig& c = state.config;
  const double rate = state.effective_rate();
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(c.beta1, t);
  const double correction2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Matrix& m = state.first_moment[i];
    Matrix& v = state.second_moment[i];
    m = c.beta1 * m + (1.0 - c.beta1) * grads[i];
    v = c.beta2 * v + (1.0 - c.beta2) * grads[i].cwiseAbs2();
    params[i]->array() -=
        rate * (m.array() / correction1) / ((v.array() / correction2).sqrt() + c.epsilon);
  }
}

}  // namespace tgn
