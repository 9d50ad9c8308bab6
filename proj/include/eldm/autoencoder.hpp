#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "eldm/error.hpp"
#include "eldm/linalg.hpp"
#include "eldm/log.hpp"

namespace eldm {

enum class Activation { selu, sigmoid, relu, linear };

inline std::string to_string(Activation a) {
  switch (a) {
    case Activation::selu: return "selu";
    case Activation::sigmoid: return "sigmoid";
    case Activation::relu: return "relu";
    case Activation::linear: return "linear";
  }
  return "linear";
}

inline Activation parse_activation(std::string_view s) {
  if (s == "selu") return Activation::selu;
  if (s == "sigmoid") return Activation::sigmoid;
  if (s == "relu") return Activation::relu;
  if (s == "linear") return Activation::linear;
  throw ConfigError("unknown activation '" + std::string(s) + "'");
}

namespace selu {
inline constexpr double alpha = 1.6732632423543772848170429916717;
inline constexpr double lambda = 1.0507009873554804934193349852946;
}  // namespace selu

inline bool has_kink(Activation a) { return a == Activation::selu || a == Activation::relu; }

inline Matrix activate(const Matrix& z, Activation a) {
  switch (a) {
    case Activation::selu:
      return z.unaryExpr([](double v) { return v > 0.0 ? selu::lambda * v : selu::lambda * selu::alpha * std::expm1(v); });
    case Activation::sigmoid:
      return z.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
    case Activation::relu:
      return z.cwiseMax(0.0);
    case Activation::linear:
      return z;
  }
  return z;
}

inline Matrix activation_derivative(const Matrix& z, Activation a) {
  switch (a) {
    case Activation::selu:
      return z.unaryExpr([](double v) { return v > 0.0 ? selu::lambda : selu::lambda * selu::alpha * std::exp(v); });
    case Activation::sigmoid:
      return z.unaryExpr([](double v) {
        const double s = 1.0 / (1.0 + std::exp(-v));
        return s * (1.0 - s);
      });
    case Activation::relu:
      return z.unaryExpr([](double v) { return v > 0.0 ? 1.0 : 0.0; });
    case Activation::linear:
      return Matrix::Ones(z.rows(), z.cols());
  }
  return Matrix::Ones(z.rows(), z.cols());
}

/// out = f(in * weights + bias), bias broadcast over rows.
struct DenseLayer {
  Matrix weights;  ///< fan_in x fan_out
  RowVector bias;
  Activation activation = Activation::linear;
};

/// Feedforward autoencoder. Layers before `bottleneck` form the encoder; the
/// output of layer bottleneck-1 is the code H. Decoder weights are independent.
struct AutoencoderModel {
  std::vector<Index> layer_sizes;
  std::vector<DenseLayer> layers;
  std::size_t bottleneck = 0;  ///< number of encoder layers
  std::uint64_t seed = 0;

  Index input_width() const { return layer_sizes.front(); }
  Index code_width() const { return layer_sizes[bottleneck]; }
};

/// Checks a shape chain [Q, ..., q, ..., Q] and returns the index of the narrowest interior layer.
inline std::size_t validate_layer_sizes(const std::vector<Index>& sizes) {
  if (sizes.size() < 3) throw ConfigError("autoencoder: need at least input, code, and output layers");
  if (sizes.front() != sizes.back()) throw ConfigError("autoencoder: output width must equal input width");
  for (Index s : sizes) {
    if (s < 1) throw ConfigError("autoencoder: layer widths must be positive");
  }
  const auto it = std::min_element(sizes.begin() + 1, sizes.end() - 1);
  if (*it >= sizes.front()) throw ConfigError("autoencoder: bottleneck width must be smaller than the input width");
  return static_cast<std::size_t>(it - sizes.begin());
}

/// Weights ~ N(0, 1 / fan_in) from `seed`; zero biases. `activation` applies to every
/// layer except the last decoder layer, which is linear.
inline AutoencoderModel init_autoencoder(const std::vector<Index>& layer_sizes, Activation activation, std::uint64_t seed) {
  AutoencoderModel m;
  m.bottleneck = validate_layer_sizes(layer_sizes);
  m.layer_sizes = layer_sizes;
  m.seed = seed;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    DenseLayer d;
    const Index fan_in = layer_sizes[l];
    const double sd = 1.0 / std::sqrt(static_cast<double>(fan_in));
    d.weights.resize(fan_in, layer_sizes[l + 1]);
    for (Index i = 0; i < d.weights.size(); ++i) d.weights.data()[i] = sd * normal(rng);
    d.bias = RowVector::Zero(layer_sizes[l + 1]);
    d.activation = l + 2 == layer_sizes.size() ? Activation::linear : activation;
    m.layers.push_back(std::move(d));
  }
  return m;
}

namespace detail {

inline Matrix run_layers(const AutoencoderModel& m, Matrix x, std::size_t from, std::size_t to) {
  for (std::size_t l = from; l < to; ++l) {
    const DenseLayer& d = m.layers[l];
    Matrix z = x * d.weights;
    z.rowwise() += d.bias;
    x = activate(z, d.activation);
  }
  return x;
}

}  // namespace detail

inline Matrix encode(const AutoencoderModel& m, const Matrix& xt) {
  require_cols(xt, m.input_width(), "encode");
  return detail::run_layers(m, xt, 0, m.bottleneck);
}

inline Matrix decode(const AutoencoderModel& m, const Matrix& h) {
  require_cols(h, m.code_width(), "decode");
  return detail::run_layers(m, h, m.bottleneck, m.layers.size());
}

inline Matrix autoencode(const AutoencoderModel& m, const Matrix& xt) { return decode(m, encode(m, xt)); }

/// Mean over all entries of the squared reconstruction error.
inline double reconstruction_loss(const AutoencoderModel& m, const Matrix& xt) {
  if (xt.rows() == 0) return 0.0;
  return (autoencode(m, xt) - xt).squaredNorm() / static_cast<double>(xt.size());
}

struct LayerGradient {
  Matrix weights;
  RowVector bias;
};

using Gradients = std::vector<LayerGradient>;

/// Loss and its analytic gradient by backpropagation.
inline double loss_and_gradient(const AutoencoderModel& m, const Matrix& xt, Gradients& grad) {
  const std::size_t layers = m.layers.size();
  std::vector<Matrix> inputs(layers);
  std::vector<Matrix> pre(layers);
  Matrix a = xt;
  for (std::size_t l = 0; l < layers; ++l) {
    inputs[l] = a;
    pre[l] = a * m.layers[l].weights;
    pre[l].rowwise() += m.layers[l].bias;
    a = activate(pre[l], m.layers[l].activation);
  }
  const double count = static_cast<double>(xt.size());
  const Matrix diff = a - xt;
  const double loss = diff.squaredNorm() / count;

  grad.resize(layers);
  Matrix upstream = (2.0 / count) * diff;
  for (std::size_t l = layers; l-- > 0;) {
    const Matrix delta = upstream.cwiseProduct(activation_derivative(pre[l], m.layers[l].activation));
    grad[l].weights = inputs[l].transpose() * delta;
    grad[l].bias = delta.colwise().sum();
    if (l > 0) upstream = delta * m.layers[l].weights.transpose();
  }
  return loss;
}

struct TrainOptions {
  int epochs = 100;
  double learning_rate = 1e-2;
  Index batch_size = 32;
  std::uint64_t seed = 0;
};

struct TrainResult {
  AutoencoderModel model;
  std::vector<double> loss_history;  ///< full-data loss after each epoch
};

/// Plain mini-batch gradient descent with a reshuffle of the rows every epoch.
inline TrainResult train(AutoencoderModel model, const Matrix& xt, const TrainOptions& opt) {
  require_cols(xt, model.input_width(), "train");
  if (!(opt.learning_rate >= 0.0)) throw ConfigError("train: learning rate must be nonnegative");
  if (opt.batch_size < 1 || opt.batch_size > xt.rows()) throw ConfigError("train: batch size must be in [1, N]");
  if (opt.epochs < 0) throw ConfigError("train: epochs must be nonnegative");
  const Index n = xt.rows();
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::mt19937_64 rng(opt.seed);
  TrainResult r;
  Gradients grad;
  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (Index start = 0; start < n; start += opt.batch_size) {
      const Index len = std::min(opt.batch_size, n - start);
      Matrix batch(len, xt.cols());
      for (Index i = 0; i < len; ++i) batch.row(i) = xt.row(order[static_cast<std::size_t>(start + i)]);
      loss_and_gradient(model, batch, grad);
      for (std::size_t l = 0; l < model.layers.size(); ++l) {
        model.layers[l].weights -= opt.learning_rate * grad[l].weights;
        model.layers[l].bias -= opt.learning_rate * grad[l].bias;
      }
    }
    r.loss_history.push_back(reconstruction_loss(model, xt));
    if (!std::isfinite(r.loss_history.back())) throw NumericError("train: loss diverged; lower the learning rate");
  }
  r.model = std::move(model);
  return r;
}

// ---------------------------------------------------------------------------
// Gradient verification

struct GradientCheckResult {
  double max_relative_error = 0.0;
  Index rows_used = 0;
  Index parameters = 0;
};

/// Optional mutation of the analytic gradient before comparison (negative controls).
using GradientHook = std::function<void(Gradients&)>;

/// Compares backpropagated gradients with central differences for every parameter.
///
/// Rows where any pre-activation of a SELU/ReLU layer lies within `kink_margin`
/// of zero are dropped. Per-parameter error is |g - g_fd| / max(|g|, |g_fd|, floor)
/// with floor = 1e-3 * max |g| so that vanishing gradients compare on an absolute scale.
inline GradientCheckResult gradient_check(const AutoencoderModel& model, const Matrix& xt, double epsilon,
                                          const GradientHook& hook = {}, double kink_margin = 1e-3) {
  require_cols(xt, model.input_width(), "gradient_check");
  if (!(epsilon > 0.0)) throw ConfigError("gradient_check: epsilon must be positive");

  std::vector<Index> keep;
  for (Index i = 0; i < xt.rows(); ++i) {
    Matrix a = xt.row(i);
    bool ok = true;
    for (const auto& d : model.layers) {
      Matrix z = a * d.weights;
      z.rowwise() += d.bias;
      if (has_kink(d.activation) && z.cwiseAbs().minCoeff() < kink_margin) ok = false;
      a = activate(z, d.activation);
    }
    if (ok) keep.push_back(i);
  }
  if (keep.empty()) throw DataError("gradient_check: every row lies near an activation kink");
  Matrix x(static_cast<Index>(keep.size()), xt.cols());
  for (std::size_t i = 0; i < keep.size(); ++i) x.row(static_cast<Index>(i)) = xt.row(keep[i]);

  Gradients grad;
  loss_and_gradient(model, x, grad);
  if (hook) hook(grad);

  double gmax = 0.0;
  for (const auto& g : grad) gmax = std::max({gmax, g.weights.cwiseAbs().maxCoeff(), g.bias.cwiseAbs().maxCoeff()});
  const double floor = std::max(1e-3 * gmax, 1e-300);

  GradientCheckResult r;
  r.rows_used = x.rows();
  AutoencoderModel probe = model;
  auto compare = [&](double& param, double analytic) {
    const double saved = param;
    param = saved + epsilon;
    const double up = reconstruction_loss(probe, x);
    param = saved - epsilon;
    const double down = reconstruction_loss(probe, x);
    param = saved;
    const double numeric = (up - down) / (2.0 * epsilon);
    const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
    r.max_relative_error = std::max(r.max_relative_error, std::abs(analytic - numeric) / denom);
    ++r.parameters;
  };
  for (std::size_t l = 0; l < probe.layers.size(); ++l) {
    auto& d = probe.layers[l];
    for (Index i = 0; i < d.weights.size(); ++i) compare(d.weights.data()[i], grad[l].weights.data()[i]);
    for (Index i = 0; i < d.bias.size(); ++i) compare(d.bias.data()[i], grad[l].bias.data()[i]);
  }
  return r;
}

}  // namespace eldm
