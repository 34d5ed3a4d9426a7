#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fdia/core/error.hpp"

namespace fdia::nn {

using Tensor = Eigen::MatrixXd;

enum class Activation { relu, elu, tanh, sigmoid, linear };

inline Activation parse_activation(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "elu") return Activation::elu;
  if (s == "tanh") return Activation::tanh;
  if (s == "sigmoid") return Activation::sigmoid;
  if (s == "linear") return Activation::linear;
  throw ConfigError("unknown activation '" + s + "'");
}

inline const char* to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::elu: return "elu";
    case Activation::tanh: return "tanh";
    case Activation::sigmoid: return "sigmoid";
    case Activation::linear: return "linear";
  }
  return "?";
}

inline double relu(double x) { return x > 0 ? x : 0.0; }

/// Stable for any finite x: never evaluates exp of a positive argument.
inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double elu(double x) { return x > 0 ? x : std::expm1(x); }

inline double activate(Activation a, double x) {
  switch (a) {
    case Activation::relu: return relu(x);
    case Activation::elu: return elu(x);
    case Activation::tanh: return std::tanh(x);
    case Activation::sigmoid: return sigmoid(x);
    case Activation::linear: return x;
  }
  return x;
}

/// Derivative with respect to the pre-activation x; relu'(0) = 0.
inline double activate_derivative(Activation a, double x) {
  switch (a) {
    case Activation::relu: return x > 0 ? 1.0 : 0.0;
    case Activation::elu: return x > 0 ? 1.0 : std::exp(x);
    case Activation::tanh: {
      const double t = std::tanh(x);
      return 1 - t * t;
    }
    case Activation::sigmoid: {
      const double s = sigmoid(x);
      return s * (1 - s);
    }
    case Activation::linear: return 1.0;
  }
  return 1.0;
}

inline Tensor activate(Activation a, const Tensor& x) {
  return x.unaryExpr([a](double v) { return activate(a, v); });
}

inline Tensor activate_derivative(Activation a, const Tensor& x) {
  return x.unaryExpr([a](double v) { return activate_derivative(a, v); });
}

/// Affine layer acting on row vectors: y = x W + b, W is c_in x c_out.
struct DenseParams {
  Tensor weights;
  Tensor bias;  // 1 x c_out

  Eigen::Index inputs() const { return weights.rows(); }
  Eigen::Index outputs() const { return weights.cols(); }
  Eigen::Index parameter_count() const { return weights.size() + bias.size(); }
};

inline DenseParams make_dense(Eigen::Index in, Eigen::Index out) {
  return {Tensor::Zero(in, out), Tensor::Zero(1, out)};
}

inline Tensor dense_forward(const DenseParams& p, const Tensor& x) {
  if (x.cols() != p.inputs())
    throw ConfigError("dense layer expects " + std::to_string(p.inputs()) + " inputs, got " +
                      std::to_string(x.cols()));
  if (p.bias.rows() != 1 || p.bias.cols() != p.outputs()) throw ConfigError("dense bias shape mismatch");
  Tensor y = x * p.weights;
  y.rowwise() += p.bias.row(0);
  return y;
}

/// Gradients of a dense layer given the upstream gradient dy of its output.
struct DenseGrad {
  Tensor weights, bias, input;
};

inline DenseGrad dense_backward(const DenseParams& p, const Tensor& x, const Tensor& dy) {
  return {x.transpose() * dy, dy.colwise().sum(), dy * p.weights.transpose()};
}

/// Uniform in +-sqrt(6 / (fan_in + fan_out)).
template <class Rng>
void glorot_uniform(Tensor& w, Eigen::Index fan_in, Eigen::Index fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> u(-limit, limit);
  for (Eigen::Index j = 0; j < w.cols(); ++j)
    for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = u(rng);
}

constexpr double kProbabilityClip = 1e-7;

inline double clip_probability(double p) { return std::clamp(p, kProbabilityClip, 1.0 - kProbabilityClip); }

/// Mean of -[y log p + (1 - y) log(1 - p)] with p clipped to [1e-7, 1 - 1e-7].
inline double binary_cross_entropy(const Eigen::VectorXd& y_true, const Eigen::VectorXd& y_pred) {
  if (y_true.size() != y_pred.size() || y_true.size() == 0) throw ConfigError("cross-entropy needs equal non-empty inputs");
  double s = 0;
  for (Eigen::Index i = 0; i < y_true.size(); ++i) {
    const double p = clip_probability(y_pred[i]);
    s -= y_true[i] * std::log(p) + (1 - y_true[i]) * std::log(1 - p);
  }
  return s / static_cast<double>(y_true.size());
}

/// Mean cross-entropy of sigmoid(logits) and its gradient with respect to the
/// logits. Where the clip is active the loss is flat, so the gradient is zero.
inline double sigmoid_bce_with_gradient(const Eigen::VectorXd& y_true, const Eigen::VectorXd& logits,
                                        Eigen::VectorXd& dlogits) {
  const auto n = static_cast<double>(y_true.size());
  Eigen::VectorXd p = logits.unaryExpr([](double v) { return sigmoid(v); });
  dlogits.resize(logits.size());
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    const bool clipped = p[i] < kProbabilityClip || p[i] > 1.0 - kProbabilityClip;
    dlogits[i] = clipped ? 0.0 : (p[i] - y_true[i]) / n;
  }
  return binary_cross_entropy(y_true, p);
}

}  // namespace fdia::nn
