#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <json.hpp>

#include "fdia/nn/core.hpp"

namespace fdia::nn {

enum class OptimizerKind { adam, sgd, rmsprop };

inline OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "adam") return OptimizerKind::adam;
  if (s == "sgd") return OptimizerKind::sgd;
  if (s == "rmsprop") return OptimizerKind::rmsprop;
  throw ConfigError("unknown optimizer '" + s + "' (adam, sgd, rmsprop)");
}

inline const char* to_string(OptimizerKind k) {
  switch (k) {
    case OptimizerKind::adam: return "adam";
    case OptimizerKind::sgd: return "sgd";
    case OptimizerKind::rmsprop: return "rmsprop";
  }
  return "?";
}

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double rho = 0.9;  // rmsprop decay
  double epsilon = 1e-8;
};

inline nlohmann::json to_json(const OptimizerConfig& c) {
  return {{"kind", to_string(c.kind)}, {"lr", c.lr},   {"beta1", c.beta1},
          {"beta2", c.beta2},          {"rho", c.rho}, {"epsilon", c.epsilon}};
}

/// Adam (bias corrected), plain SGD and RMSprop over a fixed list of tensors.
/// Moment accumulators are created on the first step with the parameter shapes.
class Optimizer {
public:
  explicit Optimizer(OptimizerConfig cfg = {}) : cfg_(cfg) {}

  const OptimizerConfig& config() const { return cfg_; }
  long steps() const { return t_; }

  void step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads) {
    if (params.size() != grads.size()) throw ConfigError("optimizer: parameter and gradient counts differ");
    for (std::size_t i = 0; i < params.size(); ++i)
      if (params[i]->rows() != grads[i].rows() || params[i]->cols() != grads[i].cols())
        throw ConfigError("optimizer: gradient shape differs from parameter shape");
    if (m_.empty()) {
      for (const auto* p : params) {
        m_.push_back(Tensor::Zero(p->rows(), p->cols()));
        v_.push_back(Tensor::Zero(p->rows(), p->cols()));
      }
    } else if (m_.size() != params.size()) {
      throw ConfigError("optimizer: parameter list changed between steps");
    }
    ++t_;
    for (std::size_t i = 0; i < params.size(); ++i) {
      Tensor& p = *params[i];
      const Tensor& g = grads[i];
      switch (cfg_.kind) {
        case OptimizerKind::sgd:
          p -= cfg_.lr * g;
          break;
        case OptimizerKind::rmsprop:
          v_[i] = cfg_.rho * v_[i] + (1 - cfg_.rho) * g.cwiseAbs2();
          p.array() -= cfg_.lr * g.array() / (v_[i].array().sqrt() + cfg_.epsilon);
          break;
        case OptimizerKind::adam: {
          m_[i] = cfg_.beta1 * m_[i] + (1 - cfg_.beta1) * g;
          v_[i] = cfg_.beta2 * v_[i] + (1 - cfg_.beta2) * g.cwiseAbs2();
          const double c1 = 1 - std::pow(cfg_.beta1, static_cast<double>(t_));
          const double c2 = 1 - std::pow(cfg_.beta2, static_cast<double>(t_));
          p.array() -= cfg_.lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + cfg_.epsilon);
          break;
        }
      }
    }
  }

private:
  OptimizerConfig cfg_;
  long t_ = 0;
  std::vector<Tensor> m_, v_;
};

}  // namespace fdia::nn
