#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "fdia/nn/core.hpp"

namespace fdia::nn {

struct GradientCheckReport {
  double max_relative_error = 0;
  std::size_t worst_tensor = 0;
  Eigen::Index worst_entry = 0;
  std::size_t checked = 0;
  bool passed = true;
};

/// Compares analytic gradients against central differences of `loss`, which
/// must read the current values of `params`. Each entry is perturbed in place
/// and restored. Relative error is |a - n| / max(|a|, |n|, floor).
inline GradientCheckReport finite_difference_check(const std::function<double()>& loss,
                                                   const std::vector<Tensor*>& params,
                                                   const std::vector<Tensor>& analytic, double step = 1e-6,
                                                   double tolerance = 1e-5, double floor = 1e-6) {
  if (params.size() != analytic.size()) throw ConfigError("gradient check: tensor counts differ");
  GradientCheckReport r;
  for (std::size_t t = 0; t < params.size(); ++t) {
    Tensor& p = *params[t];
    if (p.size() != analytic[t].size()) throw ConfigError("gradient check: tensor shapes differ");
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      const double orig = p.data()[i];
      p.data()[i] = orig + step;
      const double hi = loss();
      p.data()[i] = orig - step;
      const double lo = loss();
      p.data()[i] = orig;
      const double numeric = (hi - lo) / (2 * step);
      const double a = analytic[t].data()[i];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      ++r.checked;
      if (rel > r.max_relative_error) {
        r.max_relative_error = rel;
        r.worst_tensor = t;
        r.worst_entry = i;
      }
    }
  }
  r.passed = r.max_relative_error <= tolerance;
  return r;
}

}  // namespace fdia::nn
