#pragma once

#include <functional>
#include <string>

#include <Eigen/Dense>

#include "fdia/grid/case.hpp"

namespace fdia::testing {

inline std::string data_path(const std::string& rel) { return std::string(FDIA_DATA_DIR) + "/" + rel; }

inline GridCase fixture(const std::string& name) { return load_case(data_path("cases/" + name + ".json")); }

/// Central differences of a vector-valued function; column j is d f / d p_j.
inline Eigen::MatrixXd central_differences(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
                                           const Eigen::VectorXd& p, double step) {
  const Eigen::VectorXd f0 = f(p);
  Eigen::MatrixXd out(f0.size(), p.size());
  for (Eigen::Index j = 0; j < p.size(); ++j) {
    Eigen::VectorXd hi = p, lo = p;
    hi[j] += step;
    lo[j] -= step;
    out.col(j) = (f(hi) - f(lo)) / (2 * step);
  }
  return out;
}

/// max |a - b| / max(1, |b|) elementwise, a scale-aware relative error.
inline double max_relative_error(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return ((a - b).array().abs() / b.array().abs().max(1.0)).maxCoeff();
}

}  // namespace fdia::testing
