#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <json.hpp>

#include "fdia/estimation/wls.hpp"

namespace fdia {

/// `sqrt`: |r_i| / sqrt(R_ii S_ii), the textbook normalization.
/// `paper`: |r_i| / (R_ii S_ii), the literal largest-normalized-residual formula.
enum class ResidualDenominator { sqrt, paper };

inline ResidualDenominator parse_denominator(const std::string& s) {
  if (s == "sqrt") return ResidualDenominator::sqrt;
  if (s == "paper") return ResidualDenominator::paper;
  throw ConfigError("residual denominator must be 'paper' or 'sqrt', got '" + s + "'");
}

inline const char* to_string(ResidualDenominator d) { return d == ResidualDenominator::sqrt ? "sqrt" : "paper"; }

struct BddOptions {
  double threshold = 3.0;
  ResidualDenominator denominator = ResidualDenominator::sqrt;
  double critical_tolerance = 1e-10;
};

struct BddReport {
  Eigen::VectorXd residuals;
  Eigen::VectorXd normalized;         // nonnegative, per the chosen denominator
  Eigen::VectorXd signed_normalized;  // r_i / sqrt(R_ii S_ii)
  Eigen::VectorXd sensitivity;        // S_ii
  double max_normalized = 0;
  Index argmax = -1;
  bool flagged = false;
  double threshold = 0;
  std::vector<Index> critical;  // S_ii at or below tolerance; r_N forced to 0
};

/// Dense residual sensitivity S = I - H G^-1 H^T R^-1.
inline Eigen::MatrixXd residual_sensitivity(const SparseMatrix& h, const Eigen::VectorXd& variances) {
  const Eigen::VectorXd w = variances.cwiseInverse();
  Eigen::SimplicialLDLT<SparseMatrix> ldlt;
  detail::factor_gain(ldlt, h, w);
  const Eigen::MatrixXd ht = Eigen::MatrixXd(h.transpose());
  const Eigen::MatrixXd k = ldlt.solve(ht);  // G^-1 H^T
  Eigen::MatrixXd s = -Eigen::MatrixXd(h) * k * w.asDiagonal();
  s.diagonal().array() += 1.0;
  return s;
}

inline BddReport bdd_normalized_residuals(const MeasurementModel& model, const MeasurementVector& z,
                                          const EstimationResult& est, const BddOptions& opt = {}) {
  if (!est.converged) throw ConfigError("bad-data test requires a converged estimate");
  z.validate();
  const SparseMatrix h = model.jacobian(est.x_hat);
  const Eigen::VectorXd w = z.variances.cwiseInverse();
  Eigen::SimplicialLDLT<SparseMatrix> ldlt;
  detail::factor_gain(ldlt, h, w);
  const Eigen::MatrixXd k = ldlt.solve(Eigen::MatrixXd(h.transpose()));  // G^-1 H^T

  BddReport rep;
  rep.threshold = opt.threshold;
  rep.residuals = z.values - model.evaluate(est.x_hat);
  const Index m = z.size();
  rep.sensitivity.resize(m);
  rep.normalized.resize(m);
  rep.signed_normalized.resize(m);
  // hk[i] = H_i G^-1 H_i^T
  Eigen::VectorXd hk = Eigen::VectorXd::Zero(m);
  for (Index col = 0; col < h.outerSize(); ++col)
    for (SparseMatrix::InnerIterator it(h, col); it; ++it) hk[it.row()] += it.value() * k(col, it.row());
  for (Index i = 0; i < m; ++i) {
    const double s = 1.0 - hk[i] * w[i];
    rep.sensitivity[i] = s;
    const double rs = z.variances[i] * s;
    if (s <= opt.critical_tolerance) {
      rep.critical.push_back(i);
      rep.normalized[i] = 0;
      rep.signed_normalized[i] = 0;
      continue;
    }
    rep.signed_normalized[i] = rep.residuals[i] / std::sqrt(rs);
    rep.normalized[i] = opt.denominator == ResidualDenominator::sqrt ? std::abs(rep.signed_normalized[i])
                                                                     : std::abs(rep.residuals[i]) / rs;
  }
  rep.max_normalized = m > 0 ? rep.normalized.maxCoeff(&rep.argmax) : 0.0;
  rep.flagged = rep.max_normalized > opt.threshold;
  return rep;
}

inline BddReport bdd_normalized_residuals(const GridCase& c, const AdmittanceMatrix& y, const MeasurementVector& z,
                                          const EstimationResult& est, const BddOptions& opt = {}) {
  return bdd_normalized_residuals(MeasurementModel(c, y, z.layout), z, est, opt);
}

inline nlohmann::json to_json(const BddReport& r, const GridCase& c, const MeasurementLayout& layout) {
  nlohmann::json j;
  j["max_normalized_residual"] = r.max_normalized;
  j["argmax"] = r.argmax >= 0 ? layout.name(c, r.argmax) : "";
  j["flagged"] = r.flagged;
  j["threshold"] = r.threshold;
  j["normalized"] = std::vector<double>(r.normalized.data(), r.normalized.data() + r.normalized.size());
  j["critical"] = r.critical.size();
  return j;
}

}  // namespace fdia
