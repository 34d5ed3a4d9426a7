#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/SparseCholesky>

#include "fdia/power/measurement.hpp"

namespace fdia {

struct EstimationOptions {
  double tolerance = 1e-8;  // on ||dx||_inf
  int max_iterations = 50;
  int max_halvings = 5;
  bool throw_on_failure = true;
};

struct EstimationResult {
  StateVector x_hat;
  bool converged = false;
  int iterations = 0;
  double objective = 0;                  // (z - h)^T R^-1 (z - h) at x_hat
  std::vector<double> objective_history;  // one entry per accepted iterate, starting at x0
};

namespace detail {

/// G = H^T W H with a rank check on the LDL^T pivots.
inline void factor_gain(Eigen::SimplicialLDLT<SparseMatrix>& ldlt, const SparseMatrix& h,
                        const Eigen::VectorXd& weights) {
  const SparseMatrix gain = SparseMatrix(h.transpose() * weights.asDiagonal() * h);
  ldlt.compute(gain);
  if (ldlt.info() != Eigen::Success) throw UnobservableError("gain matrix factorization failed");
  const Eigen::VectorXd d = ldlt.vectorD();
  const double scale = d.cwiseAbs().maxCoeff();
  if (!(scale > 0) || d.minCoeff() <= 1e-12 * scale)
    throw UnobservableError("gain matrix is rank deficient; layout is unobservable");
}

inline double weighted_sse(const Eigen::VectorXd& r, const Eigen::VectorXd& w) {
  return r.cwiseProduct(r).dot(w);
}

}  // namespace detail

/// Weighted least squares state estimation by Gauss-Newton with step halving.
inline EstimationResult estimate_state(const MeasurementModel& model, const MeasurementVector& z,
                                       const std::optional<StateVector>& x0, const EstimationOptions& opt = {}) {
  z.validate();
  if (!(z.layout.entries == model.layout().entries))
    throw ConfigError("measurement vector layout differs from the model layout");
  const Index n = model.bus_count();
  const Index unknowns = 2 * n - 1;
  if (z.size() < unknowns)
    throw UnobservableError("only " + std::to_string(z.size()) + " measurements for " +
                            std::to_string(unknowns) + " state variables");

  EstimationResult res;
  if (x0) {
    res.x_hat = *x0;
  } else {
    res.x_hat.vm = Eigen::VectorXd::Ones(n);
    res.x_hat.va = Eigen::VectorXd::Zero(n);
    res.x_hat.slack_index = model.slack();
  }
  res.x_hat.va[res.x_hat.slack_index] = 0.0;
  const Eigen::VectorXd w = z.variances.cwiseInverse();

  Eigen::VectorXd r = z.values - model.evaluate(res.x_hat);
  double obj = detail::weighted_sse(r, w);
  res.objective_history.push_back(obj);
  Eigen::SimplicialLDLT<SparseMatrix> ldlt;

  for (int it = 1; it <= opt.max_iterations; ++it) {
    res.iterations = it;
    const SparseMatrix h = model.jacobian(res.x_hat);
    detail::factor_gain(ldlt, h, w);
    const Eigen::VectorXd dx = ldlt.solve(h.transpose() * w.cwiseProduct(r));
    if (!dx.allFinite()) throw NumericalError("non-finite Gauss-Newton step");

    const Eigen::VectorXd p0 = res.x_hat.parameters();
    StateVector trial = res.x_hat;
    double step = 1.0;
    double trial_obj = 0;
    Eigen::VectorXd trial_r;
    bool accepted = false;
    for (int halving = 0; halving <= opt.max_halvings; ++halving) {
      trial.set_parameters(p0 + step * dx);
      if ((trial.vm.array() > 0).all()) {
        trial_r = z.values - model.evaluate(trial);
        trial_obj = detail::weighted_sse(trial_r, w);
        if (std::isfinite(trial_obj) && trial_obj <= obj * (1 + 1e-12) + 1e-300) {
          accepted = true;
          break;
        }
      }
      step *= 0.5;
    }
    const double step_norm = step * dx.lpNorm<Eigen::Infinity>();
    if (!accepted) {
      // no descent along the Gauss-Newton direction: we are at the floor
      res.converged = dx.lpNorm<Eigen::Infinity>() <= std::sqrt(opt.tolerance);
      break;
    }
    res.x_hat = trial;
    r = trial_r;
    obj = std::min(trial_obj, obj);
    res.objective_history.push_back(obj);
    if (step_norm <= opt.tolerance) {
      res.converged = true;
      break;
    }
  }
  res.objective = obj;
  if (!res.converged && opt.throw_on_failure)
    throw NonConvergenceError("state estimation did not converge in " + std::to_string(res.iterations) +
                              " iterations");
  return res;
}

inline EstimationResult estimate_state(const GridCase& c, const AdmittanceMatrix& y, const MeasurementVector& z,
                                       const std::optional<StateVector>& x0 = std::nullopt,
                                       const EstimationOptions& opt = {}) {
  return estimate_state(MeasurementModel(c, y, z.layout), z, x0, opt);
}

}  // namespace fdia
