#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/SparseLU>

#include "fdia/power/measurement.hpp"

namespace fdia {

struct PowerFlowOptions {
  double tolerance = 1e-8;  // p.u. mismatch, infinity norm
  int max_iterations = 20;
};

struct PowerFlowResult {
  StateVector x;
  int iterations = 0;
  double mismatch = 0;
};

/// Newton-Raphson AC power flow in polar coordinates from a flat start.
/// Unknowns: angles of non-slack buses and magnitudes of PQ buses.
inline PowerFlowResult run_power_flow(const GridCase& c, const AdmittanceMatrix& y,
                                      const PowerFlowOptions& opt = {}) {
  const Index n = c.bus_count();
  PowerFlowResult res;
  res.x = StateVector::flat(c);
  if (n == 1) return res;

  MeasurementLayout layout;
  Eigen::VectorXd target;
  std::vector<double> spec;
  for (Index i = 0; i < n; ++i)
    if (i != c.slack) {
      layout.entries.push_back({MeasurementKind::p_inj, i, -1, BranchEnd::from});
      spec.push_back(c.p_net(i));
    }
  std::vector<Index> pq;
  for (Index i = 0; i < n; ++i)
    if (c.buses[static_cast<std::size_t>(i)].kind == BusKind::pq) {
      layout.entries.push_back({MeasurementKind::q_inj, i, -1, BranchEnd::from});
      spec.push_back(c.q_net(i));
      pq.push_back(i);
    }
  target = Eigen::Map<const Eigen::VectorXd>(spec.data(), static_cast<Index>(spec.size()));
  const MeasurementModel model(c, y, layout);

  // Column selection: all angle columns, then magnitude columns of PQ buses.
  const Index unknowns = (n - 1) + static_cast<Index>(pq.size());
  std::vector<Index> column_map(static_cast<std::size_t>(2 * n - 1), -1);
  for (Index k = 0; k < n - 1; ++k) column_map[static_cast<std::size_t>(k)] = k;
  for (std::size_t k = 0; k < pq.size(); ++k)
    column_map[static_cast<std::size_t>(res.x.magnitude_column(pq[k]))] = n - 1 + static_cast<Index>(k);

  Eigen::SparseLU<SparseMatrix> lu;
  for (int it = 0;; ++it) {
    const Eigen::VectorXd mismatch = model.evaluate(res.x) - target;
    res.mismatch = mismatch.lpNorm<Eigen::Infinity>();
    res.iterations = it;
    if (!std::isfinite(res.mismatch))
      throw NonConvergenceError("power flow diverged (non-finite mismatch)");
    if (res.mismatch <= opt.tolerance) return res;
    if (it >= opt.max_iterations)
      throw NonConvergenceError("power flow did not converge in " + std::to_string(opt.max_iterations) +
                                " iterations (mismatch " + std::to_string(res.mismatch) + ")");

    const SparseMatrix full = model.jacobian(res.x);
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(static_cast<std::size_t>(full.nonZeros()));
    for (Index k = 0; k < full.outerSize(); ++k)
      for (SparseMatrix::InnerIterator j(full, k); j; ++j) {
        const Index col = column_map[static_cast<std::size_t>(j.col())];
        if (col >= 0) trips.emplace_back(j.row(), col, j.value());
      }
    SparseMatrix jac(layout.size(), unknowns);
    jac.setFromTriplets(trips.begin(), trips.end());
    jac.makeCompressed();
    lu.compute(jac);
    if (lu.info() != Eigen::Success) throw NumericalError("singular power-flow Jacobian");
    const Eigen::VectorXd dx = lu.solve(-mismatch);
    if (lu.info() != Eigen::Success || !dx.allFinite()) throw NumericalError("singular power-flow Jacobian");

    Index col = 0;
    for (Index i = 0; i < n; ++i)
      if (i != c.slack) res.x.va[i] += dx[col++];
    for (Index i : pq) {
      res.x.vm[i] += dx[col++];
      if (!(res.x.vm[i] > 0)) throw NonConvergenceError("power flow diverged (non-positive voltage)");
    }
  }
}

inline StateVector solve_power_flow(const GridCase& c, const AdmittanceMatrix& y, const PowerFlowOptions& opt = {}) {
  return run_power_flow(c, y, opt).x;
}

}  // namespace fdia
