#pragma once

#include <cmath>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "fdia/core/error.hpp"
#include "fdia/core/rng.hpp"
#include "fdia/grid/ybus.hpp"

namespace fdia {

struct GraphLaplacian {
  Index n = 0;
  SparseMatrix weights;    // W
  SparseMatrix laplacian;  // L = I - D^-1/2 W D^-1/2
  SparseMatrix scaled;     // 2 L / lambda_max - I
  double lambda_max = 2.0;
  bool lambda_converged = false;
  int lambda_iterations = 0;
};

/// W[i][j] = |Y[i][j]| off the diagonal, symmetrized as (W + W^T)/2.
inline SparseMatrix adjacency_from_ybus(const AdmittanceMatrix& y) {
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<std::size_t>(y.y.nonZeros()));
  for (Index k = 0; k < y.y.outerSize(); ++k) {
    for (ComplexSparse::InnerIterator it(y.y, k); it; ++it) {
      if (it.row() == it.col()) continue;
      const double w = 0.5 * std::abs(it.value());
      trips.emplace_back(it.row(), it.col(), w);
      trips.emplace_back(it.col(), it.row(), w);
    }
  }
  SparseMatrix w(y.n, y.n);
  w.setFromTriplets(trips.begin(), trips.end());
  w.prune(0.0);
  w.makeCompressed();
  return w;
}

struct PowerIterationResult {
  double value = 0;
  bool converged = false;
  int iterations = 0;
};

/// Largest eigenvalue of a symmetric PSD matrix. Stops once the eigen-residual
/// ||A v - rho v|| drops to `tol`.
inline PowerIterationResult largest_eigenvalue(const SparseMatrix& a, double tol = 1e-6,
                                               int max_iter = 1000) {
  const Index n = a.rows();
  Eigen::VectorXd v(n);
  for (Index i = 0; i < n; ++i)
    v[i] = 0.5 + static_cast<double>(splitmix64(static_cast<std::uint64_t>(i) + 17) >> 11) * 0x1.0p-53;
  // alternate signs: the top Laplacian eigenvector oscillates across edges
  for (Index i = 0; i < n; i += 2) v[i] = -v[i];
  v.normalize();
  PowerIterationResult out;
  for (int it = 1; it <= max_iter; ++it) {
    Eigen::VectorXd av = a * v;
    const double rho = v.dot(av);
    const double residual = (av - rho * v).norm();
    out.value = rho;
    out.iterations = it;
    if (residual <= tol) {
      out.converged = true;
      return out;
    }
    const double norm = av.norm();
    if (norm == 0) break;
    v = av / norm;
  }
  return out;
}

inline GraphLaplacian normalized_laplacian(const SparseMatrix& w) {
  GraphLaplacian g;
  g.n = w.rows();
  g.weights = w;
  Eigen::VectorXd degree = Eigen::VectorXd::Zero(g.n);
  for (Index k = 0; k < w.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(w, k); it; ++it) {
      if (it.value() < 0) throw ConfigError("negative edge weight");
      if (it.row() == it.col() && it.value() != 0) throw ConfigError("weight matrix has nonzero diagonal");
      degree[it.row()] += it.value();
    }
  if (g.n == 1) {
    // a lone vertex has no edges; treat L = [0]
    g.laplacian = SparseMatrix(1, 1);
    g.scaled = SparseMatrix(1, 1);
    g.scaled.insert(0, 0) = -1.0;
    g.lambda_max = 2.0;
    return g;
  }
  for (Index i = 0; i < g.n; ++i)
    if (!(degree[i] > 0)) throw ConfigError("isolated vertex " + std::to_string(i) + " in weight matrix");
  const Eigen::VectorXd inv_sqrt = degree.cwiseSqrt().cwiseInverse();

  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<std::size_t>(w.nonZeros() + g.n));
  for (Index i = 0; i < g.n; ++i) trips.emplace_back(i, i, 1.0);
  for (Index k = 0; k < w.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(w, k); it; ++it)
      trips.emplace_back(it.row(), it.col(), -inv_sqrt[it.row()] * it.value() * inv_sqrt[it.col()]);
  g.laplacian.resize(g.n, g.n);
  g.laplacian.setFromTriplets(trips.begin(), trips.end());
  g.laplacian.makeCompressed();

  const auto top = largest_eigenvalue(g.laplacian);
  g.lambda_converged = top.converged;
  g.lambda_iterations = top.iterations;
  g.lambda_max = top.converged ? top.value : 2.0;

  SparseMatrix eye(g.n, g.n);
  eye.setIdentity();
  g.scaled = (2.0 / g.lambda_max) * g.laplacian - eye;
  g.scaled.makeCompressed();
  return g;
}

/// W and L for a case in one go (the detector's graph).
inline GraphLaplacian case_laplacian(const GridCase& c) {
  return normalized_laplacian(adjacency_from_ybus(build_ybus(c)));
}

}  // namespace fdia
