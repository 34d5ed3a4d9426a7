#pragma once

#include <complex>
#include <vector>

#include <Eigen/Sparse>

#include "fdia/grid/case.hpp"

namespace fdia {

using Complex = std::complex<double>;
using ComplexSparse = Eigen::SparseMatrix<Complex>;
using SparseMatrix = Eigen::SparseMatrix<double>;

/// Two-port admittances of a pi-model branch with an off-nominal tap
/// t = tap * exp(j*shift) on the from side:
///   [I_f]   [yff  yft] [V_f]
///   [I_t] = [ytf  ytt] [V_t]
struct BranchAdmittance {
  Complex yff, yft, ytf, ytt;
};

inline BranchAdmittance branch_admittance(const Branch& br) {
  const Complex ys = 1.0 / Complex(br.r, br.x);
  const Complex half_charging(0.0, br.b_charging / 2.0);
  const Complex t = std::polar(br.tap, br.shift);
  BranchAdmittance a;
  a.ytt = ys + half_charging;
  a.yff = a.ytt / (br.tap * br.tap);
  a.yft = -ys / std::conj(t);
  a.ytf = -ys / t;
  return a;
}

struct AdmittanceMatrix {
  Index n = 0;
  ComplexSparse y;
  std::vector<BranchAdmittance> branch;  // per branch, same order as the case

  Complex operator()(Index i, Index j) const { return y.coeff(i, j); }
};

/// Bus admittance matrix from the branch pi-models and bus shunts.
inline AdmittanceMatrix build_ybus(const GridCase& c) {
  AdmittanceMatrix out;
  out.n = c.bus_count();
  out.branch.reserve(c.branches.size());
  std::vector<Eigen::Triplet<Complex>> trips;
  trips.reserve(4 * c.branches.size() + c.buses.size());
  for (const auto& br : c.branches) {
    const auto a = branch_admittance(br);
    out.branch.push_back(a);
    trips.emplace_back(br.from, br.from, a.yff);
    trips.emplace_back(br.from, br.to, a.yft);
    trips.emplace_back(br.to, br.from, a.ytf);
    trips.emplace_back(br.to, br.to, a.ytt);
  }
  for (Index i = 0; i < out.n; ++i) {
    const auto& b = c.buses[static_cast<std::size_t>(i)];
    trips.emplace_back(i, i, Complex(b.gs, b.bs));
  }
  out.y.resize(out.n, out.n);
  out.y.setFromTriplets(trips.begin(), trips.end());
  out.y.makeCompressed();
  return out;
}

}  // namespace fdia
