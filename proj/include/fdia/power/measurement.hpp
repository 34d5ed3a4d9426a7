#pragma once

#include <complex>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "fdia/core/error.hpp"
#include "fdia/grid/ybus.hpp"

namespace fdia {

/// Per-bus voltage magnitude (p.u.) and angle (rad); the slack angle is the
/// reference and stays at zero.
struct StateVector {
  Eigen::VectorXd vm;
  Eigen::VectorXd va;
  Index slack_index = 0;

  static StateVector flat(const GridCase& c) {
    StateVector x;
    x.vm = Eigen::VectorXd::Ones(c.bus_count());
    x.va = Eigen::VectorXd::Zero(c.bus_count());
    x.slack_index = c.slack;
    for (Index i = 0; i < c.bus_count(); ++i)
      if (c.buses[static_cast<std::size_t>(i)].is_generator()) x.vm[i] = c.buses[static_cast<std::size_t>(i)].v_set;
    return x;
  }

  Index size() const { return vm.size(); }

  Eigen::VectorXcd voltages() const {
    Eigen::VectorXcd v(vm.size());
    for (Index i = 0; i < vm.size(); ++i) v[i] = std::polar(vm[i], va[i]);
    return v;
  }

  /// Free variables: angles of all non-slack buses, then all magnitudes.
  Eigen::VectorXd parameters() const {
    const Index n = size();
    Eigen::VectorXd p(2 * n - 1);
    Index c = 0;
    for (Index i = 0; i < n; ++i)
      if (i != slack_index) p[c++] = va[i];
    p.tail(n) = vm;
    return p;
  }

  void set_parameters(const Eigen::VectorXd& p) {
    const Index n = size();
    Index c = 0;
    for (Index i = 0; i < n; ++i) va[i] = (i == slack_index) ? 0.0 : p[c++];
    vm = p.tail(n);
  }

  /// Column of the angle of `bus` in the parameter vector, -1 for the slack.
  Index angle_column(Index bus) const {
    if (bus == slack_index) return -1;
    return bus < slack_index ? bus : bus - 1;
  }
  Index magnitude_column(Index bus) const { return size() - 1 + bus; }
  Index parameter_count() const { return 2 * size() - 1; }

  /// Flattened as [vm..., va...]; the dataset row format.
  Eigen::VectorXd stacked() const {
    Eigen::VectorXd s(2 * size());
    s << vm, va;
    return s;
  }
  static StateVector from_stacked(const Eigen::VectorXd& s, Index slack) {
    StateVector x;
    const Index n = s.size() / 2;
    x.vm = s.head(n);
    x.va = s.tail(n);
    x.slack_index = slack;
    return x;
  }
};

enum class MeasurementKind { p_inj, q_inj, p_flow, q_flow };
enum class BranchEnd { from, to };

struct MeasurementEntry {
  MeasurementKind kind = MeasurementKind::p_inj;
  Index bus = -1;     // injections
  Index branch = -1;  // flows
  BranchEnd end = BranchEnd::from;

  bool is_injection() const { return kind == MeasurementKind::p_inj || kind == MeasurementKind::q_inj; }
  bool is_active() const { return kind == MeasurementKind::p_inj || kind == MeasurementKind::p_flow; }
  bool operator==(const MeasurementEntry&) const = default;
};

struct MeasurementLayout {
  std::vector<MeasurementEntry> entries;

  Index size() const { return static_cast<Index>(entries.size()); }
  const MeasurementEntry& operator[](Index k) const { return entries[static_cast<std::size_t>(k)]; }

  /// All P injections, all Q injections, then for each branch the from-end
  /// (P, Q) followed by the to-end (P, Q).
  static MeasurementLayout full(const GridCase& c) {
    MeasurementLayout l;
    const Index n = c.bus_count();
    l.entries.reserve(static_cast<std::size_t>(2 * n + 4 * c.branch_count()));
    for (Index i = 0; i < n; ++i) l.entries.push_back({MeasurementKind::p_inj, i, -1, BranchEnd::from});
    for (Index i = 0; i < n; ++i) l.entries.push_back({MeasurementKind::q_inj, i, -1, BranchEnd::from});
    for (Index b = 0; b < c.branch_count(); ++b) {
      l.entries.push_back({MeasurementKind::p_flow, -1, b, BranchEnd::from});
      l.entries.push_back({MeasurementKind::q_flow, -1, b, BranchEnd::from});
      l.entries.push_back({MeasurementKind::p_flow, -1, b, BranchEnd::to});
      l.entries.push_back({MeasurementKind::q_flow, -1, b, BranchEnd::to});
    }
    return l;
  }

  /// Index of an entry, -1 if absent.
  Index find(const MeasurementEntry& e) const {
    for (Index k = 0; k < size(); ++k)
      if ((*this)[k] == e) return k;
    return -1;
  }

  std::string name(const GridCase& c, Index k) const {
    const auto& e = (*this)[k];
    switch (e.kind) {
      case MeasurementKind::p_inj: return "p_inj_" + std::to_string(c.original_id(e.bus));
      case MeasurementKind::q_inj: return "q_inj_" + std::to_string(c.original_id(e.bus));
      default: break;
    }
    const auto& br = c.branches[static_cast<std::size_t>(e.branch)];
    const std::string prefix = e.kind == MeasurementKind::p_flow ? "p_flow_" : "q_flow_";
    return prefix + std::to_string(c.original_id(br.from)) + "_" + std::to_string(c.original_id(br.to)) +
           "_b" + std::to_string(e.branch) + (e.end == BranchEnd::from ? "_from" : "_to");
  }

  std::vector<std::string> names(const GridCase& c) const {
    std::vector<std::string> out;
    out.reserve(entries.size());
    for (Index k = 0; k < size(); ++k) out.push_back(name(c, k));
    return out;
  }

  /// Bus at which the meter sits (flow meters sit at their measured end).
  Index location(const GridCase& c, Index k) const {
    const auto& e = (*this)[k];
    if (e.is_injection()) return e.bus;
    const auto& br = c.branches[static_cast<std::size_t>(e.branch)];
    return e.end == BranchEnd::from ? br.from : br.to;
  }
};

struct MeasurementVector {
  MeasurementLayout layout;
  Eigen::VectorXd values;
  Eigen::VectorXd variances;

  Index size() const { return values.size(); }
  void validate() const {
    if (values.size() != layout.size() || variances.size() != layout.size())
      throw ConfigError("measurement vector length does not match its layout");
    for (Index k = 0; k < variances.size(); ++k)
      if (!(variances[k] > 0)) throw ConfigError("measurement variances must be positive");
  }
};

/// Evaluates h(x) and its Jacobian for a fixed network and layout. Injections
/// use the bus admittance matrix, flows the branch pi-models.
class MeasurementModel {
public:
  MeasurementModel(const GridCase& c, const AdmittanceMatrix& y, MeasurementLayout layout)
      : layout_(std::move(layout)), n_(c.bus_count()), slack_(c.slack), rows_(y.y), branch_y_(y.branch) {
    if (y.n != n_) throw ConfigError("admittance matrix does not match the case");
    ends_.reserve(c.branches.size());
    for (const auto& br : c.branches) ends_.push_back({br.from, br.to});
    for (const auto& e : layout_.entries) {
      if (e.is_injection() && (e.bus < 0 || e.bus >= n_)) throw ConfigError("layout bus out of range");
      if (!e.is_injection() && (e.branch < 0 || e.branch >= static_cast<Index>(ends_.size())))
        throw ConfigError("layout branch out of range");
    }
  }

  const MeasurementLayout& layout() const { return layout_; }
  Index bus_count() const { return n_; }
  Index slack() const { return slack_; }
  Index size() const { return layout_.size(); }

  Eigen::VectorXd evaluate(const StateVector& x) const {
    check(x);
    const Eigen::VectorXcd v = x.voltages();
    Eigen::VectorXd h(layout_.size());
    bool need_inj = false;
    for (const auto& e : layout_.entries) need_inj |= e.is_injection();
    Eigen::VectorXcd s_inj;
    if (need_inj) {
      const Eigen::VectorXcd current = rows_ * v;
      s_inj = v.cwiseProduct(current.conjugate());
    }
    for (Index k = 0; k < layout_.size(); ++k) {
      const auto& e = layout_[k];
      Complex s;
      if (e.is_injection()) {
        s = s_inj[e.bus];
      } else {
        s = branch_power(e, v);
      }
      h[k] = e.is_active() ? s.real() : s.imag();
    }
    return h;
  }

  /// d h / d parameters, columns as StateVector::parameters().
  SparseMatrix jacobian(const StateVector& x) const {
    check(x);
    const Eigen::VectorXcd v = x.voltages();
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(static_cast<std::size_t>(layout_.size()) * 8);
    std::vector<std::pair<Index, Complex>> row;
    for (Index k = 0; k < layout_.size(); ++k) {
      const auto& e = layout_[k];
      Index a;
      row.clear();
      if (e.is_injection()) {
        a = e.bus;
        for (RowMajorComplex::InnerIterator it(rows_, a); it; ++it) row.emplace_back(it.col(), it.value());
      } else {
        const auto [f, t] = ends_[static_cast<std::size_t>(e.branch)];
        const auto& by = branch_y_[static_cast<std::size_t>(e.branch)];
        if (e.end == BranchEnd::from) {
          a = f;
          row.emplace_back(f, by.yff);
          row.emplace_back(t, by.yft);
        } else {
          a = t;
          row.emplace_back(f, by.ytf);
          row.emplace_back(t, by.ytt);
        }
      }
      // S = V_a conj(I), I = sum_j Y_aj V_j
      Complex current(0, 0);
      for (const auto& [j, yaj] : row) current += yaj * v[j];
      const Complex va = v[a];
      for (const auto& [j, yaj] : row) {
        const Complex unit = v[j] / x.vm[j];
        Complex d_ang = -Complex(0, 1) * va * std::conj(yaj * v[j]);
        Complex d_mag = va * std::conj(yaj * unit);
        if (j == a) {
          d_ang += Complex(0, 1) * va * std::conj(current);
          d_mag += unit * std::conj(current);
        }
        const bool active = e.is_active();
        const Index ca = x.angle_column(j);
        if (ca >= 0) trips.emplace_back(k, ca, active ? d_ang.real() : d_ang.imag());
        trips.emplace_back(k, x.magnitude_column(j), active ? d_mag.real() : d_mag.imag());
      }
    }
    SparseMatrix h(layout_.size(), 2 * n_ - 1);
    h.setFromTriplets(trips.begin(), trips.end());
    h.makeCompressed();
    return h;
  }

private:
  using RowMajorComplex = Eigen::SparseMatrix<Complex, Eigen::RowMajor>;

  void check(const StateVector& x) const {
    if (x.size() != n_ || x.va.size() != n_) throw ConfigError("state dimension does not match the case");
  }

  Complex branch_power(const MeasurementEntry& e, const Eigen::VectorXcd& v) const {
    const auto [f, t] = ends_[static_cast<std::size_t>(e.branch)];
    const auto& by = branch_y_[static_cast<std::size_t>(e.branch)];
    if (e.end == BranchEnd::from) return v[f] * std::conj(by.yff * v[f] + by.yft * v[t]);
    return v[t] * std::conj(by.ytf * v[f] + by.ytt * v[t]);
  }

  MeasurementLayout layout_;
  Index n_;
  Index slack_;
  RowMajorComplex rows_;
  std::vector<BranchAdmittance> branch_y_;
  std::vector<std::pair<Index, Index>> ends_;
};

inline Eigen::VectorXd measurement_function(const AdmittanceMatrix& y, const GridCase& c, const StateVector& x,
                                            const MeasurementLayout& layout) {
  return MeasurementModel(c, y, layout).evaluate(x);
}

inline SparseMatrix jacobian(const AdmittanceMatrix& y, const GridCase& c, const StateVector& x,
                             const MeasurementLayout& layout) {
  return MeasurementModel(c, y, layout).jacobian(x);
}

}  // namespace fdia
