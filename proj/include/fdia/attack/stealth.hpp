#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "fdia/core/rng.hpp"
#include "fdia/power/measurement.hpp"

namespace fdia {

/// The exclusion rules left nothing for the attacker to change.
class EmptyTargetAreaError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Buses the attacker manipulates, the state parameters it moves (columns of
/// StateVector::parameters) and the meters it overwrites (layout indices).
struct TargetArea {
  Index entry = -1;
  Index radius = 0;
  std::vector<Index> buses;
  std::vector<Index> t_x;
  std::vector<Index> t_z;

  bool contains_bus(Index b) const { return std::binary_search(buses.begin(), buses.end(), b); }
};

/// BFS ball around `entry` without generator and zero-injection buses. Meters
/// are compromised only if changing them cannot break KCL at an untouched bus:
/// injections at target buses, and flows on branches whose two ends are both
/// target buses.
inline TargetArea select_target_area(const GridCase& c, const MeasurementLayout& layout, Index entry,
                                     Index radius) {
  TargetArea a;
  a.entry = entry;
  a.radius = radius;
  for (Index b : k_hop_neighborhood(c, entry, radius)) {
    const auto& bus = c.buses[static_cast<std::size_t>(b)];
    if (bus.is_generator() || bus.is_zero_injection()) continue;
    a.buses.push_back(b);
  }
  if (a.buses.empty())
    throw EmptyTargetAreaError("no attackable bus within " + std::to_string(radius) + " hops of bus " +
                               std::to_string(c.original_id(entry)));
  const Index n = c.bus_count();
  for (Index b : a.buses) {
    if (b != c.slack) a.t_x.push_back(b < c.slack ? b : b - 1);
  }
  for (Index b : a.buses) a.t_x.push_back(n - 1 + b);
  std::sort(a.t_x.begin(), a.t_x.end());
  for (Index k = 0; k < layout.size(); ++k) {
    const auto& e = layout[k];
    bool inside;
    if (e.is_injection()) {
      inside = a.contains_bus(e.bus);
    } else {
      const auto& br = c.branches[static_cast<std::size_t>(e.branch)];
      inside = a.contains_bus(br.from) && a.contains_bus(br.to);
    }
    if (inside) a.t_z.push_back(k);
  }
  return a;
}

struct AttackConfig {
  double lambda_z = 1.0;
  double lambda_x = 1.0;
  double eta = 1e-5;
  int epochs = 1000;
  double sigma_init = 0.005;
  double tau_freq = 1.0;
  double tau_loss = 0.1;
  Index radius_min = 0;  // 0: pick from the case size
  Index radius_max = 0;
  double vm_min = 0.9, vm_max = 1.1;
  double va_min = -std::numbers::pi, va_max = std::numbers::pi;
  int patience = 50;
  double min_improvement = 1e-9;

  void validate() const {
    if (!(lambda_z >= 0) || !(lambda_x >= 0)) throw ConfigError("loss weights must be non-negative");
    if (!(eta > 0) || epochs < 0 || !(sigma_init >= 0)) throw ConfigError("attack optimizer settings out of range");
    if (!(vm_min < vm_max) || !(va_min < va_max)) throw ConfigError("attack box bounds are empty");
    if (radius_min < 0 || radius_max < radius_min) throw ConfigError("attack radius range is invalid");
    if (patience < 1) throw ConfigError("patience must be positive");
  }
};

/// Loss weight presets: cautious (10, 1), balanced (1, 1), aggressive (1, 10).
inline AttackConfig attack_preset(const std::string& name) {
  AttackConfig c;
  if (name == "cautious") {
    c.lambda_z = 10;
    c.lambda_x = 1;
  } else if (name == "balanced") {
  } else if (name == "aggressive") {
    c.lambda_z = 1;
    c.lambda_x = 10;
  } else {
    throw ConfigError("unknown attack preset '" + name + "' (cautious, balanced, aggressive)");
  }
  return c;
}

/// Default (min, max) hop radius: 14 -> (2, 3), 118 -> (3, 4), 300 -> (6, 8);
/// other sizes use the nearest of these.
inline std::pair<Index, Index> default_radii(Index bus_count) {
  if (bus_count < 60) return {2, 3};
  if (bus_count < 200) return {3, 4};
  return {6, 8};
}

inline nlohmann::json to_json(const AttackConfig& a) {
  return {{"lambda_z", a.lambda_z}, {"lambda_x", a.lambda_x}, {"eta", a.eta},
          {"epochs", a.epochs},     {"sigma_init", a.sigma_init}, {"tau_freq", a.tau_freq},
          {"tau_loss", a.tau_loss}, {"radius_min", a.radius_min}, {"radius_max", a.radius_max},
          {"vm_bounds", {a.vm_min, a.vm_max}}, {"va_bounds", {a.va_min, a.va_max}},
          {"patience", a.patience}, {"min_improvement", a.min_improvement}};
}

struct AttackLoss {
  double total = 0;
  double lz = 0;  // RSS of measurement change outside t_z
  double lx = 0;  // sum of |state change| over t_x
};

/// L = lambda_z L_z - lambda_x L_x with L_z over meters outside t_z and L_x over
/// state parameters inside t_x.
inline AttackLoss attack_loss(const Eigen::VectorXd& z_a, const Eigen::VectorXd& z_o, const StateVector& x_check,
                              const StateVector& x_hat, const TargetArea& area, double lambda_z, double lambda_x) {
  if (z_a.size() != z_o.size()) throw ConfigError("measurement vectors differ in length");
  std::vector<bool> in_tz(static_cast<std::size_t>(z_a.size()), false);
  for (Index k : area.t_z) in_tz[static_cast<std::size_t>(k)] = true;
  double ss = 0;
  for (Index i = 0; i < z_a.size(); ++i)
    if (!in_tz[static_cast<std::size_t>(i)]) ss += (z_a[i] - z_o[i]) * (z_a[i] - z_o[i]);
  const Eigen::VectorXd pc = x_check.parameters(), ph = x_hat.parameters();
  AttackLoss l;
  l.lz = std::sqrt(ss);
  for (Index j : area.t_x) l.lx += std::abs(pc[j] - ph[j]);
  l.total = lambda_z * l.lz - lambda_x * l.lx;
  return l;
}

namespace detail {

inline double sign0(double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); }

inline std::vector<bool> outside_mask(Index m, const TargetArea& area) {
  std::vector<bool> out(static_cast<std::size_t>(m), true);
  for (Index k : area.t_z) out[static_cast<std::size_t>(k)] = false;
  return out;
}

}  // namespace detail

/// d L / d parameters, zero outside t_x. The L_z part is H^T u with u the unit
/// residual direction on meters outside t_z; |.| has derivative 0 at 0.
inline Eigen::VectorXd attack_gradient(const MeasurementModel& model, const StateVector& x_check,
                                       const StateVector& x_hat, const Eigen::VectorXd& z_o, const TargetArea& area,
                                       double lambda_z, double lambda_x) {
  const Index np = x_check.parameter_count();
  Eigen::VectorXd g = Eigen::VectorXd::Zero(np);
  if (lambda_z != 0) {
    const auto outside = detail::outside_mask(model.size(), area);
    Eigen::VectorXd u = model.evaluate(x_check) - z_o;
    for (Index i = 0; i < u.size(); ++i)
      if (!outside[static_cast<std::size_t>(i)]) u[i] = 0;
    const double lz = u.norm();
    if (lz > 0) g = lambda_z * (model.jacobian(x_check).transpose() * (u / lz));
  }
  const Eigen::VectorXd pc = x_check.parameters(), ph = x_hat.parameters();
  Eigen::VectorXd masked = Eigen::VectorXd::Zero(np);
  for (Index j : area.t_x) masked[j] = g[j] - lambda_x * detail::sign0(pc[j] - ph[j]);
  return masked;
}

struct AttackResult {
  Eigen::VectorXd z_a;  // attacked measurement values
  StateVector x_check;
  AttackLoss loss;
  bool accepted = false;
  int epochs = 0;
  std::vector<double> loss_history;  // initial point, then one entry per epoch
  TargetArea area;
};

namespace detail {

inline void project(StateVector& x, const TargetArea& area, const AttackConfig& cfg) {
  for (Index b : area.buses) {
    x.vm[b] = std::clamp(x.vm[b], cfg.vm_min, cfg.vm_max);
    if (b != x.slack_index) x.va[b] = std::clamp(x.va[b], cfg.va_min, cfg.va_max);
  }
}

}  // namespace detail

/// Projected gradient descent on the attacker loss starting from a noisy copy
/// of the operator's estimate. Only t_x moves. Stops after `epochs` steps or
/// when the best loss has not improved by `min_improvement` for `patience`
/// epochs; the best iterate is returned. The attacked vector adds the change
/// h(x_check) - h(x_hat) to the observed values on t_z and leaves every other
/// meter untouched.
inline AttackResult generate_stealth_attack(const MeasurementModel& model, const Eigen::VectorXd& z_observed,
                                            const StateVector& x_hat, const TargetArea& area,
                                            const AttackConfig& cfg, Rng& rng) {
  cfg.validate();
  if (z_observed.size() != model.size()) throw ConfigError("observed measurements do not match the model");
  const Eigen::VectorXd z_ref = model.evaluate(x_hat);

  StateVector x = x_hat;
  std::normal_distribution<double> init(0.0, 1.0);
  Eigen::VectorXd p = x.parameters();
  for (Index j : area.t_x) p[j] += cfg.sigma_init * init(rng);
  x.set_parameters(p);
  detail::project(x, area, cfg);

  auto loss_at = [&](const StateVector& s) {
    return attack_loss(model.evaluate(s), z_ref, s, x_hat, area, cfg.lambda_z, cfg.lambda_x);
  };

  AttackResult res;
  res.area = area;
  AttackLoss current = loss_at(x);
  res.loss_history.push_back(current.total);
  StateVector best = x;
  AttackLoss best_loss = current;
  int stale = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const Eigen::VectorXd g = attack_gradient(model, x, x_hat, z_ref, area, cfg.lambda_z, cfg.lambda_x);
    x.set_parameters(x.parameters() - cfg.eta * g);
    detail::project(x, area, cfg);
    current = loss_at(x);
    res.loss_history.push_back(current.total);
    res.epochs = epoch;
    if (current.total < best_loss.total - cfg.min_improvement) {
      best = x;
      best_loss = current;
      stale = 0;
    } else if (++stale >= cfg.patience) {
      break;
    }
  }

  res.x_check = best;
  res.loss = best_loss;
  res.accepted = best_loss.total < cfg.tau_loss;
  const Eigen::VectorXd delta = model.evaluate(best) - z_ref;
  res.z_a = z_observed;
  for (Index k : area.t_z) res.z_a[k] += delta[k];
  return res;
}

}  // namespace fdia
