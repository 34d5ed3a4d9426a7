#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "fdia/core/rng.hpp"
#include "fdia/estimation/bdd.hpp"
#include "fdia/estimation/wls.hpp"
#include "fdia/power/power_flow.hpp"
#include "fdia/scenario/profile.hpp"

namespace fdia {

struct ScenarioConfig {
  double k = 0.1;          // load-following gain on the normalized scaler
  double sigma_s = 0.03;   // per-bus scale spread
  double sigma_n = 0.01;   // relative measurement noise
  double noise_floor = 1e-4;  // p.u. standard deviation floor
  double scale_min = 0.7;
  double scale_max = 1.3;
  int max_retries = 5;
  PowerFlowOptions power_flow{};
  EstimationOptions estimation{};
  double bdd_threshold = 3.0;
  bool record_bdd = true;

  void validate() const {
    if (!(k >= 0) || !(sigma_s >= 0) || !(sigma_n >= 0)) throw ConfigError("scenario coefficients must be non-negative");
    if (!(noise_floor > 0)) throw ConfigError("noise floor must be positive");
    if (!(scale_min > 0) || !(scale_min <= scale_max)) throw ConfigError("scale bounds must satisfy 0 < min <= max");
    if (max_retries < 0) throw ConfigError("max_retries must be non-negative");
  }
};

inline nlohmann::json to_json(const ScenarioConfig& c) {
  return {{"k", c.k},
          {"sigma_s", c.sigma_s},
          {"sigma_n", c.sigma_n},
          {"noise_floor", c.noise_floor},
          {"scale_min", c.scale_min},
          {"scale_max", c.scale_max},
          {"max_retries", c.max_retries},
          {"bdd_threshold", c.bdd_threshold}};
}

struct TimestepSample {
  MeasurementVector z;       // noisy measurements with their variances
  Eigen::VectorXd z_true;    // h(x_true)
  StateVector x_true;        // power-flow solution
  EstimationResult estimate;
  Eigen::VectorXd scales;    // realized per-bus scale, 1 where the bus is not scaled
  std::vector<bool> scaled;  // which buses received a draw
  int attempts = 1;
};

/// Buses whose demand or dispatch follows the scaler: any bus with load, and
/// PV buses for their active generation.
inline std::vector<bool> scalable_buses(const GridCase& c) {
  std::vector<bool> out(c.buses.size(), false);
  for (std::size_t i = 0; i < c.buses.size(); ++i) {
    const auto& b = c.buses[i];
    out[i] = b.p_load != 0 || b.q_load != 0 || b.kind == BusKind::pv;
  }
  return out;
}

inline GridCase scale_case(const GridCase& base, const Eigen::VectorXd& scales) {
  GridCase c = base;
  for (std::size_t i = 0; i < c.buses.size(); ++i) {
    auto& b = c.buses[i];
    const double s = scales[static_cast<Index>(i)];
    b.p_load *= s;
    b.q_load *= s;
    if (b.kind == BusKind::pv) b.p_gen *= s;
  }
  return c;
}

/// Noisy measurement vector around exact values. The noise has standard
/// deviation sigma_n |z|; the declared variance is max((sigma_n |z|)^2, floor^2)
/// so meters reading zero keep a finite weight.
inline MeasurementVector add_measurement_noise(const MeasurementLayout& layout, const Eigen::VectorXd& exact,
                                               double sigma_n, double floor, Rng& rng) {
  MeasurementVector z;
  z.layout = layout;
  z.values = exact;
  z.variances.resize(exact.size());
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (Index i = 0; i < exact.size(); ++i) {
    const double sd = sigma_n * std::abs(exact[i]);
    z.variances[i] = std::max(sd * sd, floor * floor);
    z.values[i] += sd * gauss(rng);
  }
  return z;
}

/// One honest snapshot: scale loads, solve the power flow, add noise, estimate.
/// A draw whose power flow or estimation fails is replaced by a fresh draw from
/// the same stream, up to `max_retries` times.
inline TimestepSample generate_timestep(const GridCase& c, const AdmittanceMatrix& y, const MeasurementModel& model,
                                        double s_t, Rng& rng, const ScenarioConfig& cfg = {}) {
  cfg.validate();
  const auto scalable = scalable_buses(c);
  const Index n = c.bus_count();
  std::string last_error;
  for (int attempt = 0; attempt <= cfg.max_retries; ++attempt) {
    TimestepSample out;
    out.attempts = attempt + 1;
    out.scaled = scalable;
    out.scales = Eigen::VectorXd::Ones(n);
    std::normal_distribution<double> draw(1.0 + cfg.k * s_t, cfg.sigma_s > 0 ? cfg.sigma_s : 1.0);
    for (Index i = 0; i < n; ++i) {
      if (!scalable[static_cast<std::size_t>(i)]) continue;
      const double s = cfg.sigma_s > 0 ? draw(rng) : 1.0 + cfg.k * s_t;
      out.scales[i] = std::clamp(s, cfg.scale_min, cfg.scale_max);
    }
    const GridCase scaled = scale_case(c, out.scales);
    try {
      out.x_true = run_power_flow(scaled, y, cfg.power_flow).x;
    } catch (const NumericalError& e) {
      last_error = e.what();
      continue;
    }
    out.z_true = model.evaluate(out.x_true);
    out.z = add_measurement_noise(model.layout(), out.z_true, cfg.sigma_n, cfg.noise_floor, rng);
    try {
      out.estimate = estimate_state(model, out.z, std::nullopt, cfg.estimation);
    } catch (const NumericalError& e) {
      last_error = e.what();
      continue;
    }
    return out;
  }
  throw NonConvergenceError("timestep failed after " + std::to_string(cfg.max_retries + 1) +
                            " attempts: " + last_error);
}

}  // namespace fdia
