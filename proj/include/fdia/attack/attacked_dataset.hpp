#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <tuple>

#include <json.hpp>

#include "fdia/attack/stealth.hpp"
#include "fdia/estimation/wls.hpp"
#include "fdia/scenario/dataset.hpp"

namespace fdia {

struct AttackCounts {
  long attempted = 0;
  long empty_area = 0;
  long rejected = 0;
  long accepted = 0;
  long estimation_failures = 0;
};

/// Splices stealth attacks into an honest dataset. At each timestep an attack
/// is attempted when a standard normal draw exceeds tau_freq; the entry bus is
/// uniform over buses and the radius uniform over [radius_min, radius_max].
/// Accepted attacks overwrite Z on t_z, re-estimate X from the operator's
/// previous estimate, and set Y = 1.
inline LabeledDataset generate_attacked_dataset(const HonestDataset& honest, const GridCase& c,
                                                AttackConfig cfg, std::uint64_t seed,
                                                AttackCounts* counts_out = nullptr) {
  cfg.validate();
  if (cfg.radius_min == 0 && cfg.radius_max == 0) std::tie(cfg.radius_min, cfg.radius_max) = default_radii(c.bus_count());
  if (cfg.radius_min < 1) throw ConfigError("attack radius must be at least 1 hop");
  const auto y = build_ybus(c);
  const auto layout = MeasurementLayout::full(c);
  if (honest.Z.cols() != layout.size() || honest.bus_count() != c.bus_count())
    throw ConfigError("dataset does not match case " + c.name);
  const MeasurementModel model(c, y, layout);
  EstimationOptions est_opt;
  est_opt.throw_on_failure = false;

  LabeledDataset out;
  static_cast<HonestDataset&>(out) = honest;
  out.Y = Eigen::VectorXi::Zero(honest.steps());
  out.attacks = nlohmann::json::array();
  AttackCounts counts;

  for (Index t = 0; t < honest.steps(); ++t) {
    auto rng = make_rng(seed, "attack", static_cast<std::uint64_t>(t));
    std::normal_distribution<double> freq(0.0, 1.0);
    if (!(freq(rng) > cfg.tau_freq)) continue;
    ++counts.attempted;
    const Index entry = std::uniform_int_distribution<Index>(0, c.bus_count() - 1)(rng);
    const Index radius = std::uniform_int_distribution<Index>(cfg.radius_min, cfg.radius_max)(rng);
    TargetArea area;
    try {
      area = select_target_area(c, layout, entry, radius);
    } catch (const EmptyTargetAreaError&) {
      ++counts.empty_area;
      continue;
    }
    const MeasurementVector z = honest.measurements(layout, t);
    const StateVector x_hat = honest.state(t, c.slack);
    const auto res = generate_stealth_attack(model, z.values, x_hat, area, cfg, rng);
    if (!res.accepted) {
      ++counts.rejected;
      continue;
    }
    ++counts.accepted;
    MeasurementVector za = z;
    za.values = res.z_a;
    const auto est = estimate_state(model, za, x_hat, est_opt);
    if (!est.converged) ++counts.estimation_failures;
    out.Z.row(t) = res.z_a.transpose();
    out.X.row(t) = est.x_hat.stacked().transpose();
    out.Y[t] = 1;

    std::vector<int> bus_ids;
    for (Index b : area.buses) bus_ids.push_back(static_cast<int>(c.original_id(b)));
    out.attacks.push_back({{"t", t},
                           {"p", c.original_id(entry)},
                           {"r", radius},
                           {"buses", bus_ids},
                           {"loss", res.loss.total},
                           {"L_z", res.loss.lz},
                           {"L_x", res.loss.lx},
                           {"max_abs_dV", (res.x_check.vm - x_hat.vm).cwiseAbs().maxCoeff()},
                           {"max_abs_dtheta", (res.x_check.va - x_hat.va).cwiseAbs().maxCoeff()},
                           {"max_abs_dz", (res.z_a - z.values).cwiseAbs().maxCoeff()},
                           {"epochs", res.epochs},
                           {"psse_converged", est.converged}});
  }

  out.meta["attack"] = to_json(cfg);
  out.meta["attack"]["seed"] = seed;
  out.meta["attack"]["counts"] = {{"attempted", counts.attempted},
                                  {"empty_area", counts.empty_area},
                                  {"rejected", counts.rejected},
                                  {"accepted", counts.accepted},
                                  {"estimation_failures", counts.estimation_failures}};
  out.meta["attack"]["positive_fraction"] =
      honest.steps() > 0 ? static_cast<double>(counts.accepted) / static_cast<double>(honest.steps()) : 0.0;
  if (counts_out) *counts_out = counts;
  return out;
}

}  // namespace fdia
