#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fdia/core/csv.hpp"
#include "fdia/scenario/generator.hpp"

namespace fdia {

/// Honest snapshots in row order: Z measurements, X state estimates (vm then
/// va), R measurement variances.
struct HonestDataset {
  nlohmann::json meta;
  std::vector<std::string> z_names;
  std::vector<std::string> x_names;
  Eigen::MatrixXd Z, X, R;

  Index steps() const { return Z.rows(); }
  Index bus_count() const { return X.cols() / 2; }

  MeasurementVector measurements(const MeasurementLayout& layout, Index t) const {
    MeasurementVector z;
    z.layout = layout;
    z.values = Z.row(t).transpose();
    z.variances = R.row(t).transpose();
    if (z.values.size() != layout.size()) throw ConfigError("dataset width does not match the measurement layout");
    return z;
  }
  StateVector state(Index t, Index slack) const { return StateVector::from_stacked(X.row(t).transpose(), slack); }
};

/// Honest dataset plus labels and per-attack records.
struct LabeledDataset : HonestDataset {
  Eigen::VectorXi Y;
  nlohmann::json attacks = nlohmann::json::array();
};

inline std::vector<std::string> state_names(const GridCase& c) {
  std::vector<std::string> out;
  for (Index i = 0; i < c.bus_count(); ++i) out.push_back("vm_" + std::to_string(c.original_id(i)));
  for (Index i = 0; i < c.bus_count(); ++i) out.push_back("va_" + std::to_string(c.original_id(i)));
  return out;
}

/// Dataset of honest snapshots. Row t depends only on (seed, t, config, case,
/// profile): its random stream is derived from the root seed and t.
inline HonestDataset generate_dataset(const GridCase& c, const LoadProfile& profile, Index steps,
                                      const ScenarioConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (steps < 1) throw ConfigError("T must be at least 1");
  const Eigen::VectorXd scaler = normalize_scaler(profile, steps);
  const auto y = build_ybus(c);
  const auto layout = MeasurementLayout::full(c);
  const MeasurementModel model(c, y, layout);

  HonestDataset ds;
  ds.z_names = layout.names(c);
  ds.x_names = state_names(c);
  ds.Z.resize(steps, layout.size());
  ds.R.resize(steps, layout.size());
  ds.X.resize(steps, 2 * c.bus_count());
  long retries = 0, flagged = 0;
  for (Index t = 0; t < steps; ++t) {
    auto rng = make_rng(seed, "scenario", static_cast<std::uint64_t>(t));
    const auto sample = generate_timestep(c, y, model, scaler[t], rng, cfg);
    retries += sample.attempts - 1;
    ds.Z.row(t) = sample.z.values.transpose();
    ds.R.row(t) = sample.z.variances.transpose();
    ds.X.row(t) = sample.estimate.x_hat.stacked().transpose();
    if (cfg.record_bdd)
      flagged += bdd_normalized_residuals(model, sample.z, sample.estimate, {.threshold = cfg.bdd_threshold}).flagged;
  }

  std::vector<int> ids;
  for (const auto& b : c.buses) ids.push_back(static_cast<int>(b.id));
  ds.meta = {{"seed", seed},
             {"case", c.name},
             {"T", steps},
             {"scenario", to_json(cfg)},
             {"profile", {{"label", profile.label}, {"samples", profile.size()},
                          {"resolution_minutes", profile.resolution_minutes}}},
             {"layout", {{"kind", "full"},
                         {"order", "p_inj per bus, q_inj per bus, then per branch p/q at from end and p/q at to end"},
                         {"measurements", layout.size()},
                         {"buses", c.bus_count()},
                         {"branches", c.branch_count()},
                         {"bus_ids", ids},
                         {"slack_id", c.original_id(c.slack)}}},
             {"retries", retries}};
  if (cfg.record_bdd)
    ds.meta["honest_bdd_flagged_fraction"] = static_cast<double>(flagged) / static_cast<double>(steps);
  return ds;
}

namespace detail {

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw ConfigError("cannot write " + p.string());
  os << text;
  if (!os) throw ConfigError("write failed: " + p.string());
}

inline nlohmann::json read_json(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw ConfigError("cannot open " + p.string());
  try {
    return nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(p.string() + ": " + e.what());
  }
}

}  // namespace detail

inline void write_dataset(const std::filesystem::path& dir, const HonestDataset& ds) {
  std::filesystem::create_directories(dir);
  detail::write_text(dir / "meta.json", ds.meta.dump(2) + "\n");
  csv::write_table((dir / "Z.csv").string(), ds.z_names, ds.Z);
  csv::write_table((dir / "X.csv").string(), ds.x_names, ds.X);
  csv::write_table((dir / "R.csv").string(), ds.z_names, ds.R);
}

inline void write_dataset(const std::filesystem::path& dir, const LabeledDataset& ds) {
  write_dataset(dir, static_cast<const HonestDataset&>(ds));
  csv::write_table((dir / "Y.csv").string(), {"label"}, ds.Y.cast<double>());
  detail::write_text(dir / "attacks.json", ds.attacks.dump(2) + "\n");
}

inline HonestDataset read_honest_dataset(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw ConfigError("dataset directory not found: " + dir.string());
  HonestDataset ds;
  ds.meta = detail::read_json(dir / "meta.json");
  auto z = csv::read_table((dir / "Z.csv").string());
  auto x = csv::read_table((dir / "X.csv").string());
  auto r = csv::read_table((dir / "R.csv").string());
  if (z.values.rows() != x.values.rows() || z.values.rows() != r.values.rows())
    throw ConfigError("dataset tables in " + dir.string() + " have different row counts");
  if (z.header != r.header) throw ConfigError("Z.csv and R.csv headers differ in " + dir.string());
  ds.z_names = std::move(z.header);
  ds.x_names = std::move(x.header);
  ds.Z = std::move(z.values);
  ds.X = std::move(x.values);
  ds.R = std::move(r.values);
  return ds;
}

inline LabeledDataset read_labeled_dataset(const std::filesystem::path& dir) {
  LabeledDataset ds;
  static_cast<HonestDataset&>(ds) = read_honest_dataset(dir);
  if (!std::filesystem::exists(dir / "Y.csv"))
    throw ConfigError("dataset " + dir.string() + " has no labels (Y.csv); run generate-attacks first");
  const auto y = csv::read_table((dir / "Y.csv").string());
  if (y.values.cols() != 1 || y.values.rows() != ds.steps())
    throw ConfigError("Y.csv must have one column and one row per timestep");
  ds.Y = y.values.col(0).cast<int>();
  if (std::filesystem::exists(dir / "attacks.json")) ds.attacks = detail::read_json(dir / "attacks.json");
  return ds;
}

}  // namespace fdia
