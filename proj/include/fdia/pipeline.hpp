#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <string>

#include <json.hpp>

#include "fdia/attack/attacked_dataset.hpp"
#include "fdia/core/csv.hpp"
#include "fdia/gnn/training.hpp"
#include "fdia/scenario/dataset.hpp"

namespace fdia {

/// Every setting of the end-to-end pipeline. NaN in `lambda_z`, `lambda_x`
/// and `tau_bdd` means "take the value from the preset".
struct RunConfig {
  std::string case_ref = "ieee14";
  std::string profile = "synthetic";
  Index steps = 2000;
  std::uint64_t seed = 2023;
  ScenarioConfig scenario{};

  std::string preset = "balanced";
  double lambda_z = std::numeric_limits<double>::quiet_NaN();
  double lambda_x = std::numeric_limits<double>::quiet_NaN();
  double eta = AttackConfig{}.eta;
  int attack_epochs = AttackConfig{}.epochs;
  double tau_freq = AttackConfig{}.tau_freq;
  double tau_loss = AttackConfig{}.tau_loss;
  Index radius_min = 0;
  Index radius_max = 0;

  std::string model = "gnn";
  Index batch_size = gnn::TrainConfig{}.batch_size;
  Index max_epochs = gnn::TrainConfig{}.max_epochs;
  Index patience = gnn::TrainConfig{}.patience;
  double lr = nn::OptimizerConfig{}.lr;
  bool paper_standardization = false;

  double tau_bdd = std::numeric_limits<double>::quiet_NaN();
  std::string residual_denominator = "sqrt";
};

namespace detail {

/// JSON has no infinities; they travel as the strings "inf" and "-inf".
inline nlohmann::json number_json(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return nullptr;
  return v;
}

inline double number_from_json(const nlohmann::json& j, const std::string& key) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf" || s == "+inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
  }
  if (j.is_null()) return std::numeric_limits<double>::quiet_NaN();
  throw ConfigError("config key '" + key + "' must be a number");
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace detail

inline nlohmann::json to_json(const RunConfig& r) {
  using detail::number_json;
  return {{"case", r.case_ref},
          {"profile", r.profile},
          {"T", r.steps},
          {"seed", r.seed},
          {"scenario", {{"k", r.scenario.k}, {"sigma_s", r.scenario.sigma_s}, {"sigma_n", r.scenario.sigma_n}}},
          {"preset", r.preset},
          {"attack",
           {{"lambda_z", number_json(r.lambda_z)},
            {"lambda_x", number_json(r.lambda_x)},
            {"eta", r.eta},
            {"epochs", r.attack_epochs},
            {"radius_min", r.radius_min},
            {"radius_max", r.radius_max}}},
          {"tau_freq", number_json(r.tau_freq)},
          {"tau_loss", number_json(r.tau_loss)},
          {"model", r.model},
          {"train",
           {{"batch_size", r.batch_size}, {"max_epochs", r.max_epochs}, {"patience", r.patience}, {"lr", r.lr}}},
          {"paper_standardization", r.paper_standardization},
          {"tau_bdd", number_json(r.tau_bdd)},
          {"residual_denominator", r.residual_denominator}};
}

/// Overwrites the settings present in `j` (same layout as to_json); unknown
/// keys are rejected.
inline void apply_json(RunConfig& r, const nlohmann::json& j) {
  using detail::number_from_json;
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  const auto section = [&](const nlohmann::json& s, const std::string& name, auto&& handle) {
    if (!s.is_object()) throw ConfigError("config section '" + name + "' must be an object");
    for (auto it = s.begin(); it != s.end(); ++it)
      if (!handle(it.key(), it.value())) throw ConfigError("unknown config key '" + name + "." + it.key() + "'");
  };
  try {
    for (auto it = j.begin(); it != j.end(); ++it) {
      const auto& k = it.key();
      const auto& v = it.value();
      if (k == "case") r.case_ref = v.get<std::string>();
      else if (k == "profile") r.profile = v.get<std::string>();
      else if (k == "T") r.steps = v.get<Index>();
      else if (k == "seed") r.seed = v.get<std::uint64_t>();
      else if (k == "preset") r.preset = v.get<std::string>();
      else if (k == "tau_freq") r.tau_freq = number_from_json(v, k);
      else if (k == "tau_loss") r.tau_loss = number_from_json(v, k);
      else if (k == "tau_bdd") r.tau_bdd = number_from_json(v, k);
      else if (k == "model") r.model = v.get<std::string>();
      else if (k == "paper_standardization") r.paper_standardization = v.get<bool>();
      else if (k == "residual_denominator") r.residual_denominator = v.get<std::string>();
      else if (k == "scenario")
        section(v, k, [&](const std::string& key, const nlohmann::json& x) {
          if (key == "k") r.scenario.k = x.get<double>();
          else if (key == "sigma_s") r.scenario.sigma_s = x.get<double>();
          else if (key == "sigma_n") r.scenario.sigma_n = x.get<double>();
          else return false;
          return true;
        });
      else if (k == "attack")
        section(v, k, [&](const std::string& key, const nlohmann::json& x) {
          if (key == "lambda_z") r.lambda_z = number_from_json(x, key);
          else if (key == "lambda_x") r.lambda_x = number_from_json(x, key);
          else if (key == "eta") r.eta = x.get<double>();
          else if (key == "epochs") r.attack_epochs = x.get<int>();
          else if (key == "radius_min") r.radius_min = x.get<Index>();
          else if (key == "radius_max") r.radius_max = x.get<Index>();
          else return false;
          return true;
        });
      else if (k == "train")
        section(v, k, [&](const std::string& key, const nlohmann::json& x) {
          if (key == "batch_size") r.batch_size = x.get<Index>();
          else if (key == "max_epochs") r.max_epochs = x.get<Index>();
          else if (key == "patience") r.patience = x.get<Index>();
          else if (key == "lr") r.lr = x.get<double>();
          else return false;
          return true;
        });
      else throw ConfigError("unknown config key '" + k + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
}

inline RunConfig load_run_config(const std::filesystem::path& path, RunConfig base = {}) {
  apply_json(base, detail::read_json(path));
  return base;
}

/// Stable fingerprint of the settings that shape results.
inline std::string config_hash(const RunConfig& r) { return detail::hex64(fnv1a(to_json(r).dump())); }

/// A case file path, or the name of a bundled case (ieee14, ieee118, ieee300).
inline GridCase resolve_case(const std::string& ref) {
  namespace fs = std::filesystem;
  if (fs::is_regular_file(ref)) return load_case(ref);
  const fs::path bundled = fs::path(FDIA_DATA_DIR) / "cases" / (ref + ".json");
  if (ref.find('/') == std::string::npos && fs::is_regular_file(bundled)) return load_case(bundled.string());
  throw ConfigError("case not found: " + ref);
}

/// `synthetic` or the path of a one-column load profile.
inline LoadProfile resolve_profile(const std::string& ref) {
  if (ref == "synthetic") return synthetic_profile();
  return ingest_profile(ref);
}

inline AttackConfig resolved_attack(const RunConfig& r) {
  AttackConfig a = attack_preset(r.preset);
  if (!std::isnan(r.lambda_z)) a.lambda_z = r.lambda_z;
  if (!std::isnan(r.lambda_x)) a.lambda_x = r.lambda_x;
  a.eta = r.eta;
  a.epochs = r.attack_epochs;
  a.tau_freq = r.tau_freq;
  a.tau_loss = r.tau_loss;
  a.radius_min = r.radius_min;
  a.radius_max = r.radius_max;
  a.validate();
  return a;
}

inline gnn::TrainConfig resolved_training(const RunConfig& r, nn::OptimizerKind optimizer) {
  gnn::TrainConfig t;
  t.batch_size = r.batch_size;
  t.max_epochs = r.max_epochs;
  t.patience = r.patience;
  t.optimizer.kind = optimizer;
  t.optimizer.lr = r.lr;
  t.seed = derive_seed(r.seed, "train");
  t.standardization = r.paper_standardization ? gnn::Standardization::per_split : gnn::Standardization::training_split;
  t.validate();
  return t;
}

inline double resolved_tau_bdd(const RunConfig& r, Index buses) {
  const double tau = std::isnan(r.tau_bdd) ? gnn::model_preset(buses).bdd_threshold : r.tau_bdd;
  if (!(tau > 0)) throw ConfigError("BDD threshold must be positive");
  return tau;
}

inline HonestDataset run_generate_data(const RunConfig& r, const GridCase& c) {
  return generate_dataset(c, resolve_profile(r.profile), r.steps, r.scenario, r.seed);
}

inline LabeledDataset run_generate_attacks(const RunConfig& r, const HonestDataset& honest, const GridCase& c,
                                           AttackCounts* counts = nullptr) {
  auto out = generate_attacked_dataset(honest, c, resolved_attack(r), r.seed, counts);
  out.meta["attack"]["preset"] = r.preset;
  return out;
}

/// Largest-normalized-residual test on every row of a split; a row whose
/// estimate does not converge counts as an alarm.
struct BddSplitResult {
  gnn::Metrics metrics;
  Eigen::VectorXd max_normalized;
  long estimation_failures = 0;
};

inline BddSplitResult run_bdd(const GridCase& c, const HonestDataset& d, const Eigen::VectorXd& labels,
                              gnn::SplitRange split, double threshold, ResidualDenominator denominator) {
  const auto y = build_ybus(c);
  const auto layout = MeasurementLayout::full(c);
  const MeasurementModel model(c, y, layout);
  EstimationOptions opt;
  opt.throw_on_failure = false;
  BddSplitResult out;
  out.max_normalized.resize(split.size());
  std::vector<bool> alarm(static_cast<std::size_t>(split.size()));
  for (Index i = 0; i < split.size(); ++i) {
    const auto z = d.measurements(layout, split.begin + i);
    EstimationResult est;
    try {
      est = estimate_state(model, z, std::nullopt, opt);
    } catch (const NumericalError&) {
      est.converged = false;
    }
    if (!est.converged) {
      ++out.estimation_failures;
      out.max_normalized[i] = std::numeric_limits<double>::infinity();
      alarm[static_cast<std::size_t>(i)] = true;
      continue;
    }
    const auto rep = bdd_normalized_residuals(model, z, est, {.threshold = threshold, .denominator = denominator});
    out.max_normalized[i] = rep.max_normalized;
    alarm[static_cast<std::size_t>(i)] = rep.flagged;
  }
  out.metrics = gnn::compute_metrics(gnn::rows_of(labels, split), alarm);
  return out;
}

struct TrainReport {
  gnn::Detector model;
  gnn::TrainResult result;
  gnn::TrainConfig config;
  gnn::Metrics validation, test;
  nlohmann::json metrics;
};

inline Eigen::VectorXd label_vector(const LabeledDataset& d) { return d.Y.cast<double>(); }

inline gnn::Architecture resolved_architecture(const RunConfig& r, Index buses, nn::OptimizerKind* optimizer) {
  const auto preset = gnn::model_preset(buses);
  const auto kind = gnn::parse_model_kind(r.model);
  if (optimizer) *optimizer = kind == gnn::ModelKind::gnn ? preset.gnn_optimizer : preset.mlp_optimizer;
  return kind == gnn::ModelKind::gnn ? preset.gnn : preset.mlp;
}

inline nlohmann::json split_sizes(const gnn::Splits& s) {
  return {{"train", s.train.size()}, {"validation", s.validation.size()}, {"test", s.test.size()}};
}

inline TrainReport run_train(const RunConfig& r, const LabeledDataset& d, const GridCase& c) {
  if (d.bus_count() != c.bus_count())
    throw ConfigError("dataset has " + std::to_string(d.bus_count()) + " buses, case '" + c.name + "' has " +
                      std::to_string(c.bus_count()));
  nn::OptimizerKind optimizer{};
  const auto arch = resolved_architecture(r, c.bus_count(), &optimizer);
  TrainReport rep{gnn::make_detector(c, arch), {}, resolved_training(r, optimizer), {}, {}, {}};
  const nn::Tensor x = gnn::injection_features(d);
  const Eigen::VectorXd y = label_vector(d);
  rep.result = gnn::train(rep.model, x, y, rep.config);
  rep.validation = gnn::evaluate(rep.model, x, y, rep.result.splits.validation, rep.config.standardization,
                                 rep.config.threshold);
  rep.test = gnn::evaluate(rep.model, x, y, rep.result.splits.test, rep.config.standardization, rep.config.threshold);
  rep.metrics = gnn::to_json(rep.test);
  rep.metrics["model"] = r.model;
  rep.metrics["case"] = c.name;
  rep.metrics["seed"] = r.seed;
  rep.metrics["config_hash"] = config_hash(r);
  rep.metrics["split_sizes"] = split_sizes(rep.result.splits);
  rep.metrics["validation"] = gnn::to_json(rep.validation);
  rep.metrics["parameter_count"] = rep.model.parameter_count();
  rep.metrics["best_epoch"] = rep.result.best_epoch;
  rep.metrics["epochs_run"] = rep.result.history.size();
  rep.metrics["stopped_early"] = rep.result.stopped_early;
  rep.metrics["best_validation_loss"] = rep.result.best_validation_loss;
  return rep;
}

inline void write_history(const std::filesystem::path& path, const gnn::TrainResult& r) {
  Eigen::MatrixXd h(static_cast<Index>(r.history.size()), 3);
  for (std::size_t i = 0; i < r.history.size(); ++i) {
    const auto row = static_cast<Index>(i);
    h(row, 0) = static_cast<double>(r.history[i].epoch);
    h(row, 1) = r.history[i].train_loss;
    h(row, 2) = r.history[i].validation_loss;
  }
  csv::write_table(path.string(), {"epoch", "train_loss", "validation_loss"}, h);
}

/// Checkpoint, metrics.json, history.csv and the resolved run config.
inline void write_train_outputs(const std::filesystem::path& dir, const RunConfig& r, TrainReport& rep) {
  std::filesystem::create_directories(dir);
  gnn::save_detector(dir, rep.model,
                     {{"case", rep.metrics["case"]},
                      {"seed", r.seed},
                      {"train", gnn::to_json(rep.config)},
                      {"config_hash", config_hash(r)}});
  detail::write_text(dir / "metrics.json", rep.metrics.dump(2) + "\n");
  write_history(dir / "history.csv", rep.result);
  detail::write_text(dir / "run.json", to_json(r).dump(2) + "\n");
}

/// Scores a saved detector on the test split of a labeled dataset and runs
/// the residual test on the same rows.
struct EvaluationReport {
  gnn::Metrics model;
  BddSplitResult bdd;
  nlohmann::json json;
};

inline EvaluationReport run_evaluate(const RunConfig& r, const std::filesystem::path& checkpoint,
                                     const LabeledDataset& d, const GridCase& c) {
  if (d.bus_count() != c.bus_count())
    throw ConfigError("dataset has " + std::to_string(d.bus_count()) + " buses, case '" + c.name + "' has " +
                      std::to_string(c.bus_count()));
  const auto manifest = nn::read_manifest(checkpoint);
  const gnn::Detector m = gnn::load_detector(checkpoint, c);
  gnn::TrainConfig tc;
  if (manifest.contains("train")) {
    const auto& t = manifest["train"];
    const auto split = t.at("split").get<std::vector<double>>();
    tc.train_fraction = split.at(0);
    tc.validation_fraction = split.at(1);
    tc.test_fraction = split.at(2);
    tc.threshold = t.at("threshold").get<double>();
    tc.standardization = t.at("standardization").get<std::string>() == "per-split"
                             ? gnn::Standardization::per_split
                             : gnn::Standardization::training_split;
  }
  const auto splits = gnn::make_splits(d.steps(), tc);
  const nn::Tensor x = gnn::injection_features(d);
  const Eigen::VectorXd y = label_vector(d);
  EvaluationReport rep;
  rep.model = gnn::evaluate(m, x, y, splits.test, tc.standardization, tc.threshold);
  const double tau = resolved_tau_bdd(r, c.bus_count());
  const auto denominator = parse_denominator(r.residual_denominator);
  rep.bdd = run_bdd(c, d, y, splits.test, tau, denominator);
  const std::string kind = manifest.at("architecture").at("kind").get<std::string>();
  rep.json = {{"case", c.name},
              {"split_sizes", split_sizes(splits)},
              {"model", gnn::to_json(rep.model)},
              {"bdd", gnn::to_json(rep.bdd.metrics)}};
  rep.json["model"]["kind"] = kind;
  rep.json["bdd"]["threshold"] = tau;
  rep.json["bdd"]["denominator"] = to_string(denominator);
  rep.json["bdd"]["estimation_failures"] = rep.bdd.estimation_failures;
  return rep;
}

}  // namespace fdia
