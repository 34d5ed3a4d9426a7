#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "fdia/core/rng.hpp"
#include "fdia/gnn/detector.hpp"
#include "fdia/nn/checkpoint.hpp"
#include "fdia/nn/optimizer.hpp"

namespace fdia::gnn {

/// How features are standardized. `training_split` fits once on the training
/// rows and reuses that fit everywhere; `per_split` fits every split on its
/// own rows.
enum class Standardization { training_split, per_split };

inline const char* to_string(Standardization s) {
  return s == Standardization::training_split ? "training-split" : "per-split";
}

struct TrainConfig {
  Index batch_size = 64;
  Index max_epochs = 128;
  Index patience = 16;
  nn::OptimizerConfig optimizer{};
  double train_fraction = 0.6;
  double validation_fraction = 0.2;
  double test_fraction = 0.2;
  std::uint64_t seed = 0;
  Standardization standardization = Standardization::training_split;
  double threshold = 0.5;

  void validate() const {
    if (batch_size < 1) throw ConfigError("batch size must be at least 1");
    if (max_epochs < 1) throw ConfigError("max epochs must be at least 1");
    if (patience < 1) throw ConfigError("patience must be at least 1");
    if (!(optimizer.lr > 0)) throw ConfigError("learning rate must be positive");
    if (train_fraction <= 0 || validation_fraction <= 0 || test_fraction <= 0)
      throw ConfigError("split fractions must be positive");
    if (std::abs(train_fraction + validation_fraction + test_fraction - 1.0) > 1e-9)
      throw ConfigError("split fractions must sum to 1");
    if (!(threshold > 0 && threshold < 1)) throw ConfigError("decision threshold must lie in (0, 1)");
  }
};

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"batch_size", c.batch_size},
          {"max_epochs", c.max_epochs},
          {"patience", c.patience},
          {"optimizer", nn::to_json(c.optimizer)},
          {"split", {c.train_fraction, c.validation_fraction, c.test_fraction}},
          {"seed", c.seed},
          {"standardization", to_string(c.standardization)},
          {"threshold", c.threshold},
          {"init", "glorot-uniform weights, zero biases"}};
}

struct SplitRange {
  Index begin = 0;
  Index end = 0;
  Index size() const { return end - begin; }
};

/// Contiguous time-ordered split: training rows first, then validation, then test.
struct Splits {
  SplitRange train, validation, test;
};

inline Splits make_splits(Index rows, const TrainConfig& cfg) {
  Splits s;
  const auto n_train = static_cast<Index>(std::floor(cfg.train_fraction * static_cast<double>(rows) + 1e-9));
  const auto n_val = static_cast<Index>(std::floor(cfg.validation_fraction * static_cast<double>(rows) + 1e-9));
  s.train = {0, n_train};
  s.validation = {n_train, n_train + n_val};
  s.test = {n_train + n_val, rows};
  if (s.train.size() < 1 || s.validation.size() < 1 || s.test.size() < 1)
    throw ConfigError("dataset of " + std::to_string(rows) + " rows is too small to split");
  return s;
}

/// Classification counts and rates at a fixed threshold. A rate whose
/// denominator is zero is reported as 0 and flagged.
struct Metrics {
  long tp = 0, fp = 0, tn = 0, fn = 0;
  double dr = 0, fa = 0, f1 = 0;
  bool dr_undefined = false, fa_undefined = false, f1_undefined = false;

  long total() const { return tp + fp + tn + fn; }
};

inline Metrics compute_metrics(long tp, long fp, long tn, long fn) {
  Metrics m{tp, fp, tn, fn};
  if (tp + fn > 0) m.dr = static_cast<double>(tp) / static_cast<double>(tp + fn);
  else m.dr_undefined = true;
  if (fp + tn > 0) m.fa = static_cast<double>(fp) / static_cast<double>(fp + tn);
  else m.fa_undefined = true;
  if (2 * tp + fp + fn > 0) m.f1 = 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
  else m.f1_undefined = true;
  return m;
}

inline Metrics compute_metrics(const Eigen::VectorXd& labels, const std::vector<bool>& alarm) {
  if (labels.size() == 0) throw ConfigError("cannot score an empty split");
  if (static_cast<std::size_t>(labels.size()) != alarm.size()) throw ConfigError("label and prediction counts differ");
  long tp = 0, fp = 0, tn = 0, fn = 0;
  for (Index i = 0; i < labels.size(); ++i) {
    const bool pos = labels[i] > 0.5;
    const bool hit = alarm[static_cast<std::size_t>(i)];
    if (pos && hit) ++tp;
    else if (!pos && hit) ++fp;
    else if (!pos) ++tn;
    else ++fn;
  }
  return compute_metrics(tp, fp, tn, fn);
}

inline nlohmann::json to_json(const Metrics& m) {
  return {{"dr", m.dr},
          {"fa", m.fa},
          {"f1", m.f1},
          {"counts", {{"tp", m.tp}, {"fp", m.fp}, {"tn", m.tn}, {"fn", m.fn}}},
          {"undefined", {{"dr", m.dr_undefined}, {"fa", m.fa_undefined}, {"f1", m.f1_undefined}}}};
}

/// One line in the layout "model  DR  FA  F1" with percentages.
inline std::string metrics_row(const std::string& label, const Metrics& m) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "%-6s DR %6.2f  FA %6.2f  F1 %6.2f", label.c_str(), 100 * m.dr, 100 * m.fa,
                100 * m.f1);
  return buf;
}

struct EpochRecord {
  Index epoch = 0;
  double train_loss = 0;
  double validation_loss = 0;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  Index best_epoch = 0;
  double best_validation_loss = std::numeric_limits<double>::infinity();
  bool stopped_early = false;
  Splits splits;
};

inline Tensor rows_of(const Tensor& x, SplitRange r) { return x.middleRows(r.begin, r.size()); }
inline Eigen::VectorXd rows_of(const Eigen::VectorXd& y, SplitRange r) { return y.segment(r.begin, r.size()); }

/// Standardized rows of one split under the chosen mode.
inline Tensor standardized_split(const Detector& m, const Tensor& features, SplitRange r, Standardization mode) {
  const Tensor raw = rows_of(features, r);
  if (mode == Standardization::per_split) return Standardizer::fit(raw).apply(raw);
  return m.standardizer.apply(raw);
}

/// Mini-batch training on the training split with early stopping on the
/// validation cross-entropy; the best validation weights are restored at
/// the end. Initialization and shuffling derive from cfg.seed.
inline TrainResult train(Detector& m, const Tensor& features, const Eigen::VectorXd& labels, const TrainConfig& cfg) {
  cfg.validate();
  if (features.rows() != labels.size()) throw ConfigError("feature and label row counts differ");
  if (features.cols() != m.features())
    throw ConfigError("dataset has " + std::to_string(features.cols() / 2) + " buses, model has " +
                      std::to_string(m.nodes()));
  TrainResult result;
  result.splits = make_splits(features.rows(), cfg);
  const Eigen::VectorXd y_train = rows_of(labels, result.splits.train);
  const double positives = y_train.sum();
  if (positives < 0.5 || positives > static_cast<double>(y_train.size()) - 0.5)
    throw ConfigError("training split holds a single class; cannot train a detector");

  m.standardizer = Standardizer::fit(rows_of(features, result.splits.train));
  const Tensor x_train = m.standardizer.apply(rows_of(features, result.splits.train));
  const Tensor x_val = standardized_split(m, features, result.splits.validation, cfg.standardization);
  const Eigen::VectorXd y_val = rows_of(labels, result.splits.validation);

  auto init_rng = make_rng(cfg.seed, "init");
  m.initialize(init_rng);
  auto params = m.parameter_pointers();
  nn::Optimizer opt(cfg.optimizer);

  std::vector<Tensor> best;
  for (auto* p : params) best.push_back(*p);
  Index since_best = 0;
  std::vector<Index> order(static_cast<std::size_t>(x_train.rows()));
  std::vector<Tensor> grads;
  for (Index epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), Index{0});
    auto shuffle_rng = make_rng(cfg.seed, "shuffle", static_cast<std::uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0;
    for (Index start = 0; start < x_train.rows(); start += cfg.batch_size) {
      const Index b = std::min(cfg.batch_size, x_train.rows() - start);
      Tensor xb(b, x_train.cols());
      Eigen::VectorXd yb(b);
      for (Index i = 0; i < b; ++i) {
        const Index row = order[static_cast<std::size_t>(start + i)];
        xb.row(i) = x_train.row(row);
        yb[i] = y_train[row];
      }
      loss_sum += m.loss_and_gradient(xb, yb, grads) * static_cast<double>(b);
      opt.step(params, grads);
    }
    EpochRecord rec{epoch, loss_sum / static_cast<double>(x_train.rows()), m.loss(x_val, y_val)};
    if (!std::isfinite(rec.train_loss) || !std::isfinite(rec.validation_loss))
      throw NumericalError("training diverged at epoch " + std::to_string(epoch));
    result.history.push_back(rec);
    if (rec.validation_loss < result.best_validation_loss) {
      result.best_validation_loss = rec.validation_loss;
      result.best_epoch = epoch;
      for (std::size_t i = 0; i < params.size(); ++i) best[i] = *params[i];
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      result.stopped_early = epoch < cfg.max_epochs;
      break;
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) *params[i] = best[i];
  return result;
}

/// Metrics of the detector on one split at the given threshold.
inline Metrics evaluate(const Detector& m, const Tensor& features, const Eigen::VectorXd& labels, SplitRange r,
                        Standardization mode = Standardization::training_split, double threshold = 0.5) {
  if (r.size() < 1) throw ConfigError("cannot evaluate an empty split");
  const Eigen::VectorXd p = m.probabilities(standardized_split(m, features, r, mode));
  std::vector<bool> alarm(static_cast<std::size_t>(p.size()));
  for (Index i = 0; i < p.size(); ++i) alarm[static_cast<std::size_t>(i)] = p[i] > threshold;
  return compute_metrics(rows_of(labels, r), alarm);
}

/// Tuned hyperparameters for the three reference grids; a case is matched to
/// the nearest reference size.
struct ModelPreset {
  Architecture gnn;
  nn::OptimizerKind gnn_optimizer;
  Architecture mlp;
  nn::OptimizerKind mlp_optimizer;
  double bdd_threshold;
};

inline ModelPreset model_preset(Index buses) {
  using nn::Activation;
  using nn::OptimizerKind;
  ModelPreset p;
  if (buses < 60) {
    p.gnn = {ModelKind::gnn, buses, 3, {32, 32, 32}, Activation::relu};
    p.gnn_optimizer = OptimizerKind::adam;
    p.mlp = {ModelKind::mlp, buses, 0, {16, 16, 16, 16}, Activation::elu};
    p.mlp_optimizer = OptimizerKind::rmsprop;
    p.bdd_threshold = 1.05;
  } else if (buses < 200) {
    p.gnn = {ModelKind::gnn, buses, 3, {16, 16, 16}, Activation::relu};
    p.gnn_optimizer = OptimizerKind::adam;
    p.mlp = {ModelKind::mlp, buses, 0, {16, 16, 16}, Activation::elu};
    p.mlp_optimizer = OptimizerKind::adam;
    p.bdd_threshold = 2.37;
  } else {
    p.gnn = {ModelKind::gnn, buses, 2, {32, 32, 32, 32}, Activation::relu};
    p.gnn_optimizer = OptimizerKind::adam;
    p.mlp = {ModelKind::mlp, buses, 0, {64, 64, 64}, Activation::elu};
    p.mlp_optimizer = OptimizerKind::rmsprop;
    p.bdd_threshold = 2.62;
  }
  return p;
}

/// Standardizer statistics travel in the weight blob next to the parameters.
inline std::vector<nn::NamedTensor> checkpoint_tensors(Detector& m, Tensor& mean, Tensor& scale) {
  auto out = m.parameters();
  out.push_back({"standardizer.mean", &mean});
  out.push_back({"standardizer.scale", &scale});
  return out;
}

inline void save_detector(const std::filesystem::path& dir, Detector& m, nlohmann::json extra = nlohmann::json::object()) {
  if (!m.standardizer.fitted()) throw ConfigError("cannot save a detector without fitted standardization");
  Tensor mean = m.standardizer.mean;
  Tensor scale = m.standardizer.scale;
  nlohmann::json manifest = std::move(extra);
  manifest["format"] = "fdia-detector";
  manifest["architecture"] = to_json(m.architecture());
  manifest["parameter_count"] = m.parameter_count();
  nn::write_checkpoint(dir, manifest, checkpoint_tensors(m, mean, scale));
}

/// Rebuilds a saved detector for case `c`; the bus count must match.
inline Detector load_detector(const std::filesystem::path& dir, const GridCase& c) {
  const auto manifest = nn::read_manifest(dir);
  if (manifest.value("format", "") != "fdia-detector") throw ConfigError("not a detector checkpoint: " + dir.string());
  const Architecture arch = architecture_from_json(manifest.at("architecture"));
  if (arch.nodes != c.bus_count())
    throw ConfigError("checkpoint was trained for " + std::to_string(arch.nodes) + " buses, case '" + c.name +
                      "' has " + std::to_string(c.bus_count()));
  Detector m = make_detector(c, arch);
  Tensor mean(1, m.features()), scale(1, m.features());
  nn::read_weights(dir, manifest, checkpoint_tensors(m, mean, scale));
  m.standardizer.mean = mean.row(0);
  m.standardizer.scale = scale.row(0);
  return m;
}

}  // namespace fdia::gnn
