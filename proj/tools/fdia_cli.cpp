#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fdia/pipeline.hpp"

using namespace fdia;
namespace fs = std::filesystem;

namespace {

/// Options bound to a scratch RunConfig; after parsing, only the options the
/// user actually gave are copied over the defaults-plus-config-file values.
class Overrides {
public:
  explicit Overrides(RunConfig& scratch) : scratch_(scratch) {}

  template <class Access>
  CLI::Option* option(CLI::App* app, const std::string& name, Access access, const std::string& desc) {
    auto* opt = app->add_option(name, access(scratch_), desc)->capture_default_str();
    copies_.emplace_back(opt, [access](RunConfig& dst, RunConfig& src) { access(dst) = access(src); });
    return opt;
  }

  template <class Access>
  CLI::Option* flag(CLI::App* app, const std::string& name, Access access, const std::string& desc) {
    auto* opt = app->add_flag(name, access(scratch_), desc);
    copies_.emplace_back(opt, [access](RunConfig& dst, RunConfig& src) { access(dst) = access(src); });
    return opt;
  }

  void apply(RunConfig& dst) const {
    for (const auto& [opt, copy] : copies_)
      if (opt->count() > 0) copy(dst, scratch_);
  }

private:
  RunConfig& scratch_;
  std::vector<std::pair<CLI::Option*, std::function<void(RunConfig&, RunConfig&)>>> copies_;
};

struct Paths {
  std::string config, in, out, checkpoint;
};

void add_case(Overrides& o, CLI::App* app, bool from_dataset) {
  o.option(app, "--case", [](RunConfig& r) -> std::string& { return r.case_ref; },
           from_dataset ? "Grid case name (ieee14, ieee118, ieee300) or case file; defaults to the dataset's case"
                        : "Grid case name (ieee14, ieee118, ieee300) or case file")
      ->default_str(from_dataset ? "dataset case" : "ieee14");
}

void add_seed(Overrides& o, CLI::App* app) {
  o.option(app, "--seed", [](RunConfig& r) -> std::uint64_t& { return r.seed; }, "Root random seed");
}

GridCase case_for(const RunConfig& r, const HonestDataset* d) {
  if (!r.case_ref.empty()) return resolve_case(r.case_ref);
  if (d && d->meta.contains("case")) return resolve_case(d->meta["case"].get<std::string>());
  return resolve_case("ieee14");
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"False data injection attack simulation and graph neural network detection"};
  app.require_subcommand(1);
  RunConfig scratch;
  scratch.case_ref.clear();
  Overrides o(scratch);
  Paths paths;

  auto* gen = app.add_subcommand("generate-data", "Simulate honest measurement snapshots");
  auto* atk = app.add_subcommand("generate-attacks", "Inject stealth attacks into an honest dataset");
  auto* trn = app.add_subcommand("train", "Train a detector on a labeled dataset");
  auto* evl = app.add_subcommand("evaluate", "Score a trained detector and the residual test on the test split");

  for (auto* sub : {gen, atk, trn, evl})
    sub->add_option("--config", paths.config, "JSON config file; command-line flags take precedence")
        ->check(CLI::ExistingFile);

  add_case(o, gen, false);
  o.option(gen, "--profile", [](RunConfig& r) -> std::string& { return r.profile; },
           "Load profile CSV (one column) or 'synthetic'");
  o.option(gen, "--T", [](RunConfig& r) -> Index& { return r.steps; }, "Number of time steps");
  add_seed(o, gen);
  o.option(gen, "--k", [](RunConfig& r) -> double& { return r.scenario.k; }, "Load-following gain");
  o.option(gen, "--sigma-s", [](RunConfig& r) -> double& { return r.scenario.sigma_s; }, "Per-bus load scale spread");
  o.option(gen, "--sigma-n", [](RunConfig& r) -> double& { return r.scenario.sigma_n; },
           "Relative measurement noise");
  gen->add_option("--out", paths.out, "Output dataset directory")->required();

  atk->add_option("--in", paths.in, "Honest dataset directory")->required();
  add_case(o, atk, true);
  add_seed(o, atk);
  o.option(atk, "--preset", [](RunConfig& r) -> std::string& { return r.preset; },
           "Loss weights: cautious (10, 1), balanced (1, 1), aggressive (1, 10)")
      ->check(CLI::IsMember({"cautious", "balanced", "aggressive"}));
  o.option(atk, "--lambda-z", [](RunConfig& r) -> double& { return r.lambda_z; }, "Measurement-change weight")
      ->default_str("from preset");
  o.option(atk, "--lambda-x", [](RunConfig& r) -> double& { return r.lambda_x; }, "State-change weight")
      ->default_str("from preset");
  o.option(atk, "--eta", [](RunConfig& r) -> double& { return r.eta; }, "Attack optimizer step size");
  o.option(atk, "--attack-epochs", [](RunConfig& r) -> int& { return r.attack_epochs; },
           "Attack optimizer iterations");
  o.option(atk, "--tau-freq", [](RunConfig& r) -> double& { return r.tau_freq; },
           "Attack when a standard normal draw exceeds this ('inf' disables attacks)");
  o.option(atk, "--tau-loss", [](RunConfig& r) -> double& { return r.tau_loss; },
           "Inject only attacks whose loss is below this");
  o.option(atk, "--radius-min", [](RunConfig& r) -> Index& { return r.radius_min; },
           "Smallest target-area radius in hops")
      ->default_str("from case size");
  o.option(atk, "--radius-max", [](RunConfig& r) -> Index& { return r.radius_max; },
           "Largest target-area radius in hops")
      ->default_str("from case size");
  atk->add_option("--out", paths.out, "Output labeled dataset directory")->required();

  trn->add_option("--in", paths.in, "Labeled dataset directory")->required();
  add_case(o, trn, true);
  add_seed(o, trn);
  o.option(trn, "--model", [](RunConfig& r) -> std::string& { return r.model; }, "Detector: gnn or mlp")
      ->check(CLI::IsMember({"gnn", "mlp"}));
  o.option(trn, "--batch-size", [](RunConfig& r) -> Index& { return r.batch_size; }, "Mini-batch size");
  o.option(trn, "--epochs", [](RunConfig& r) -> Index& { return r.max_epochs; }, "Maximum training epochs");
  o.option(trn, "--patience", [](RunConfig& r) -> Index& { return r.patience; },
           "Epochs without validation improvement before stopping");
  o.option(trn, "--lr", [](RunConfig& r) -> double& { return r.lr; }, "Learning rate");
  o.flag(trn, "--paper-standardization", [](RunConfig& r) -> bool& { return r.paper_standardization; },
         "Standardize every split with its own statistics instead of the training split's");
  trn->add_option("--out", paths.out, "Output directory for the checkpoint and metrics")->required();

  evl->add_option("--in", paths.in, "Labeled dataset directory")->required();
  evl->add_option("--checkpoint", paths.checkpoint, "Trained detector directory")->required();
  add_case(o, evl, true);
  o.option(evl, "--tau-bdd", [](RunConfig& r) -> double& { return r.tau_bdd; },
           "Residual-test threshold")
      ->default_str("1.05, 2.37 or 2.62 by case size");
  o.option(evl, "--residual-denominator", [](RunConfig& r) -> std::string& { return r.residual_denominator; },
           "Normalized residual denominator: sqrt (sqrt(R S)) or paper (R S)")
      ->check(CLI::IsMember({"sqrt", "paper"}));
  evl->add_option("--out", paths.out, "Directory for evaluation.json");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  const auto t0 = std::chrono::steady_clock::now();
  try {
    RunConfig r;
    r.case_ref.clear();
    if (!paths.config.empty()) r = load_run_config(paths.config, r);
    o.apply(r);

    if (gen->parsed()) {
      if (r.case_ref.empty()) r.case_ref = "ieee14";
      const auto c = resolve_case(r.case_ref);
      const auto ds = run_generate_data(r, c);
      write_dataset(paths.out, ds);
      detail::write_text(fs::path(paths.out) / "run.json", to_json(r).dump(2) + "\n");
      std::printf("generate-data: %s, %ld rows, %ld measurements -> %s\n", c.name.c_str(), static_cast<long>(ds.steps()),
                  static_cast<long>(ds.Z.cols()), paths.out.c_str());
      if (ds.meta.contains("honest_bdd_flagged_fraction"))
        std::printf("honest snapshots flagged by the residual test: %.4f\n",
                    ds.meta["honest_bdd_flagged_fraction"].get<double>());
    } else if (atk->parsed()) {
      const auto honest = read_honest_dataset(paths.in);
      const auto c = case_for(r, &honest);
      AttackCounts counts;
      const auto ds = run_generate_attacks(r, honest, c, &counts);
      write_dataset(paths.out, ds);
      detail::write_text(fs::path(paths.out) / "run.json", to_json(r).dump(2) + "\n");
      std::printf("generate-attacks: %s preset %s: attempted %ld, empty area %ld, rejected %ld, accepted %ld\n",
                  c.name.c_str(), r.preset.c_str(), static_cast<long>(counts.attempted),
                  static_cast<long>(counts.empty_area), static_cast<long>(counts.rejected),
                  static_cast<long>(counts.accepted));
      std::printf("positive fraction: %.4f -> %s\n",
                  static_cast<double>(ds.Y.sum()) / static_cast<double>(ds.steps()), paths.out.c_str());
    } else if (trn->parsed()) {
      const auto d = read_labeled_dataset(paths.in);
      const auto c = case_for(r, &d);
      auto rep = run_train(r, d, c);
      write_train_outputs(paths.out, r, rep);
      std::printf("%s on %s: %ld parameters, best epoch %ld of %ld\n", r.model.c_str(), c.name.c_str(),
                  static_cast<long>(rep.model.parameter_count()), static_cast<long>(rep.result.best_epoch),
                  static_cast<long>(rep.result.history.size()));
      std::printf("%s\n", gnn::metrics_row(r.model == "gnn" ? "GNN" : "MLP", rep.test).c_str());
    } else if (evl->parsed()) {
      const auto d = read_labeled_dataset(paths.in);
      const auto c = case_for(r, &d);
      const auto rep = run_evaluate(r, paths.checkpoint, d, c);
      if (!paths.out.empty()) {
        fs::create_directories(paths.out);
        detail::write_text(fs::path(paths.out) / "evaluation.json", rep.json.dump(2) + "\n");
      }
      std::string label = rep.json["model"]["kind"].get<std::string>();
      for (auto& ch : label) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
      std::printf("%s\n%s\n", gnn::metrics_row(label, rep.model).c_str(), gnn::metrics_row("BDD", rep.bdd.metrics).c_str());
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return 3;
  } catch (const fs::filesystem_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  std::fprintf(stderr, "done in %.2f s\n", seconds_since(t0));
  return 0;
}
