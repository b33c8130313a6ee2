// lasead command-line driver: simulate, calibrate, tune, pomdp.
//
// Exit codes: 0 success, 2 configuration error, 3 runtime fault.
// LASEAD_WORKERS sets the number of worker threads.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <stdexcept>
#include <string>

#include <CLI11.hpp>

#include "lasead/harness.hpp"
#include "lasead/pomdp.hpp"

namespace fs = std::filesystem;
using namespace lasead;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct Common {
  std::string calibration = "calibration.json";
  unsigned workers = 0;
};

ScenarioConfig load_scenario(const std::string& spec) {
  if (spec.empty()) return ScenarioConfig::named("NoAttack");
  if (fs::path(spec).extension() == ".json" || fs::exists(spec)) {
    if (!fs::exists(spec)) throw ConfigError({"scenario file not found: " + spec});
    return ScenarioConfig::from_json(read_text(spec));
  }
  if (!is_named_scenario(spec) && spec != "Stochastic") {
    throw ConfigError({"unknown scenario '" + spec + "'"});
  }
  return ScenarioConfig::named(spec);
}

DetectorCalibration load_calibration(const std::string& path) {
  if (!fs::exists(path)) {
    throw ConfigError({"calibration artifact not found: " + path + " (run `lasead calibrate` first)"});
  }
  try {
    return DetectorCalibration::from_json(read_text(path));
  } catch (const std::invalid_argument& e) {
    throw ConfigError({path + ": " + e.what()});
  }
}

void apply_method(ScenarioConfig& sc, const std::string& method) {
  if (method.empty()) return;
  const auto m = parse_method(method);
  if (!m) {
    throw ConfigError({"unknown method '" + method +
                       "' (normal|wolf-imq|wolf-md|wolf-tmd|kalmanpred|lase-ad-b|lase-ad-s)"});
  }
  sc.loop.method = *m;
}

int cmd_simulate(const Common& common, const std::string& scenario, const std::string& method,
                 int seeds, const std::string& out) {
  ScenarioConfig sc = load_scenario(scenario);
  apply_method(sc, method);
  if (seeds > 0) sc.seeds = seed_range(static_cast<std::size_t>(seeds));
  sc.loop.detector = load_calibration(sc.calibration_path.value_or(common.calibration));
  sc.validate();

  const auto runs = run_batch(sc, common.workers);
  const SummaryReport report = summarize(sc.name, sc.loop.method, runs);
  if (!out.empty()) export_batch(out, report, runs);
  std::printf("%s %s: runs %d, failures %d (rate %.3f +/- %.3f), median cost %.4g, mean probes %.1f\n",
              report.scenario.c_str(), report.method.c_str(), report.runs, report.failures,
              report.failure_rate, report.failure_se, report.cost.median, report.mean_probes);
  if (report.faults > 0) {
    std::fprintf(stderr, "warning: %d run(s) ended in an estimator fault\n", report.faults);
  }
  return 0;
}

int cmd_calibrate(const Common& common, const std::string& scenario, int benign_seeds,
                  const std::string& out) {
  const ScenarioConfig sc = load_scenario(scenario);
  if (benign_seeds < 1) throw ConfigError({"--benign-seeds must be positive"});
  CalibrationOptions opts;
  opts.benign_seeds = static_cast<std::size_t>(benign_seeds);
  const CalibrationResult res = calibrate(sc.loop, opts, common.workers);
  for (const auto& w : res.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
  write_text(out, res.calibration.to_json());
  for (int j = 0; j < kStateDim; ++j) {
    std::printf("%-14s tau %6.2f  b %.4f  eta0 %.4f  eta1 %.4f  held-out rate %.4f\n",
                std::string(component_name(j)).c_str(), res.calibration.cusum.threshold[j],
                res.calibration.cusum.drift[j], res.calibration.characterization.eta0[j],
                res.calibration.characterization.eta1[j], res.calibration.holdout_rate[j]);
  }
  std::printf("wrote %s\n", out.c_str());
  return 0;
}

int cmd_tune(const Common& common, const std::string& mode_name, const std::string& scenario,
             int seeds, const std::string& out) {
  const auto mode = parse_tune_mode(mode_name);
  if (!mode) throw ConfigError({"--mode must be stochastic or benign"});
  ScenarioConfig sc = load_scenario(scenario);
  sc.loop.detector = load_calibration(sc.calibration_path.value_or(common.calibration));
  TuneOptions opts;
  opts.grid = TuneOptions::default_grid();
  if (seeds > 0) opts.seeds = static_cast<std::size_t>(seeds);
  const TuneResult res = tune_thresholds(sc.loop, *mode, opts, common.workers);
  if (!out.empty()) write_text(out, res.to_json());
  std::printf("best window (%.3f, %.3f): objective %.4g, failure rate %.3f, mean cost %.4g\n",
              res.best.probe_low, res.best.probe_high, res.best.objective, res.best.failure_rate,
              res.best.mean_cost);
  return 0;
}

int cmd_pomdp(const std::string& config_path, const std::string& out) {
  pomdp::PomdpConfig cfg;
  if (!config_path.empty()) {
    if (!fs::exists(config_path)) throw ConfigError({"config file not found: " + config_path});
    try {
      cfg = pomdp::PomdpConfig::from_json(read_text(config_path));
    } catch (const std::invalid_argument& e) {
      throw ConfigError({config_path + ": " + e.what()});
    }
  }
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError({e.what()});
  }
  const auto vi = pomdp::value_iteration(cfg);
  const auto report = pomdp::verify_dominance(cfg, vi);
  if (!out.empty()) {
    fs::create_directories(out);
    write_text(fs::path(out) / "dominance.json", report.to_json());
    write_text(fs::path(out) / "grid.csv", pomdp::grid_csv(cfg, vi));
  }
  std::cout << report.to_json() << "\n";
  return report.violations == 0 ? 0 : kExitRuntime;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sensor-attack detection and active probing for a cart-pole"};
  app.require_subcommand(1);
  Common common;
  common.workers = default_workers();
  app.add_option("--workers", common.workers, "worker threads (default: LASEAD_WORKERS or cores)");

  std::string scenario, method, out, mode, pomdp_config;
  int seeds = 0, benign_seeds = 50;

  auto* sim = app.add_subcommand("simulate", "run a batch of closed-loop simulations");
  sim->add_option("--scenario", scenario, "named scenario or JSON file")->required();
  sim->add_option("--method", method, "estimation/control method");
  sim->add_option("--seeds", seeds, "number of seeds (overrides the scenario)");
  sim->add_option("--out", out, "output directory");
  sim->add_option("--calibration", common.calibration, "detector calibration artifact");

  auto* cal = app.add_subcommand("calibrate", "calibrate the CUSUM detector on benign runs");
  cal->add_option("--benign-seeds", benign_seeds, "benign seeds per split");
  cal->add_option("--scenario", scenario, "JSON file with plant/noise overrides");
  std::string cal_out = "calibration.json";
  cal->add_option("--out", cal_out, "artifact path");

  auto* tune = app.add_subcommand("tune", "grid-search the probing window");
  tune->add_option("--mode", mode, "stochastic or benign")->required();
  tune->add_option("--scenario", scenario, "JSON file with plant/noise overrides");
  tune->add_option("--seeds", seeds, "seeds per candidate");
  tune->add_option("--calibration", common.calibration, "detector calibration artifact");
  tune->add_option("--out", out, "result JSON path");

  auto* pomdp_cmd = app.add_subcommand("pomdp", "value iteration and dominance check");
  pomdp_cmd->add_option("--config", pomdp_config, "POMDP JSON config");
  pomdp_cmd->add_option("--out", out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*sim) return cmd_simulate(common, scenario, method, seeds, out);
    if (*cal) return cmd_calibrate(common, scenario, benign_seeds, cal_out);
    if (*tune) return cmd_tune(common, mode, scenario, seeds, out);
    if (*pomdp_cmd) return cmd_pomdp(pomdp_config, out);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error:\n");
    for (const auto& p : e.problems()) std::fprintf(stderr, "  %s\n", p.c_str());
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "runtime fault: %s\n", e.what());
    return kExitRuntime;
  }
  return kExitConfig;
}
