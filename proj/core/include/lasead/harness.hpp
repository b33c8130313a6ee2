#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "lasead/loop.hpp"

namespace lasead {

/// Invalid user configuration. what() lists every problem, one per line.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> problems);
  const std::vector<std::string>& problems() const { return problems_; }

 private:
  std::vector<std::string> problems_;
};

struct ScenarioConfig {
  std::string name = "NoAttack";
  LoopConfig loop{};
  std::uint64_t master_seed = 1;
  std::vector<std::uint64_t> seeds;  // run identifiers
  std::optional<std::string> calibration_path;

  /// Parses a JSON scenario description. Throws ConfigError listing every
  /// problem before anything runs.
  static ScenarioConfig from_json(std::string_view text);
  /// A named built-in scenario (NoAttack, EncoderAttack(d), Encoder-IMUAttack,
  /// EICAttack, Stochastic) with default parameters.
  static ScenarioConfig named(std::string_view name);
  void validate() const;
};

/// Seeds 0..n-1.
std::vector<std::uint64_t> seed_range(std::size_t n, std::uint64_t first = 0);

/// Per-run RNG seed derived from (master seed, run id).
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t run);

/// Worker count from LASEAD_WORKERS, else the hardware concurrency.
unsigned default_workers();

/// Runs every seed, possibly in parallel; results are ordered by seed id and
/// carry the run id in RunResult::seed.
std::vector<RunResult> run_batch(const ScenarioConfig& config, unsigned workers = 0);

/// Same, for an already constructed loop.
std::vector<RunResult> run_seeds(const ClosedLoop& loop, std::uint64_t master_seed,
                                 const std::vector<std::uint64_t>& seeds, unsigned workers = 0);

struct Quartiles {
  double min = 0.0, q1 = 0.0, median = 0.0, q3 = 0.0, max = 0.0;
  int count = 0;
};

/// Linear-interpolation quantiles of `values` (empty -> count 0).
Quartiles quartiles(std::vector<double> values);

struct SummaryReport {
  std::string scenario;
  std::string method;
  int runs = 0;
  int failures = 0;
  int faults = 0;
  double failure_rate = 0.0;
  double failure_se = 0.0;  // binomial standard error
  Quartiles cost;           // non-failed runs only
  double mean_probes = 0.0;
  std::vector<double> t;
  std::vector<std::array<double, kSensorCount>> mean_belief;
  std::vector<double> probing_rate;

  std::string to_json() const;
  static SummaryReport from_json(std::string_view text);
  bool operator==(const SummaryReport&) const;
};

SummaryReport summarize(std::string_view scenario, Method method,
                        const std::vector<RunResult>& runs);

/// Step log of every run, sorted by seed: seed, t, state, soft, alerts,
/// belief, trusted mask, probing flag, u, estimate.
std::string runs_csv(const std::vector<RunResult>& runs);
/// t, mean beliefs and probing rate.
std::string trace_csv(const SummaryReport& report);

/// Writes runs.csv, trace.csv and summary.json into `dir` (created).
void export_batch(const std::filesystem::path& dir, const SummaryReport& report,
                  const std::vector<RunResult>& runs);

void write_text(const std::filesystem::path& path, std::string_view text);
std::string read_text(const std::filesystem::path& path);

struct CalibrationOptions {
  std::size_t benign_seeds = 50;
  std::uint64_t master_seed = 7;
  std::uint64_t training_offset = 100000;
  std::uint64_t holdout_offset = 200000;
  double budget = 0.05;
  CalibrationGrid grid = CalibrationGrid::standard();
};

struct CalibrationResult {
  DetectorCalibration calibration;
  std::vector<std::string> warnings;
};

/// Runs benign Normal closed loops on training and held-out seeds, sets the
/// CUSUM drift/threshold per component and estimates eta from the training
/// alert sequences.
CalibrationResult calibrate(const LoopConfig& base, const CalibrationOptions& options,
                            unsigned workers = 0);

/// Per-component alert rate of a detector over benign Normal runs.
std::array<double, kStateDim> benign_alert_rates(const LoopConfig& base,
                                                 const DetectorCalibration& calibration,
                                                 std::uint64_t master_seed,
                                                 const std::vector<std::uint64_t>& seeds,
                                                 unsigned workers = 0);

struct TuneCandidate {
  double probe_low;
  double probe_high;
  double objective = 0.0;
  double failure_rate = 0.0;
  double mean_cost = 0.0;
};

struct TuneResult {
  TuneCandidate best;
  std::vector<TuneCandidate> evaluated;
  std::string to_json() const;
};

enum class TuneMode { Stochastic, Benign };
std::optional<TuneMode> parse_tune_mode(std::string_view s);

struct TuneOptions {
  std::vector<std::pair<double, double>> grid;  // (probe_low, probe_high)
  std::size_t seeds = 20;
  std::uint64_t master_seed = 11;
  double failure_penalty = 1000.0;
  static std::vector<std::pair<double, double>> default_grid();
};

/// Grid search of the probing window for LASE-AD against the stochastic
/// attacker or benign runs. Objective: mean over runs of the control cost; a
/// failed run counts its cost up to the failure plus `failure_penalty` times
/// the fraction of the horizon left. Ties pick the narrower window, then the
/// lower one. Throws std::invalid_argument on an empty grid.
TuneResult tune_thresholds(const LoopConfig& base, TuneMode mode, const TuneOptions& options,
                           unsigned workers = 0);

struct WolfTuneResult {
  double c = 1.0;
  double objective = 0.0;
  std::vector<std::pair<double, double>> evaluated;  // (c, objective)
};

/// 20-point log grid over c for a WoLF method on the scenario in `base`.
WolfTuneResult tune_wolf(const LoopConfig& base, std::size_t seeds, std::uint64_t master_seed,
                         double failure_penalty = 1000.0, unsigned workers = 0);
std::vector<double> wolf_grid(WolfVariant v);

}  // namespace lasead
