#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lasead/belief.hpp"
#include "lasead/control.hpp"
#include "lasead/detection.hpp"
#include "lasead/estimation.hpp"
#include "lasead/perception.hpp"
#include "lasead/plant.hpp"
#include "lasead/probing.hpp"
#include "lasead/sensors.hpp"

namespace lasead {

enum class Method { Normal, WolfImq, WolfMd, WolfTmd, KalmanPred, LaseAdB, LaseAdS };

inline constexpr std::array<Method, 7> kAllMethods{
    Method::Normal,     Method::WolfImq, Method::WolfMd, Method::WolfTmd,
    Method::KalmanPred, Method::LaseAdB, Method::LaseAdS};

std::string_view to_string(Method m);
std::optional<Method> parse_method(std::string_view name);
bool is_lase_ad(Method m);
bool is_wolf(Method m);
std::optional<WolfVariant> wolf_variant(Method m);
/// Default WoLF c for each variant (IMQ acts on the Euclidean residual, MD
/// and TMD on the Mahalanobis distance).
double default_wolf_c(WolfVariant v);

/// Which soft measurement the anomaly detector compares with the filter:
/// the trusted pipeline P_{S_k}, or the pipeline with every sensor enabled.
enum class DetectorInput { Trusted, Full };

struct LoopConfig {
  PlantParams plant{};
  SensorNoise noise{};
  PerceptionGraph graph = PerceptionGraph::cart_pole();
  double horizon_s = 10.0;
  /// Initial state drawn uniformly from [-spread, spread]^4.
  double initial_spread = 0.05;

  AttackSchedule schedule{};
  std::optional<StochasticAttacker::Params> stochastic;

  Method method = Method::Normal;
  /// Unset: the tuned window of the method (benign for LASE-AD-B).
  std::optional<ThresholdPolicy> policy;
  double prior = 0.05;
  std::size_t replay_length = 100;
  SafeSet safe{};
  LqrWeights weights{};
  DetectorCalibration detector{};
  DetectorInput detector_input = DetectorInput::Full;
  std::optional<double> wolf_c;  // unset: default_wolf_c
  double failure_angle = 1.5707963267948966;  // 90 degrees
  bool record_steps = true;
  bool record_residuals = false;

  int steps() const;
  ThresholdPolicy effective_policy() const;
  std::vector<std::string> problems() const;
  /// Throws std::invalid_argument listing every problem found.
  void validate() const;
};

struct StepRecord {
  double t = 0.0;
  Vec4 state = Vec4::Zero();
  Vec4 soft = Vec4::Zero();
  ComponentMask soft_available;
  AlertVector alerts;
  Belief decision_belief;  // after the alert update; what the probing decision saw
  Belief belief;           // after any probing update as well
  SensorSet trusted;
  bool probing = false;
  double u = 0.0;
  Vec4 estimate = Vec4::Zero();
  SensorSet attacked;
};

struct RunResult {
  std::uint64_t seed = 0;
  Method method = Method::Normal;
  bool failed = false;
  int failure_step = -1;
  double cost = 0.0;
  double cost_before_failure = 0.0;  // equals cost when the run did not fail
  std::string fault;  // non-empty when the estimator faulted
  int fault_step = -1;
  int probes = 0;
  int probe_fallbacks = 0;
  int probing_updates = 0;
  int probing_updates_skipped = 0;
  int trust_changes = 0;
  std::vector<StepRecord> steps;
  ResidualTrace residuals;  // nominal-pipeline innovations, when requested
};

/// One configured closed loop. Designs the LQR and Bayesian network once;
/// run() is const and safe to call concurrently.
class ClosedLoop {
 public:
  explicit ClosedLoop(LoopConfig config);

  RunResult run(std::uint64_t seed) const;

  const LoopConfig& config() const { return config_; }
  const LqrController& controller() const { return controller_; }
  const CartPole& plant() const { return plant_; }

 private:
  LoopConfig config_;
  CartPole plant_;
  LqrController controller_;
  PerceptionPipeline pipeline_;
  std::shared_ptr<const CartPoleProcessModel> model_;
  BnModel bn_;
  Eigen::Matrix4d noise_factor_;  // process noise = L L^T
};

/// Stage cost x^T M_x x + M_u u^2.
double stage_cost(const LqrWeights& w, const Vec4& x, double u);

}  // namespace lasead
