#include "lasead/loop.hpp"

#include <cmath>
#include <stdexcept>

namespace lasead {

std::string_view to_string(Method m) {
  switch (m) {
    case Method::Normal: return "normal";
    case Method::WolfImq: return "wolf-imq";
    case Method::WolfMd: return "wolf-md";
    case Method::WolfTmd: return "wolf-tmd";
    case Method::KalmanPred: return "kalmanpred";
    case Method::LaseAdB: return "lase-ad-b";
    case Method::LaseAdS: return "lase-ad-s";
  }
  return "?";
}

std::optional<Method> parse_method(std::string_view name) {
  for (Method m : kAllMethods) {
    if (to_string(m) == name) return m;
  }
  return std::nullopt;
}

bool is_lase_ad(Method m) { return m == Method::LaseAdB || m == Method::LaseAdS; }

bool is_wolf(Method m) { return wolf_variant(m).has_value(); }

std::optional<WolfVariant> wolf_variant(Method m) {
  switch (m) {
    case Method::WolfImq: return WolfVariant::Imq;
    case Method::WolfMd: return WolfVariant::Md;
    case Method::WolfTmd: return WolfVariant::Tmd;
    default: return std::nullopt;
  }
}

double default_wolf_c(WolfVariant v) { return v == WolfVariant::Imq ? 0.1 : 3.0; }

ThresholdPolicy LoopConfig::effective_policy() const {
  if (policy) return *policy;
  return method == Method::LaseAdB ? ThresholdPolicy::benign_tuned()
                                   : ThresholdPolicy::stochastic_tuned();
}

int LoopConfig::steps() const { return static_cast<int>(std::lround(horizon_s / plant.dt)); }

std::vector<std::string> LoopConfig::problems() const {
  std::vector<std::string> errors;
  auto guard = [&](auto&& fn) {
    try {
      fn();
    } catch (const std::exception& e) {
      errors.emplace_back(e.what());
    }
  };
  guard([&] { plant.validate(); });
  guard([&] { noise.validate(); });
  guard([&] { effective_policy().validate(); });
  guard([&] { safe.validate(); });
  guard([&] { detector.cusum.validate(); });
  guard([&] { detector.characterization.validate(); });
  if (stochastic) guard([&] { stochastic->validate(); });
  if (!graph.covers_all_components()) errors.emplace_back("graph leaves a component uncovered");
  if (!(horizon_s > 0.0)) {
    errors.emplace_back("horizon_s must be > 0");
  } else if (plant.dt > 0.0 &&
             std::abs(horizon_s / plant.dt - std::round(horizon_s / plant.dt)) > 1e-6) {
    errors.emplace_back("horizon_s must be an integral number of dt steps");
  }
  if (!(initial_spread >= 0.0)) errors.emplace_back("initial_spread must be >= 0");
  if (!(prior > 0.0 && prior < 1.0)) errors.emplace_back("prior must lie in (0, 1)");
  if (replay_length == 0) errors.emplace_back("replay_length must be > 0");
  if (wolf_c && !(*wolf_c > 0.0)) errors.emplace_back("wolf_c must be > 0");
  if (!(failure_angle > 0.0)) errors.emplace_back("failure_angle must be > 0");
  return errors;
}

void LoopConfig::validate() const {
  const std::vector<std::string> errors = problems();
  if (!errors.empty()) {
    std::string msg;
    for (const auto& e : errors) msg += (msg.empty() ? "" : "; ") + e;
    throw std::invalid_argument(msg);
  }
}

double stage_cost(const LqrWeights& w, const Vec4& x, double u) {
  return x.dot(w.state.asDiagonal() * x) + w.input * u * u;
}

namespace {

Eigen::Matrix4d covariance_factor(const Mat4& q) {
  Eigen::SelfAdjointEigenSolver<Mat4> eig(0.5 * (q + q.transpose()));
  return eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
}

std::vector<int> common_rows(const SoftMeasurement& a, const SoftMeasurement& b) {
  return SoftMeasurement{Vec4::Zero(), Vec4::Zero(), a.available & b.available}.rows();
}

GaussianPrediction restrict_prediction(const EkfEstimate& prior, const SoftMeasurement& soft,
                                       const std::vector<int>& rows) {
  const auto n = static_cast<Eigen::Index>(rows.size());
  GaussianPrediction g{Eigen::VectorXd(n), Eigen::MatrixXd(n, n)};
  for (Eigen::Index a = 0; a < n; ++a) {
    g.mean[a] = prior.mean[rows[a]];
    for (Eigen::Index b = 0; b < n; ++b) g.covariance(a, b) = prior.covariance(rows[a], rows[b]);
    g.covariance(a, a) += soft.variance[rows[a]];
  }
  return g;
}

// Hypotheses prepared at a probing step and evaluated on the next one.
struct PendingProbe {
  SensorId sensor;
  SensorSet with;
  SensorSet without;
  EkfEstimate estimate_with;
  EkfEstimate estimate_without;
  SoftMeasurement soft_with;
  SoftMeasurement soft_without;
};

}  // namespace

ClosedLoop::ClosedLoop(LoopConfig config)
    : config_(std::move(config)),
      plant_((config_.validate(), config_.plant)),
      controller_(LqrController::design(plant_, config_.weights)),
      pipeline_(config_.noise, config_.plant.dt, config_.plant.process_noise.diagonal()),
      model_(std::make_shared<CartPoleProcessModel>(plant_)),
      bn_(config_.graph, config_.detector.characterization),
      noise_factor_(covariance_factor(config_.plant.process_noise)) {}

RunResult ClosedLoop::run(std::uint64_t seed) const {
  const LoopConfig& cfg = config_;
  RunResult res;
  res.seed = seed;
  res.method = cfg.method;
  const int n_steps = cfg.steps();
  const double dt = plant_.dt();
  const bool lase = is_lase_ad(cfg.method);
  const ThresholdPolicy policy = cfg.effective_policy();
  const auto variant = wolf_variant(cfg.method);
  const double wolf_c = variant ? cfg.wolf_c.value_or(default_wolf_c(*variant)) : 0.0;
  if (cfg.record_steps) res.steps.reserve(static_cast<std::size_t>(n_steps));

  Rng rng(seed);
  std::uniform_real_distribution<double> initial(-cfg.initial_spread, cfg.initial_spread);
  std::normal_distribution<double> normal(0.0, 1.0);

  Vec4 x;
  for (int j = 0; j < kStateDim; ++j) x[j] = cfg.initial_spread > 0.0 ? initial(rng) : 0.0;

  const ExtendedKalmanFilter filter(model_, cfg.plant.process_noise);
  CusumDetector cusum(cfg.detector.cusum);
  ReplayBuffer buffer(cfg.replay_length);
  std::optional<StochasticAttacker> attacker;
  if (cfg.stochastic) attacker.emplace(*cfg.stochastic);
  KalmanPredGate gate;

  EkfEstimate est;
  est.mean = Vec4::Zero();
  const double p0 = std::max(1e-6, cfg.initial_spread * cfg.initial_spread / 3.0);
  est.covariance = p0 * Mat4::Identity();

  Belief belief = Belief::uniform(cfg.prior).clamped();
  SensorSet trusted = SensorSet::all();
  std::optional<SoftMeasurement> prev_soft;
  std::optional<SoftMeasurement> prev_soft_full;
  const bool full_detector = cfg.detector_input == DetectorInput::Full;
  AlertVector prev_alerts;
  std::optional<PendingProbe> pending;
  double u_prev = 0.0;

  auto check_failure = [&](const Vec4& state, int k) {
    if (!res.failed && std::abs(state[kAngle]) > cfg.failure_angle) {
      res.failed = true;
      res.failure_step = k;
    }
  };

  int k = 0;
  try {
    for (; k < n_steps; ++k) {
      const double t = k * dt;
      RawMeasurementSet raw = measure_all(plant_, cfg.noise, x, u_prev, k, rng);
      SensorSet attacked;
      if (attacker) {
        attacked = attacker->step(rng);
        for (SensorId id : kAllSensors) {
          if (attacked.contains(id)) raw.of(id) += attacker->bias(id);
        }
      } else {
        AttackedMeasurement am = apply_attack(raw, cfg.schedule, t);
        raw = am.measurement;
        attacked = am.attacked;
      }

      const EkfEstimate pred = k == 0 ? est : filter.predict(est, u_prev);
      const SoftMeasurement soft = pipeline_.process(trusted, raw, prev_soft);
      std::optional<SoftMeasurement> soft_full;
      if (full_detector) soft_full = pipeline_.process(SensorSet::all(), raw, prev_soft_full);
      const Innovation inn = filter.innovation(pred, full_detector ? *soft_full : soft);
      const AlertVector alerts = cusum.update(inn);
      if (cfg.record_residuals) res.residuals.push(inn);
      belief = bn_.alert_posterior(belief, alerts, prev_alerts);

      const Belief decision_belief = belief;
      const ProbeDecision decision = lase ? decide_probing(belief, policy) : ProbeDecision{};

      if (pending) {
        const EkfEstimate p_with = filter.predict(pending->estimate_with, u_prev);
        const EkfEstimate p_without = filter.predict(pending->estimate_without, u_prev);
        const SoftMeasurement y_with = pipeline_.process(pending->with, raw, pending->soft_with);
        const SoftMeasurement y_without =
            pipeline_.process(pending->without, raw, pending->soft_without);
        const std::vector<int> rows = common_rows(y_with, y_without);
        Eigen::VectorXd y(static_cast<Eigen::Index>(rows.size()));
        for (std::size_t r = 0; r < rows.size(); ++r) y[r] = y_with.y[rows[r]];
        const ProbingUpdate upd =
            probing_posterior(belief, pending->sensor, y, restrict_prediction(p_with, y_with, rows),
                              restrict_prediction(p_without, y_without, rows));
        if (upd.skipped) {
          ++res.probing_updates_skipped;
        } else {
          ++res.probing_updates;
          belief = upd.belief;
        }
        pending.reset();
      }

      const SensorSet next = lase ? decide_trustable(belief, policy, trusted) : trusted;
      SoftMeasurement soft_used = soft;
      if (next != trusted) {
        ++res.trust_changes;
        // Sensors just re-enabled only contribute from this step on; their
        // buffered readings may still carry the attack that just ended.
        const SensorSet history = next & trusted;
        EkfEstimate prior = pred;
        std::optional<SoftMeasurement> before = prev_soft;
        if (history != trusted && !buffer.empty()) {
          const ReplayResult rr = replay(filter, pipeline_, buffer, history, nullptr, pred);
          prior = filter.predict(rr.estimate, u_prev);
          before = rr.soft;
        }
        soft_used = pipeline_.process(next, raw, before);
        est = filter.update(prior, soft_used).estimate;
      } else if (variant) {
        est = wolf_update(filter, pred, soft, *variant, wolf_c).update.estimate;
      } else if (cfg.method == Method::KalmanPred) {
        est = gate.step(alerts.any(), !attacked.empty()) ? filter.update(pred, soft).estimate
                                                         : pred;
      } else {
        est = filter.update(pred, soft).estimate;
      }

      double u = controller_(est.mean);
      bool probing = false;
      if (decision.probe) {
        const SensorId i = decision.sensor;
        const SensorSet with = next.with(i);
        const SensorSet without = next.without(i);
        std::optional<PendingProbe> candidate;
        if (!without.empty() && !buffer.empty()) {
          PendingProbe pp{i, with, without, est, est, soft_used, soft_used};
          if (with != next) {
            const ReplayResult rw = replay(filter, pipeline_, buffer, with, &raw, pred);
            pp.estimate_with = rw.estimate;
            pp.soft_with = rw.soft;
          }
          const ReplayResult ro = replay(filter, pipeline_, buffer, without, &raw, pred);
          pp.estimate_without = ro.estimate;
          pp.soft_without = ro.soft;
          candidate = pp;
        }
        if (candidate) {
          const std::vector<int> rows = common_rows(candidate->soft_with, candidate->soft_without);
          const EkfEstimate p1 = filter.predict(candidate->estimate_without, u);
          const GaussianPrediction sigma = restrict_prediction(p1, candidate->soft_without, rows);
          const ProbingSolution sol = solve_probing(
              plant_, {candidate->estimate_with.mean, candidate->estimate_with.covariance},
              {candidate->estimate_without.mean, candidate->estimate_without.covariance}, rows,
              sigma.covariance, cfg.safe, u);
          if (!sol.fallback && !rows.empty()) {
            u = sol.u;
            probing = true;
            ++res.probes;
            pending = std::move(candidate);
          } else {
            ++res.probe_fallbacks;
          }
        } else {
          ++res.probe_fallbacks;
        }
      }
      u = saturate(u, cfg.plant.u_max);

      buffer.push({est, raw, u, prev_soft});

      if (cfg.record_steps) {
        StepRecord rec;
        rec.t = t;
        rec.state = x;
        rec.soft = soft.y;
        rec.soft_available = soft.available;
        rec.alerts = alerts;
        rec.decision_belief = decision_belief;
        rec.belief = belief;
        rec.trusted = trusted;
        rec.probing = probing;
        rec.u = u;
        rec.estimate = est.mean;
        rec.attacked = attacked;
        res.steps.push_back(rec);
      }

      res.cost += stage_cost(cfg.weights, x, u) * dt;
      check_failure(x, k);
      if (!res.failed) res.cost_before_failure = res.cost;

      Vec4 w;
      for (int j = 0; j < kStateDim; ++j) w[j] = normal(rng);
      x = plant_.step(x, u, Vec4(noise_factor_ * w));

      prev_soft = soft_used;
      if (full_detector) prev_soft_full = *soft_full;
      prev_alerts = alerts;
      u_prev = u;
      trusted = next;
    }
    check_failure(x, n_steps);
  } catch (const EstimatorFault& e) {
    res.fault = "step " + std::to_string(k) + ": " + e.what();
    res.fault_step = k;
    if (!res.failed) {
      res.failed = true;
      res.failure_step = k;
    }
    // Nothing left to estimate with; the cart coasts unactuated so the log
    // still covers the horizon.
    for (; k < n_steps; ++k) {
      if (cfg.record_steps) {
        StepRecord rec;
        rec.t = k * dt;
        rec.state = x;
        rec.belief = belief;
        rec.decision_belief = belief;
        rec.trusted = trusted;
        rec.estimate = est.mean;
        if (!attacker) rec.attacked = apply_attack(RawMeasurementSet{}, cfg.schedule, rec.t).attacked;
        res.steps.push_back(rec);
      }
      res.cost += stage_cost(cfg.weights, x, 0.0) * dt;
      Vec4 w;
      for (int j = 0; j < kStateDim; ++j) w[j] = normal(rng);
      x = plant_.step(x, 0.0, Vec4(noise_factor_ * w));
    }
  }
  return res;
}

}  // namespace lasead
