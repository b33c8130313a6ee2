#include <cmath>

#include <doctest.h>

#include "lasead/control.hpp"
#include "support.hpp"

using namespace lasead;

namespace {

Belief belief(double e, double c, double i) { return Belief{{e, c, i}}; }

const SensorSet E = SensorSet::of(SensorId::Encoder);
const SensorSet C = SensorSet::of(SensorId::Camera);
const SensorSet I = SensorSet::of(SensorId::Imu);

ExtendedKalmanFilter make_filter() {
  const CartPole plant;
  return ExtendedKalmanFilter(std::make_shared<CartPoleProcessModel>(plant), plant.params().process_noise);
}

SoftMeasurement soft_full(const Vec4& y, double var = 1e-4) {
  SoftMeasurement s;
  s.y = y;
  s.variance = Vec4::Constant(var);
  s.available.set();
  return s;
}

}  // namespace

TEST_CASE("Riccati solution and LQR gain") {
  const CartPole plant;
  const Linearization lin = plant.linearize(Vec4::Zero(), 0.0);
  const LqrWeights w;
  const Mat4 Q = w.state.asDiagonal();
  const Mat4 P = solve_dare(lin.state_jacobian, lin.input_jacobian, Q, w.input);
  // Fixed point of the Riccati map.
  const Vec4& G = lin.input_jacobian;
  const Mat4& F = lin.state_jacobian;
  const double s = w.input + G.dot(P * G);
  const Mat4 next = Q + F.transpose() * P * F - (F.transpose() * P * G) * (G.transpose() * P * F) / s;
  CHECK((next - P).norm() <= 1e-8 * P.norm());
  CHECK(P.isApprox(P.transpose(), 1e-12));
  CHECK(Eigen::SelfAdjointEigenSolver<Mat4>(P).eigenvalues().minCoeff() > 0.0);

  const LqrController lqr = LqrController::design(plant, w);
  const Eigen::RowVector4d K = (G.transpose() * P * F) / s;
  CHECK((lqr.gain() - K).norm() <= 1e-9 * K.norm());
  CHECK(closed_loop_spectral_radius(plant, lqr.gain()) < 1.0);
  CHECK(closed_loop_spectral_radius(plant, Eigen::RowVector4d::Zero()) > 1.0);  // open loop unstable
}

TEST_CASE("LQR recovers the upright pole from a perfect state") {
  const CartPole plant;
  const LqrController lqr = LqrController::design(plant);
  Vec4 x(0, 0, 0.1, 0);
  const int steps = static_cast<int>(std::round(3.0 / plant.dt()));
  for (int k = 0; k < steps; ++k) {
    const double u = lqr(x);
    CHECK(std::abs(u) <= 10.0);
    x = plant.step(x, u);
  }
  // The pole is back upright within 3 s; the cart returns on the slower
  // mode (time constant about 1.3 s with these weights).
  CHECK(std::abs(x[kAngle]) < 5e-3);
  CHECK(std::abs(x[kAngularVelocity]) < 1e-2);
  const double at3 = x.norm();
  for (int k = 0; k < 7 * steps / 3; ++k) x = plant.step(x, lqr(x));
  CHECK(x.norm() < 1e-3);
  CHECK(x.norm() < at3 * std::pow(closed_loop_spectral_radius(plant, lqr.gain()), 7 * steps / 3) * 50.0);
}

TEST_CASE("control saturates and heavy input cost shrinks the gain") {
  const CartPole plant;
  const LqrController lqr = LqrController::design(plant);
  CHECK(lqr(Vec4(0, 0, 0.8, 0)) == doctest::Approx(std::copysign(10.0, lqr(Vec4(0, 0, 0.01, 0)))));
  double prev = lqr.gain().norm();
  for (double mu : {1e2, 1e4, 1e6}) {
    LqrWeights w;
    w.input = mu;
    const double norm = LqrController::design(plant, w).gain().norm();
    CHECK(norm < prev);
    prev = norm;
  }
  // The pole cannot be stabilized without feedback, so K stays bounded
  // away from zero in the angle entries; the position feedback vanishes.
  LqrWeights w;
  w.input = 1e8;
  const Eigen::RowVector4d k = LqrController::design(plant, w).gain();
  LqrWeights w2 = w;
  w2.input = 1e10;
  const Eigen::RowVector4d k2 = LqrController::design(plant, w2).gain();
  CHECK(std::abs(k2[kPosition]) < std::abs(k[kPosition]));
  CHECK(std::abs(k2[kPosition]) < 1e-3);
  CHECK_THROWS_AS(solve_dare(Mat4::Identity() * 2.0, Vec4::Zero(), Mat4::Identity(), 1.0, 1e-10, 1000),
                  RiccatiDivergence);
}

TEST_CASE("probing decision") {
  const ThresholdPolicy p = ThresholdPolicy::stochastic_tuned();
  CHECK_FALSE(decide_probing(belief(0.01, 0.01, 0.01), p).probe);
  ProbeDecision d = decide_probing(belief(0.55, 0.2, 0.2), p);
  CHECK(d.probe);
  CHECK(d.sensor == SensorId::Encoder);
  d = decide_probing(belief(0.55, 0.58, 0.1), p);
  CHECK(d.sensor == SensorId::Camera);
  d = decide_probing(belief(0.2, 0.56, 0.56), p);
  CHECK(d.sensor == SensorId::Camera);  // tie to lower id
  // The window is open at both ends.
  CHECK_FALSE(decide_probing(belief(0.5, 0.59, 0.95), p).probe);
  d = decide_probing(belief(0.95, 0.9, 0.52), p);
  CHECK(d.sensor == SensorId::Imu);

  SUBCASE("benign window never probes at half resolution") {
    const ThresholdPolicy b = ThresholdPolicy::benign_tuned();
    for (int e = 0; e <= 2; ++e) {
      for (int c = 0; c <= 2; ++c) {
        for (int i = 0; i <= 2; ++i) {
          CHECK_FALSE(decide_probing(belief(std::clamp(0.5 * e, 0.001, 0.999), std::clamp(0.5 * c, 0.001, 0.999),
                                            std::clamp(0.5 * i, 0.001, 0.999)),
                                     b)
                          .probe);
        }
      }
    }
  }
  SUBCASE("probe iff some belief is inside the window (property)") {
    testing::Gen gen(61);
    for (int n = 0; n < 5000; ++n) {
      const Belief b = gen.belief(0.3, 0.8);
      const ProbeDecision r = decide_probing(b, p);
      bool any = false;
      for (double x : b.pi) any = any || (x > p.probe_low && x < p.probe_high);
      CHECK(r.probe == any);
      if (r.probe) {
        const double chosen = b[r.sensor];
        for (double x : b.pi) {
          if (x > p.probe_low && x < p.probe_high) CHECK(chosen >= x);
        }
      }
    }
  }
}

TEST_CASE("trust decision") {
  const ThresholdPolicy p;
  CHECK(decide_trustable(belief(0.99, 0.1, 0.1), p, SensorSet::all()) == (C | I));
  // Hysteresis: a middling belief keeps whatever state the sensor is in.
  CHECK(decide_trustable(belief(0.7, 0.1, 0.1), p, C | I) == (C | I));
  CHECK(decide_trustable(belief(0.7, 0.1, 0.1), p, SensorSet::all()) == SensorSet::all());
  CHECK(decide_trustable(belief(0.3, 0.1, 0.1), p, C | I) == SensorSet::all());
  CHECK(decide_trustable(belief(0.5, 0.1, 0.1), p, C | I) == SensorSet::all());
  CHECK(decide_trustable(belief(0.99, 0.99, 0.99), p, SensorSet::all()).size() == 1);
  CHECK(decide_trustable(belief(0.99, 0.95, 0.999), p, SensorSet::all()) == C);
  CHECK(decide_trustable(belief(0.99, 0.95, 0.999), p, E) == C);

  SUBCASE("never empty, always respects the thresholds (property)") {
    testing::Gen gen(62);
    for (int n = 0; n < 5000; ++n) {
      const Belief b = gen.belief(0.001, 0.999);
      const SensorSet cur = SensorSet::from_bits(static_cast<std::uint8_t>(gen.integer(1, 7)));
      const SensorSet next = decide_trustable(b, p, cur);
      CHECK(next.size() >= 1);
      SensorSet raw;
      for (SensorId id : kAllSensors) {
        if (b[id] <= p.enable || (b[id] < p.disable && cur.contains(id))) raw = raw.with(id);
      }
      if (raw.size() == 0) {
        // Fallback: the least suspicious sensor alone.
        SensorId best = SensorId::Encoder;
        for (SensorId id : kAllSensors) {
          if (b[id] < b[best]) best = id;
        }
        CHECK(next == SensorSet::of(best));
        continue;
      }
      for (SensorId id : kAllSensors) {
        if (b[id] >= p.disable) CHECK_FALSE(next.contains(id));
        if (b[id] <= p.enable) CHECK(next.contains(id));
        if (b[id] > p.enable && b[id] < p.disable) CHECK(next.contains(id) == cur.contains(id));
      }
    }
  }
  SUBCASE("policy validation") {
    CHECK_NOTHROW(ThresholdPolicy::stochastic_tuned().validate());
    CHECK_NOTHROW(ThresholdPolicy::benign_tuned().validate());
    CHECK_THROWS_AS((ThresholdPolicy{0.6, 0.5, 0.9, 0.5}.validate()), std::invalid_argument);
    CHECK_THROWS_AS((ThresholdPolicy{0.5, 0.95, 0.9, 0.5}.validate()), std::invalid_argument);
    CHECK_THROWS_AS((ThresholdPolicy{0.5, 0.59, 0.9, 0.9}.validate()), std::invalid_argument);
  }
}

TEST_CASE("outlier-robust weights") {
  CHECK(wolf_weight(WolfVariant::Imq, 0.0, 0.0, 0.1) == 1.0);
  CHECK(wolf_weight(WolfVariant::Imq, 0.1, 0.0, 0.1) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-15));
  CHECK(wolf_weight(WolfVariant::Md, 0.0, 0.5, 3.0) == 1.0);
  CHECK(wolf_weight(WolfVariant::Md, 0.0, 6.0, 3.0) == doctest::Approx(0.5));
  CHECK(wolf_weight(WolfVariant::Tmd, 0.0, 3.0, 3.0) == 1.0);
  CHECK(wolf_weight(WolfVariant::Tmd, 0.0, 3.0001, 3.0) == 0.0);
  CHECK(to_string(WolfVariant::Md) == "md");
  testing::Gen gen(63);
  for (int n = 0; n < 1000; ++n) {
    const double r = std::abs(gen.normal(2.0)), d = std::abs(gen.normal(5.0)), c = gen.uniform(0.01, 5.0);
    for (WolfVariant v : {WolfVariant::Imq, WolfVariant::Md, WolfVariant::Tmd}) {
      const double w = wolf_weight(v, r, d, c);
      CHECK(w >= 0.0);
      CHECK(w <= 1.0);
      CHECK(wolf_weight(v, r * 2, d * 2, c) <= w);
    }
  }
}

TEST_CASE("outlier-robust update") {
  const ExtendedKalmanFilter f = make_filter();
  EkfEstimate prior;
  prior.mean = Vec4(0.1, 0.0, 0.05, 0.0);
  prior.covariance = Mat4::Identity() * 1e-3;
  const EkfEstimate pred = f.predict(prior, 0.5);

  SUBCASE("zero residual matches the plain update") {
    const SoftMeasurement s = soft_full(pred.mean);
    for (WolfVariant v : {WolfVariant::Imq, WolfVariant::Md, WolfVariant::Tmd}) {
      const WolfResult w = wolf_update(f, pred, s, v, 1.0);
      const UpdateResult plain = f.update(pred, s);
      CHECK(w.weight == 1.0);
      CHECK(w.update.estimate.mean == plain.estimate.mean);
      CHECK(w.update.estimate.covariance == plain.estimate.covariance);
    }
  }
  SUBCASE("truncation skips a gross outlier") {
    const SoftMeasurement s = soft_full(pred.mean + Vec4(1.0, 1.0, 0, 0));
    const WolfResult w = wolf_update(f, pred, s, WolfVariant::Tmd, 3.0);
    CHECK(w.weight == 0.0);
    CHECK(w.update.estimate.mean == pred.mean);
    CHECK(w.update.estimate.covariance == pred.covariance);
  }
  SUBCASE("weight inflates the measurement noise") {
    const SoftMeasurement s = soft_full(pred.mean + Vec4(0.05, 0, 0, 0));
    const WolfResult w = wolf_update(f, pred, s, WolfVariant::Imq, 0.05);
    CHECK(w.weight == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));
    const UpdateResult ref = f.update(pred, s, 2.0);
    CHECK((w.update.estimate.mean - ref.estimate.mean).norm() < 1e-15);
    // A smaller step than the unweighted update.
    const UpdateResult plain = f.update(pred, s);
    CHECK(std::abs(w.update.estimate.mean[0] - pred.mean[0]) < std::abs(plain.estimate.mean[0] - pred.mean[0]));
  }
}

TEST_CASE("prediction-only latch") {
  SUBCASE("quiet detector always updates") {
    KalmanPredGate g;
    for (int k = 0; k < 100; ++k) CHECK(g.step(false, k > 30 && k < 60));
  }
  SUBCASE("holds from the alert until the oracle clears") {
    KalmanPredGate g;
    const int onset = 600, alert = 640, end = 1200;
    int updates_in_span = 0;
    for (int k = 0; k < 2000; ++k) {
      const bool active = k >= onset && k < end;
      const bool update = g.step(k == alert, active);
      if (k >= alert && k < end) updates_in_span += update;
      if (k < alert || k >= end) CHECK(update);
    }
    CHECK(updates_in_span == 0);
  }
  SUBCASE("covariance grows while holding") {
    const ExtendedKalmanFilter f = make_filter();
    EkfEstimate e;
    e.covariance = Mat4::Identity() * 1e-6;
    KalmanPredGate g;
    double prev = e.covariance.trace();
    for (int k = 0; k < 400; ++k) {
      e = f.predict(e, 0.0);
      if (g.step(k == 0, true)) e = f.update(e, soft_full(Vec4::Zero())).estimate;
      CHECK(e.covariance.trace() > prev);
      prev = e.covariance.trace();
    }
    CHECK(g.holding());
  }
}
