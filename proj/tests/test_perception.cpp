#include <cmath>

#include <doctest.h>

#include "lasead/perception.hpp"
#include "support.hpp"

using namespace lasead;

namespace {

const SensorSet E = SensorSet::of(SensorId::Encoder);
const SensorSet C = SensorSet::of(SensorId::Camera);
const SensorSet I = SensorSet::of(SensorId::Imu);

RawMeasurementSet exact_raw(const Vec4& x, double accel) {
  RawMeasurementSet raw;
  raw.of(SensorId::Encoder) = {x[kPosition], x[kVelocity]};
  raw.of(SensorId::Camera) = {x[kPosition], x[kAngle]};
  raw.of(SensorId::Imu) = {accel, x[kAngularVelocity]};
  return raw;
}

SoftMeasurement full_soft(const Vec4& y, const Vec4& var) {
  SoftMeasurement s;
  s.y = y;
  s.variance = var;
  s.available.set();
  return s;
}

}  // namespace

TEST_CASE("graph neighborhoods") {
  const PerceptionGraph g = PerceptionGraph::cart_pole();
  CHECK(g.neighbors(kPosition) == (E | C));
  CHECK(g.neighbors(kVelocity) == (E | I));
  CHECK(g.neighbors(kAngle) == C);
  CHECK(g.neighbors(kAngularVelocity) == I);
  CHECK_THROWS_AS(g.neighbors(4), std::out_of_range);
  CHECK_THROWS_AS(g.neighbors(-1), std::out_of_range);
  CHECK(g.covers_all_components());
  CHECK(g.propagate(E) == ComponentMask("0011"));
  CHECK(g.propagate(C) == ComponentMask("0101"));
  CHECK(g.propagate(I) == ComponentMask("1010"));
  CHECK(g.propagate(SensorSet::none()).none());
  CHECK_FALSE(PerceptionGraph({{SensorId::Encoder, 0}}).covers_all_components());
}

TEST_CASE("graph JSON round trip and errors") {
  const PerceptionGraph g = PerceptionGraph::cart_pole();
  CHECK(PerceptionGraph::from_json(g.to_json()) == g);
  CHECK(PerceptionGraph::from_json(R"([{"sensor":"Imu","component":3}])").neighbors(3) == I);
  CHECK_THROWS_AS(PerceptionGraph::from_json(R"({"edges":[{"sensor":"Lidar","component":0}]})"),
                  std::invalid_argument);
  CHECK_THROWS_AS(PerceptionGraph::from_json(R"({"edges":[{"sensor":"Imu","component":"spin"}]})"),
                  std::invalid_argument);
  CHECK_THROWS_AS(PerceptionGraph::from_json("{not json"), std::invalid_argument);
  CHECK_THROWS(PerceptionGraph::from_json(R"({"edges":[{"sensor":"Imu","component":9}]})"));
}

TEST_CASE("position fusion weight and variance") {
  const PerceptionPipeline pipe(SensorNoise{}, 0.005);
  CHECK(fusion_weight(1e-4, 4e-4) == doctest::Approx(0.8));
  RawMeasurementSet raw;
  raw.of(SensorId::Encoder) = {1.0, 0.0};
  raw.of(SensorId::Camera) = {2.0, 0.0};
  const SoftMeasurement s = pipe.process(E | C, raw, std::nullopt);
  CHECK(s.y[kPosition] == doctest::Approx(0.8 * 1.0 + 0.2 * 2.0));
  CHECK(s.variance[kPosition] == doctest::Approx(1.0 / (1.0 / 1e-4 + 1.0 / 4e-4)));
  CHECK(s.variance[kPosition] == doctest::Approx(0.8e-4));
}

TEST_CASE("fusion is a convex combination that never loses information (property)") {
  testing::Gen gen(8);
  for (int n = 0; n < 2000; ++n) {
    const double va = std::pow(10.0, gen.uniform(-8, 1));
    const double vb = std::pow(10.0, gen.uniform(-8, 1));
    const double w = fusion_weight(va, vb);
    CHECK(w >= 0.0);
    CHECK(w <= 1.0);
    const double fused = w * w * va + (1 - w) * (1 - w) * vb;
    CHECK(fused <= std::min(va, vb) * (1.0 + 1e-12));
    CHECK(fused == doctest::Approx(1.0 / (1.0 / va + 1.0 / vb)).epsilon(1e-12));
  }
  CHECK(fusion_weight(0.0, 0.0) == 1.0);
}

TEST_CASE("every subset reproduces the truth from noiseless direct sources (property)") {
  const PerceptionPipeline pipe(SensorNoise::zero(), 0.005);
  testing::Gen gen(9);
  for (int n = 0; n < 200; ++n) {
    const Vec4 x = gen.vec4(-1.0, 1.0);
    const RawMeasurementSet raw = exact_raw(x, gen.normal());
    for (std::uint8_t bits = 0; bits < 8; ++bits) {
      const SensorSet s = SensorSet::from_bits(bits);
      const SoftMeasurement soft = pipe.process(s, raw, std::nullopt);
      CHECK(soft.available == PerceptionPipeline::reachable(s, false));
      for (int j : soft.rows()) CHECK(soft.y[j] == x[j]);
    }
  }
}

TEST_CASE("full sensor set, zero noise, is the identity") {
  const PerceptionPipeline pipe(SensorNoise::zero(), 0.005);
  const Vec4 x(0.4, -0.2, 0.1, 0.3);
  const double accel = 0.7;
  // A previous soft value consistent with Euler integration of the IMU.
  const SoftMeasurement prev = full_soft(Vec4(0, x[kVelocity] - 0.005 * accel, 0, 0), Vec4::Zero());
  const SoftMeasurement s = pipe.process(SensorSet::all(), exact_raw(x, accel), prev);
  CHECK(s.available.all());
  CHECK((s.y - x).norm() < 1e-15);
  const MeasurementModel m = pipeline_model(s);
  CHECK(m.selection.rows() == 4);
  CHECK(m.selection.isApprox(Eigen::MatrixXd::Identity(4, 4)));
}

TEST_CASE("encoder disabled: camera position, IMU-integrated velocity") {
  const SensorNoise noise;
  const PerceptionPipeline pipe(noise, 0.005, Vec4(0, 2e-5, 3e-6, 0));
  const Vec4 x(0.4, -0.2, 0.1, 0.3);
  const SoftMeasurement prev = full_soft(Vec4(0.39, -0.25, 0.09, 0.2), Vec4(1e-4, 2e-4, 1e-4, 1e-4));
  const RawMeasurementSet raw = exact_raw(x, 2.0);
  const SoftMeasurement s = pipe.process(C | I, raw, prev);
  CHECK(s.available.all());
  CHECK(s.y[kPosition] == x[kPosition]);
  CHECK(s.variance[kPosition] == noise.camera[0]);
  CHECK(s.y[kVelocity] == doctest::Approx(-0.25 + 0.005 * 2.0));
  CHECK(s.variance[kVelocity] == doctest::Approx(2e-4 + 0.005 * 0.005 * noise.imu[0] + 2e-5));
  CHECK(s.y[kAngle] == x[kAngle]);
  CHECK(s.y[kAngularVelocity] == x[kAngularVelocity]);
}

TEST_CASE("fallback chains") {
  const SensorNoise noise;
  const double dt = 0.005;
  const Vec4 extra(0, 2e-5, 3e-6, 0);
  const PerceptionPipeline pipe(noise, dt, extra);
  const Vec4 x(0.4, -0.2, 0.1, 0.3);
  const RawMeasurementSet raw = exact_raw(x, 2.0);
  const SoftMeasurement prev = full_soft(Vec4(0.39, -0.25, 0.09, 0.2), Vec4(1e-4, 2e-4, 3e-4, 1e-4));

  SUBCASE("angle from the IMU rate without the camera") {
    const SoftMeasurement s = pipe.process(E | I, raw, prev);
    CHECK(s.y[kAngle] == doctest::Approx(0.09 + dt * 0.3));
    CHECK(s.variance[kAngle] == doctest::Approx(3e-4 + dt * dt * noise.imu[1] + extra[kAngle]));
    CHECK(s.y[kPosition] == x[kPosition]);
  }
  SUBCASE("angular rate from differenced camera angle without the IMU") {
    const SoftMeasurement s = pipe.process(E | C, raw, prev);
    CHECK(s.y[kAngularVelocity] == doctest::Approx((0.1 - 0.09) / dt));
    CHECK(s.variance[kAngularVelocity] == doctest::Approx((noise.camera[1] + 3e-4) / (dt * dt)));
    CHECK(s.y[kVelocity] == x[kVelocity]);  // encoder alone
  }
  SUBCASE("velocity from differenced position with only the camera") {
    const SoftMeasurement s = pipe.process(C, raw, prev);
    CHECK(s.y[kVelocity] == doctest::Approx((0.4 - 0.39) / dt));
    CHECK(s.variance[kVelocity] == doctest::Approx((noise.camera[0] + 1e-4) / (dt * dt)));
    CHECK(s.available.all());
  }
  SUBCASE("encoder alone has no angle information") {
    const SoftMeasurement s = pipe.process(E, raw, prev);
    CHECK(s.available == ComponentMask("0011"));
    const MeasurementModel m = pipeline_model(s);
    CHECK(m.rows == std::vector<int>{kPosition, kVelocity});
  }
  SUBCASE("empty set gives an empty model") {
    const SoftMeasurement s = pipe.process(SensorSet::none(), raw, prev);
    CHECK(s.available.none());
    CHECK(pipeline_model(s).rows.empty());
    CHECK(pipeline_model(s).selection.rows() == 0);
  }
  SUBCASE("no fallback without a previous value") {
    const SoftMeasurement s = pipe.process(C, raw, std::nullopt);
    CHECK(s.available == ComponentMask("0101"));
  }
}

TEST_CASE("reachability matches process over all subsets") {
  const PerceptionPipeline pipe(SensorNoise{}, 0.005);
  const SoftMeasurement prev = full_soft(Vec4::Zero(), Vec4::Constant(1e-4));
  const RawMeasurementSet raw = exact_raw(Vec4(0.1, 0.2, 0.3, 0.4), 0.5);
  for (std::uint8_t bits = 0; bits < 8; ++bits) {
    const SensorSet s = SensorSet::from_bits(bits);
    CHECK(pipe.process(s, raw, prev).available == PerceptionPipeline::reachable(s, true));
    CHECK(pipe.process(s, raw, std::nullopt).available == PerceptionPipeline::reachable(s, false));
  }
}

TEST_CASE("pipeline rejects bad configuration") {
  CHECK_THROWS_AS(PerceptionPipeline(SensorNoise{}, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(PerceptionPipeline(SensorNoise{}, 0.005, Vec4(0, -1, 0, 0)),
                  std::invalid_argument);
  SensorNoise bad;
  bad.camera[0] = -1.0;
  CHECK_THROWS_AS(PerceptionPipeline(bad, 0.005), std::invalid_argument);
}
