#include <cmath>
#include <limits>

#include <doctest.h>

#include "lasead/probing.hpp"
#include "support.hpp"

using namespace lasead;

namespace {

const std::vector<int> kAllRows{0, 1, 2, 3};

Hypothesis at(const Vec4& mean) { return {mean, Mat4::Identity() * 1e-4}; }

SafeSet wide() {
  SafeSet s;
  s.angle_limit = 1e9;
  s.position_limit = 1e9;
  return s;
}

// Objective evaluated directly from the gap, independent of KlObjective.
double direct_kl(const InnovationGap& gap, const std::vector<int>& rows, const Eigen::MatrixXd& sigma,
                 double u) {
  Eigen::VectorXd r(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) r[i] = gap.drift[rows[i]] + gap.input[rows[i]] * u;
  return 0.5 * r.dot(sigma.ldlt().solve(r));
}

}  // namespace

TEST_CASE("innovation gap") {
  const CartPole plant;
  SUBCASE("identical means") {
    const Vec4 x(0.3, -0.1, 0.2, 0.4);
    const InnovationGap g = innovation_gap(plant, x, x);
    CHECK(g.drift == Vec4::Zero());
    CHECK(g.input == Vec4::Zero());
  }
  SUBCASE("position offset leaves the input gain untouched") {
    const InnovationGap g = innovation_gap(plant, Vec4(0.7, 0.1, 0.05, 0.0), Vec4(-0.2, 0.1, 0.05, 0.0));
    for (int j = 0; j < 4; ++j) CHECK(std::abs(g.input[j]) < 1e-15);
    CHECK(g.drift[kPosition] == doctest::Approx(0.9).epsilon(1e-12));
  }
  SUBCASE("angle offset changes the input gain") {
    const InnovationGap g = innovation_gap(plant, Vec4(0, 0, 0.0, 0), Vec4(0, 0, 0.2, 0));
    CHECK(std::abs(g.input[kVelocity]) > 1e-6);
    CHECK(std::abs(g.input[kAngularVelocity]) > 1e-6);
    // Mirror-image hypotheses have the same gain, so only the drift differs.
    const InnovationGap m = innovation_gap(plant, Vec4(0, 0, 0.1, 0), Vec4(0, 0, -0.1, 0));
    CHECK(m.input.norm() < 1e-15);
    CHECK(std::abs(m.drift[kAngle]) > 0.1);
  }
}

TEST_CASE("KL objective") {
  const CartPole plant;
  SUBCASE("zero gap is zero everywhere") {
    const KlObjective kl(InnovationGap{}, kAllRows, Eigen::MatrixXd::Identity(4, 4));
    for (double u : {-10.0, -1.0, 0.0, 3.0, 10.0}) CHECK(kl(u) == 0.0);
  }
  SUBCASE("pure gain gap with unit covariance") {
    InnovationGap gap;
    gap.input = Vec4(0.1, -0.2, 0.0, 0.3);
    const KlObjective kl(gap, kAllRows, Eigen::MatrixXd::Identity(4, 4));
    for (double u : {-10.0, -2.5, 0.0, 7.0}) {
      CHECK(kl(u) == doctest::Approx(0.5 * gap.input.squaredNorm() * u * u).epsilon(1e-14));
    }
    const ProbingSolution s = solve_probing(plant, at(Vec4::Zero()), at(Vec4::Zero()), {}, Eigen::MatrixXd(0, 0),
                                            wide(), 0.0);
    CHECK(s.kl == 0.0);
  }
  SUBCASE("matches the Mahalanobis form on random draws (property)") {
    testing::Gen gen(31);
    for (int n = 0; n < 500; ++n) {
      InnovationGap gap{gen.vec4(-1, 1), gen.vec4(-1, 1)};
      std::vector<int> rows;
      for (int j = 0; j < 4; ++j) {
        if (gen.coin()) rows.push_back(j);
      }
      if (rows.empty()) rows.push_back(gen.integer(0, 3));
      const Eigen::MatrixXd sigma = gen.spd(static_cast<int>(rows.size()), 0.1);
      const KlObjective kl(gap, rows, sigma);
      const double u = gen.uniform(-10, 10);
      CHECK(kl(u) == doctest::Approx(direct_kl(gap, rows, sigma, u)).epsilon(1e-9));
      CHECK(kl.quadratic() >= 0.0);
    }
  }
  SUBCASE("argument checks") {
    CHECK_THROWS_AS(KlObjective(InnovationGap{}, {0, 1}, Eigen::MatrixXd::Identity(3, 3)), std::invalid_argument);
    CHECK_THROWS_AS(KlObjective(InnovationGap{}, {0}, -Eigen::MatrixXd::Identity(1, 1)), std::invalid_argument);
  }
}

TEST_CASE("covariance term of the Gaussian KL") {
  testing::Gen gen(32);
  const Eigen::MatrixXd s = gen.spd(3);
  CHECK(std::abs(kl_covariance_term(s, s)) < 1e-12);
  const Eigen::MatrixXd t = gen.spd(3);
  CHECK(kl_covariance_term(s, t) > 0.0);
  CHECK_THROWS_AS(kl_covariance_term(Eigen::MatrixXd::Zero(2, 2), Eigen::MatrixXd::Identity(2, 2)),
                  std::invalid_argument);
}

TEST_CASE("safety interval") {
  const CartPole plant;
  SUBCASE("huge box gives the actuator range") {
    const Interval i = safety_interval(plant, Vec4(0.1, 0.2, 0.05, -0.1), wide());
    CHECK(i.lo == -10.0);
    CHECK(i.hi == 10.0);
  }
  SUBCASE("predicted angle on the bound leaves one side open") {
    const Vec4 x(0.0, 0.0, 0.1, 0.3);
    const AffineStep a = plant.affine(x);
    SafeSet s = wide();
    s.angle_limit = a.drift[kAngle];
    const Interval i = safety_interval(plant, x, s);
    // The angle gain is negative: pushing the cart right tips the pole left.
    REQUIRE(a.input[kAngle] < 0.0);
    CHECK(std::abs(i.lo) < 1e-9);
    CHECK(i.hi == 10.0);
    CHECK(i.contains(0.0, 1e-12));
  }
  SUBCASE("contradictory hypotheses trigger the fallback") {
    SafeSet s;
    s.position_limit = 0.5;
    const Hypothesis left = at(Vec4(-0.6, 0, 0, 0));
    const Hypothesis right = at(Vec4(0.6, 0, 0, 0));
    CHECK(safety_interval(plant, left.mean, s).empty());
    const ProbingSolution sol = solve_probing(plant, left, right, kAllRows, Eigen::MatrixXd::Identity(4, 4), s, 14.0);
    CHECK(sol.fallback);
    CHECK(sol.u == 10.0);
    CHECK(sol.kl == doctest::Approx(direct_kl(innovation_gap(plant, left.mean, right.mean), kAllRows,
                                              Eigen::MatrixXd::Identity(4, 4), 10.0)));
  }
  SUBCASE("validation") {
    SafeSet s;
    s.angle_limit = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);
    s.angle_limit = -1.0;
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  }
}

TEST_CASE("symmetric objective breaks the tie toward the nominal input") {
  const CartPole plant;
  // The gravity pull on the cart peaks near 45 degrees, so a steeper angle
  // with the same velocity drift exists. Weighting only that row leaves a
  // pure c u^2 objective.
  const Vec4 h0(0, 0, 0.3, 0);
  auto gap_at = [&](double th) {
    return innovation_gap(plant, h0, Vec4(0, 0, th, 0)).drift[kVelocity];
  };
  double lo = 0.8, hi = 1.5;
  REQUIRE(gap_at(lo) * gap_at(hi) < 0.0);
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (gap_at(mid) * gap_at(lo) > 0.0 ? lo : hi) = mid;
  }
  const Vec4 h1(0, 0, lo, 0);
  const InnovationGap gap = innovation_gap(plant, h0, h1);
  REQUIRE(std::abs(gap.drift[kVelocity]) < 1e-15);
  REQUIRE(std::abs(gap.input[kVelocity]) > 1e-5);
  const std::vector<int> rows{kVelocity};
  const Eigen::MatrixXd sigma = Eigen::MatrixXd::Identity(1, 1) * 1e-4;
  for (double nominal : {3.0, -3.0, 0.5, -12.0}) {
    const ProbingSolution s = solve_probing(plant, at(h0), at(h1), rows, sigma, wide(), nominal);
    CHECK(s.u == (nominal > 0 ? 10.0 : -10.0));
    CHECK_FALSE(s.fallback);
  }
  // Constant objective (position-only difference): every input ties.
  const ProbingSolution c = solve_probing(plant, at(Vec4::Zero()), at(Vec4(0.2, 0, 0, 0)), kAllRows,
                                          Eigen::MatrixXd::Identity(4, 4), wide(), -1.0);
  CHECK(c.u == -10.0);
}

TEST_CASE("objective increasing over [2, 3] picks the upper end") {
  const CartPole plant;
  // Position does not enter the dynamics, so each hypothesis' position band
  // can be placed by choosing its cart position.
  auto placed = [&](double theta, double centre, double width, double& limit) {
    const AffineStep a = plant.affine(Vec4(0, 0, theta, 0));
    limit = 0.5 * width * std::abs(a.input[kPosition]);
    return Vec4(-a.drift[kPosition] - centre * a.input[kPosition], 0, theta, 0);
  };
  double limit = 0.0, unused = 0.0;
  const Vec4 x0 = placed(0.0, 2.5, 1.0, limit);
  const Vec4 x1 = placed(0.2, 2.5, 1.0, unused);
  SafeSet s;
  s.angle_limit = 1.0;
  s.position_limit = limit;
  CHECK(safety_interval(plant, x0, s).lo == doctest::Approx(2.0).epsilon(1e-9));
  CHECK(safety_interval(plant, x0, s).hi == doctest::Approx(3.0).epsilon(1e-9));

  const std::vector<int> rows{kVelocity, kAngularVelocity};
  const Eigen::MatrixXd sigma = Eigen::MatrixXd::Identity(2, 2) * 1e-4;
  const KlObjective kl(innovation_gap(plant, x0, x1), rows, sigma);
  // Vertex of the convex quadratic sits below the interval.
  REQUIRE(-kl.linear() / kl.quadratic() < 2.0);
  const ProbingSolution sol = solve_probing(plant, at(x0), at(x1), rows, sigma, s, 2.1);
  CHECK_FALSE(sol.fallback);
  CHECK(sol.u == sol.feasible.hi);
  CHECK(sol.u == doctest::Approx(3.0).epsilon(1e-3));
  CHECK(sol.kl > kl(2.5));
}

TEST_CASE("solve_probing matches a dense grid (property)") {
  const CartPole plant;
  testing::Gen gen(33);
  constexpr int kGrid = 100000;
  int fallbacks = 0;
  for (int n = 0; n < 1000; ++n) {
    const Hypothesis h0 = at(Vec4(gen.uniform(-2, 2), gen.normal(0.5), gen.uniform(-0.4, 0.4), gen.normal(0.5)));
    Hypothesis h1 = h0;
    h1.mean += Vec4(gen.normal(0.05), gen.normal(0.1), gen.normal(0.05), gen.normal(0.2));
    std::vector<int> rows;
    for (int j = 0; j < 4; ++j) {
      if (gen.coin(0.7)) rows.push_back(j);
    }
    if (rows.empty()) rows.push_back(gen.integer(0, 3));
    const Eigen::MatrixXd sigma = gen.spd(static_cast<int>(rows.size()), 1e-3);
    SafeSet safe;
    safe.angle_limit = gen.uniform(0.3, 0.6);
    safe.position_limit = gen.uniform(1.5, 3.0);
    const double nominal = gen.uniform(-15, 15);
    const ProbingSolution sol = solve_probing(plant, h0, h1, rows, sigma, safe, nominal);
    const InnovationGap gap = innovation_gap(plant, h0.mean, h1.mean);
    if (sol.fallback) {
      ++fallbacks;
      CHECK(sol.u == saturate(nominal, 10.0));
      continue;
    }
    const Interval i0 = safety_interval(plant, h0.mean, safe), i1 = safety_interval(plant, h1.mean, safe);
    CHECK(i0.contains(sol.u, 1e-12));
    CHECK(i1.contains(sol.u, 1e-12));
    CHECK(std::abs(sol.u) <= 10.0);
    const Eigen::MatrixXd w = sigma.inverse();
    Eigen::VectorXd f(rows.size()), g(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      f[r] = gap.drift[rows[r]];
      g[r] = gap.input[rows[r]];
    }
    const double ff = f.dot(w * f), fg = f.dot(w * g), gg = g.dot(w * g);
    double best = -1.0;
    for (int k = 0; k <= kGrid; ++k) {
      const double u = sol.feasible.lo + (sol.feasible.hi - sol.feasible.lo) * k / kGrid;
      best = std::max(best, 0.5 * (ff + 2.0 * fg * u + gg * u * u));
    }
    CHECK(sol.kl >= best - 1e-6 * std::max(1.0, best));
    CHECK(sol.kl <= best + 1e-6 * std::max(1.0, best));
    if (sol.feasible.contains(nominal)) CHECK(sol.kl >= direct_kl(gap, rows, sigma, nominal) - 1e-9);
  }
  // Most draws start well inside the safe box.
  CHECK(fallbacks < 200);
}
