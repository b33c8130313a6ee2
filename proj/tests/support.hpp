#pragma once

// Shared helpers for the test executables: a small random generator for
// property tests and the independent reference implementations the library
// is checked against.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "lasead/belief.hpp"
#include "lasead/detection.hpp"
#include "lasead/perception.hpp"
#include "lasead/types.hpp"

namespace testing {

using lasead::Vec4;

class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng_);
  }
  double normal(double sd = 1.0) { return std::normal_distribution<double>(0.0, sd)(rng_); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  bool coin(double p = 0.5) { return uniform(0.0, 1.0) < p; }

  Vec4 vec4(double lo, double hi) {
    return {uniform(lo, hi), uniform(lo, hi), uniform(lo, hi), uniform(lo, hi)};
  }

  lasead::AlertVector alerts() {
    lasead::AlertVector a;
    for (int j = 0; j < lasead::kStateDim; ++j) a[j] = coin();
    return a;
  }

  lasead::Belief belief(double lo = 0.01, double hi = 0.99) {
    return lasead::Belief{{uniform(lo, hi), uniform(lo, hi), uniform(lo, hi)}};
  }

  Eigen::MatrixXd spd(int n, double scale = 1.0) {
    Eigen::MatrixXd a(n, n);
    for (int r = 0; r < n; ++r) {
      for (int c = 0; c < n; ++c) a(r, c) = normal();
    }
    return scale * (a * a.transpose() + 0.1 * Eigen::MatrixXd::Identity(n, n));
  }

  lasead::DetectorCharacterization detector() {
    lasead::DetectorCharacterization d;
    for (int j = 0; j < lasead::kStateDim; ++j) {
      d.eta0[j] = uniform(0.005, 0.3);
      d.eta1[j] = uniform(0.005, 0.6);
      d.xi0[j] = {uniform(0.5, 10.0), uniform(0.5, 10.0)};
      d.xi1[j] = {uniform(0.5, 10.0), uniform(0.5, 10.0)};
    }
    return d;
  }

  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

// Brute-force posterior over the full joint table of (z, s, a). Every s in
// {0,1}^4 is enumerated with a deterministic-OR indicator instead of
// computing s directly, and missed-detection rates are marginalized against
// the Beta prior through the Beta function rather than its mean formula.
class JointTableOracle {
 public:
  JointTableOracle(const lasead::PerceptionGraph& graph,
                   const lasead::DetectorCharacterization& d)
      : d_(d) {
    for (int j = 0; j < lasead::kStateDim; ++j) {
      for (int i = 0; i < lasead::kSensorCount; ++i) {
        edge_[i][j] = graph.has_edge(static_cast<lasead::SensorId>(i), j);
      }
      for (int prev = 0; prev < 2; ++prev) {
        const lasead::BetaPrior& b = prev ? d.xi1[j] : d.xi0[j];
        miss_[j][prev] = beta_mean_from_gamma(b.alpha, b.beta);
      }
    }
  }

  std::array<double, 3> posterior(const std::array<double, 3>& prior,
                                  const lasead::AlertVector& a,
                                  const lasead::AlertVector& a_prev) const {
    std::array<double, 3> num{0.0, 0.0, 0.0};
    double total = 0.0;
    for (int z = 0; z < 8; ++z) {
      double pz = 1.0;
      for (int i = 0; i < 3; ++i) pz *= ((z >> i) & 1) ? prior[i] : 1.0 - prior[i];
      for (int s = 0; s < 16; ++s) {
        double ps = 1.0;
        for (int j = 0; j < 4; ++j) {
          bool any = false;
          for (int i = 0; i < 3; ++i) any = any || (edge_[i][j] && ((z >> i) & 1));
          ps *= (((s >> j) & 1) == static_cast<int>(any)) ? 1.0 : 0.0;
        }
        if (ps == 0.0) continue;
        double pa = 1.0;
        for (int j = 0; j < 4; ++j) {
          const int prev = a_prev[j] ? 1 : 0;
          const bool alert = a[j];
          if (((s >> j) & 1) == 0) {
            const double eta = prev ? d_.eta1[j] : d_.eta0[j];
            pa *= alert ? eta : 1.0 - eta;
          } else {
            const double miss = miss_[j][prev];
            pa *= alert ? 1.0 - miss : miss;
          }
        }
        const double w = pz * ps * pa;
        total += w;
        for (int i = 0; i < 3; ++i) {
          if ((z >> i) & 1) num[i] += w;
        }
      }
    }
    std::array<double, 3> out{};
    for (int i = 0; i < 3; ++i) {
      out[i] = std::clamp(num[i] / total, lasead::kBeliefClamp, 1.0 - lasead::kBeliefClamp);
    }
    return out;
  }

  // E[xi] for xi ~ Beta(a, b) as B(a + 1, b) / B(a, b), via log-gamma.
  static double beta_mean_from_gamma(double a, double b) {
    return std::exp(std::lgamma(a + 1.0) + std::lgamma(a + b) - std::lgamma(a) -
                    std::lgamma(a + b + 1.0));
  }

 private:
  lasead::DetectorCharacterization d_;
  std::array<std::array<bool, 4>, 3> edge_{};
  std::array<std::array<double, 2>, 4> miss_{};
};

// Textbook linear Kalman filter (covariance form, short-form update).
struct LinearKf {
  Eigen::MatrixXd A, B, Q, H, R;
  Eigen::VectorXd x;
  Eigen::MatrixXd P;

  void predict(double u) {
    x = A * x + B * u;
    P = A * P * A.transpose() + Q;
  }
  void update(const Eigen::VectorXd& y) {
    const Eigen::MatrixXd S = H * P * H.transpose() + R;
    const Eigen::MatrixXd K = P * H.transpose() * S.inverse();
    x = x + K * (y - H * x);
    P = (Eigen::MatrixXd::Identity(P.rows(), P.cols()) - K * H) * P;
    P = 0.5 * (P + P.transpose());
  }
};

}  // namespace testing
