#include "lasead/probing.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace lasead {

void SafeSet::validate() const {
  if (!(angle_limit > 0.0) || !(position_limit > 0.0) || !std::isfinite(angle_limit) ||
      !std::isfinite(position_limit)) {
    throw std::invalid_argument("safe set bounds must be finite and positive");
  }
}

Interval Interval::intersect(const Interval& other) const {
  return {std::max(lo, other.lo), std::min(hi, other.hi)};
}

InnovationGap innovation_gap(const CartPole& plant, const Vec4& h0_mean, const Vec4& h1_mean) {
  const AffineStep a0 = plant.affine(h0_mean);
  const AffineStep a1 = plant.affine(h1_mean);
  return {a0.drift - a1.drift, a0.input - a1.input};
}

KlObjective::KlObjective(const InnovationGap& gap, const std::vector<int>& rows,
                         const Eigen::MatrixXd& sigma) {
  const auto n = static_cast<Eigen::Index>(rows.size());
  if (sigma.rows() != n || sigma.cols() != n) {
    throw std::invalid_argument("KL covariance does not match the selected rows");
  }
  if (n == 0) return;
  Eigen::VectorXd f(n), g(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    f[r] = gap.drift[rows[r]];
    g[r] = gap.input[rows[r]];
  }
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success) throw std::invalid_argument("KL covariance is not PD");
  const Eigen::VectorXd wf = llt.matrixL().solve(f);
  const Eigen::VectorXd wg = llt.matrixL().solve(g);
  a_ = wf.squaredNorm();
  b_ = wf.dot(wg);
  c_ = wg.squaredNorm();
}

double kl_covariance_term(const Eigen::MatrixXd& sigma_h1, const Eigen::MatrixXd& sigma_h0) {
  Eigen::LLT<Eigen::MatrixXd> l1(sigma_h1), l0(sigma_h0);
  if (l1.info() != Eigen::Success || l0.info() != Eigen::Success) {
    throw std::invalid_argument("covariance is not PD");
  }
  double log_det1 = 0.0, log_det0 = 0.0;
  for (Eigen::Index i = 0; i < sigma_h1.rows(); ++i) {
    log_det1 += 2.0 * std::log(l1.matrixL()(i, i));
    log_det0 += 2.0 * std::log(l0.matrixL()(i, i));
  }
  const double trace = l1.solve(sigma_h0).trace();
  return trace - (log_det0 - log_det1) - static_cast<double>(sigma_h1.rows());
}

namespace {

// {u : |c + d u| <= limit}
Interval band(double c, double d, double limit) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  if (std::abs(d) < 1e-15) {
    return std::abs(c) <= limit ? Interval{-inf, inf} : Interval{1.0, 0.0};
  }
  const double u1 = (-limit - c) / d;
  const double u2 = (limit - c) / d;
  return {std::min(u1, u2), std::max(u1, u2)};
}

}  // namespace

Interval safety_interval(const CartPole& plant, const Vec4& x, const SafeSet& safe) {
  const AffineStep a = plant.affine(x);
  const double u_max = plant.params().u_max;
  Interval out{-u_max, u_max};
  out = out.intersect(band(a.drift[kAngle], a.input[kAngle], safe.angle_limit));
  out = out.intersect(band(a.drift[kPosition], a.input[kPosition], safe.position_limit));
  return out;
}

ProbingSolution solve_probing(const CartPole& plant, const Hypothesis& h0, const Hypothesis& h1,
                              const std::vector<int>& rows, const Eigen::MatrixXd& sigma,
                              const SafeSet& safe, double u_nominal) {
  const KlObjective kl(innovation_gap(plant, h0.mean, h1.mean), rows, sigma);
  const Interval feasible =
      safety_interval(plant, h0.mean, safe).intersect(safety_interval(plant, h1.mean, safe));
  ProbingSolution out;
  out.feasible = feasible;
  if (feasible.empty()) {
    out.u = saturate(u_nominal, plant.params().u_max);
    out.kl = kl(out.u);
    out.fallback = true;
    return out;
  }
  const double k_lo = kl(feasible.lo);
  const double k_hi = kl(feasible.hi);
  const double scale = std::max({1.0, std::abs(k_lo), std::abs(k_hi)});
  if (std::abs(k_lo - k_hi) <= 1e-12 * scale) {
    out.u = std::abs(feasible.lo - u_nominal) <= std::abs(feasible.hi - u_nominal) ? feasible.lo
                                                                                    : feasible.hi;
  } else {
    out.u = k_lo > k_hi ? feasible.lo : feasible.hi;
  }
  out.kl = kl(out.u);
  return out;
}

}  // namespace lasead
