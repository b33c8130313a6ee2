#pragma once

#include <vector>

#include "lasead/plant.hpp"
#include "lasead/types.hpp"

namespace lasead {

struct Hypothesis {
  Vec4 mean = Vec4::Zero();
  Mat4 covariance = Mat4::Identity();
};

/// Box on pole angle and cart position enforced on the predicted mean.
struct SafeSet {
  double angle_limit = 0.5;
  double position_limit = 2.4;
  void validate() const;
};

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  bool empty() const { return !(lo <= hi); }
  bool contains(double u, double tol = 0.0) const { return u >= lo - tol && u <= hi + tol; }
  Interval intersect(const Interval& other) const;
};

/// r^{h1} - r^{h0} = drift + input * u, from the affine split at each mean.
struct InnovationGap {
  Vec4 drift = Vec4::Zero();
  Vec4 input = Vec4::Zero();
};

InnovationGap innovation_gap(const CartPole& plant, const Vec4& h0_mean, const Vec4& h1_mean);

/// KL(u) = 0.5 * |drift + input u|^2 in the Sigma^{-1} norm, restricted to
/// `rows`, stored as 0.5 * (a + 2 b u + c u^2).
class KlObjective {
 public:
  KlObjective(const InnovationGap& gap, const std::vector<int>& rows,
              const Eigen::MatrixXd& sigma);

  double operator()(double u) const { return 0.5 * (a_ + 2.0 * b_ * u + c_ * u * u); }
  double constant() const { return a_; }
  double linear() const { return b_; }
  double quadratic() const { return c_; }

 private:
  double a_ = 0.0;
  double b_ = 0.0;
  double c_ = 0.0;
};

/// tr(S1^{-1} S0) - ln(|S0| / |S1|) - n, the covariance part of the Gaussian
/// KL that the probing objective drops. Throws if either is not PD.
double kl_covariance_term(const Eigen::MatrixXd& sigma_h1, const Eigen::MatrixXd& sigma_h0);

/// Inputs u in [-u_max, u_max] whose affine one-step prediction from `x`
/// stays inside the safe box. May be empty.
Interval safety_interval(const CartPole& plant, const Vec4& x, const SafeSet& safe);

struct ProbingSolution {
  double u = 0.0;
  double kl = 0.0;
  bool fallback = false;  // infeasible: u is the nominal input
  Interval feasible;
};

/// Maximizes the (convex) KL objective over the intersection of both
/// hypotheses' safety intervals. Equal endpoints go to the one nearer
/// `u_nominal`.
ProbingSolution solve_probing(const CartPole& plant, const Hypothesis& h0, const Hypothesis& h1,
                              const std::vector<int>& rows, const Eigen::MatrixXd& sigma,
                              const SafeSet& safe, double u_nominal);

}  // namespace lasead
