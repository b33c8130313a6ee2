#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace lasead::pomdp {

/// Binary hidden chain; only the "to 1" probabilities are stored.
struct Chain2 {
  double a01 = 0.02;  // P(z' = 1 | z = 0)
  double a11 = 0.98;  // P(z' = 1 | z = 1)
  void validate() const;
  Eigen::Matrix2d matrix() const;
};

struct SensorModel2 {
  double alpha = 0.1;  // P(o = 1 | z = 0)
  double tau = 0.9;    // P(o = 1 | z = 1)
  void validate() const;
  /// (O)_{ij} = P(o = i | z = j).
  Eigen::Matrix2d observation_matrix() const;
};

struct PomdpConfig {
  SensorModel2 cheap{0.3, 0.7};
  SensorModel2 expensive{0.05, 0.95};
  Chain2 chain{};
  double lambda = 0.05;
  double gamma = 0.9;
  int grid = 10000;  // number of intervals; grid + 1 points
  double tolerance = 1e-10;
  int max_iterations = 100000;

  /// Throws std::invalid_argument listing every violated constraint.
  void validate() const;
  static PomdpConfig from_json(std::string_view text);
  std::string to_json() const;
};

/// Alpha_E < alpha_C, tau_E > tau_C and alpha_s < tau_s.
bool sensors_ordered(const SensorModel2& cheap, const SensorModel2& expensive);

double predict(const Chain2& chain, double pi);
double update(const SensorModel2& sensor, double pi_prior, int observation);
/// P(o = 1) and P(o = 0) at belief pi.
double observation_probability(const SensorModel2& sensor, double pi, int observation);

/// Expected posterior MAP error, min-of-affine form.
double posterior_loss(const SensorModel2& sensor, double pi);
/// Same quantity through the observation probabilities and the update map.
double posterior_loss_bayes(const SensorModel2& sensor, double pi);

struct Breakpoints {
  double lower;  // alpha / (tau + alpha)
  double upper;  // (1 - alpha) / (2 - alpha - tau)
};
Breakpoints breakpoints(const SensorModel2& sensor);

/// A(pi) = L_C(pi) - L_E(pi).
double advantage(const SensorModel2& cheap, const SensorModel2& expensive, double pi);

struct Region {
  double lo;
  double hi;
};

/// Open super-level set {A > lambda}, computed from the piecewise-linear
/// form of A. Throws std::invalid_argument if the sensors are not ordered.
std::optional<Region> myopic_region(const SensorModel2& cheap, const SensorModel2& expensive,
                                    double lambda);

struct Garbling {
  Eigen::Matrix2d matrix;
  bool valid = false;  // stochastic with entries in [0, 1]
};

/// G with O_C = O_E G. Throws if O_E is singular.
Garbling garbling_matrix(const SensorModel2& cheap, const SensorModel2& expensive);

enum class Action { Cheap = 0, Expensive = 1 };

struct ValueIterationResult {
  std::vector<double> belief;  // grid over the predicted belief
  std::vector<double> value;
  std::vector<Action> policy;
  std::vector<Action> myopic;
  std::vector<double> q_cheap;
  std::vector<double> q_expensive;
  std::vector<double> deltas;  // sup-norm change per sweep
  int iterations = 0;
  bool converged = false;
};

/// Bellman iteration on the predicted belief pi^-:
///   V(p) = min_s lambda 1{s=E} + L_s(p) + gamma sum_o P_s(o|p) V(T(U_s(p, o)))
/// with V linearly interpolated between grid points.
ValueIterationResult value_iteration(const PomdpConfig& config);

struct DominanceReport {
  std::optional<Region> region;
  Breakpoints cheap_breakpoints;
  Breakpoints expensive_breakpoints;
  Garbling garbling;
  int grid_points = 0;
  int myopic_points = 0;
  int optimal_points = 0;
  int violations = 0;          // myopic probes, optimal does not
  double extra_measure = 0.0;  // fraction of grid where only the optimal probes
  std::vector<double> violating_beliefs;
  int iterations = 0;
  bool converged = false;

  std::string to_json() const;
};

DominanceReport verify_dominance(const PomdpConfig& config, const ValueIterationResult& vi);
DominanceReport verify_dominance(const PomdpConfig& config);

/// pi, A, V, optimal action, myopic action per grid point.
std::string grid_csv(const PomdpConfig& config, const ValueIterationResult& vi);

}  // namespace lasead::pomdp
