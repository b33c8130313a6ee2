#include "lasead/belief.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace lasead {

Belief Belief::clamped() const {
  Belief out = *this;
  for (double& p : out.pi) p = std::clamp(p, kBeliefClamp, 1.0 - kBeliefClamp);
  return out;
}

BnModel::BnModel(PerceptionGraph graph, DetectorCharacterization detector)
    : graph_(std::move(graph)), detector_(detector) {
  detector_.validate();
  if (!graph_.covers_all_components()) {
    throw std::invalid_argument("perception graph leaves a component without sensors");
  }
}

double BnModel::component_factor(int component, bool s, bool a, bool a_prev) const {
  if (!s) {
    const double eta = a_prev ? detector_.eta1[component] : detector_.eta0[component];
    return a ? eta : 1.0 - eta;
  }
  const BetaPrior& prior = a_prev ? detector_.xi1[component] : detector_.xi0[component];
  const double miss = prior.mean();
  return a ? 1.0 - miss : miss;
}

double BnModel::alert_likelihood(SensorSet z, const AlertVector& a,
                                 const AlertVector& a_prev) const {
  const ComponentMask s = graph_.propagate(z);
  double p = 1.0;
  for (int j = 0; j < kStateDim; ++j) p *= component_factor(j, s[j], a[j], a_prev[j]);
  return p;
}

Belief BnModel::alert_posterior(const Belief& prior, const AlertVector& a,
                                const AlertVector& a_prev) const {
  std::array<double, kSensorCount> marginal{};
  double total = 0.0;
  for (std::uint8_t bits = 0; bits < (1u << kSensorCount); ++bits) {
    const SensorSet z = SensorSet::from_bits(bits);
    double w = alert_likelihood(z, a, a_prev);
    for (SensorId id : kAllSensors) w *= z.contains(id) ? prior[id] : 1.0 - prior[id];
    total += w;
    for (SensorId id : kAllSensors) {
      if (z.contains(id)) marginal[index_of(id)] += w;
    }
  }
  Belief out = prior;
  if (total > 0.0) {
    for (int i = 0; i < kSensorCount; ++i) out.pi[i] = marginal[i] / total;
  }
  return out.clamped();
}

std::optional<double> gaussian_log_density(const Eigen::VectorXd& y,
                                           const GaussianPrediction& prediction) {
  const auto n = y.size();
  if (prediction.mean.size() != n || prediction.covariance.rows() != n ||
      prediction.covariance.cols() != n) {
    return std::nullopt;
  }
  Eigen::LLT<Eigen::MatrixXd> llt(prediction.covariance);
  if (llt.info() != Eigen::Success) return std::nullopt;
  const Eigen::VectorXd r = y - prediction.mean;
  const Eigen::VectorXd whitened = llt.matrixL().solve(r);
  double log_det = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) log_det += 2.0 * std::log(llt.matrixL()(i, i));
  if (!std::isfinite(log_det)) return std::nullopt;
  return -0.5 * (whitened.squaredNorm() + log_det + n * std::log(2.0 * std::numbers::pi));
}

ProbingUpdate probing_posterior(const Belief& belief, SensorId sensor, const Eigen::VectorXd& y,
                                const GaussianPrediction& h0, const GaussianPrediction& h1) {
  ProbingUpdate out{belief, false, 0.0};
  const auto l0 = gaussian_log_density(y, h0);
  const auto l1 = gaussian_log_density(y, h1);
  if (!l0 || !l1 || y.size() == 0) {
    out.skipped = true;
    return out;
  }
  out.log_ratio = *l1 - *l0;
  const double p = belief[sensor];
  // Work in log-odds so extreme ratios saturate instead of overflowing.
  const double log_odds = std::log(p / (1.0 - p)) - out.log_ratio;
  out.belief[sensor] = 1.0 / (1.0 + std::exp(-log_odds));
  out.belief = out.belief.clamped();
  return out;
}

}  // namespace lasead
