#include "lasead/control.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace lasead {

Mat4 solve_dare(const Mat4& F, const Vec4& G, const Mat4& Q, double R, double tolerance,
                int max_iterations) {
  if (!(R > 0.0)) throw std::invalid_argument("input weight must be > 0");
  Mat4 P = Q;
  for (int it = 0; it < max_iterations; ++it) {
    const Vec4 PG = P * G;
    const double s = R + G.dot(PG);
    const Eigen::RowVector4d FtPG = (F.transpose() * PG).transpose();
    Mat4 next = Q + F.transpose() * P * F - FtPG.transpose() * FtPG / s;
    next = 0.5 * (next + next.transpose());
    if (!next.allFinite()) throw RiccatiDivergence("Riccati iterate became non-finite");
    // Max-abs norms: the Frobenius norm of a diverging iterate overflows
    // long before its entries do.
    const double change = (next - P).lpNorm<Eigen::Infinity>();
    P = next;
    if (!std::isfinite(change)) throw RiccatiDivergence("Riccati iterate became non-finite");
    if (change <= tolerance * std::max(1.0, P.lpNorm<Eigen::Infinity>())) return P;
  }
  throw RiccatiDivergence("Riccati iteration did not converge in " +
                          std::to_string(max_iterations) + " iterations");
}

LqrController::LqrController(Eigen::RowVector4d gain, double u_max)
    : gain_(std::move(gain)), u_max_(u_max) {
  if (!(u_max_ > 0.0)) throw std::invalid_argument("u_max must be > 0");
}

LqrController LqrController::design(const CartPole& plant, const LqrWeights& weights) {
  const Linearization lin = plant.linearize(Vec4::Zero(), 0.0);
  const Mat4 Q = weights.state.asDiagonal();
  const Mat4 P = solve_dare(lin.state_jacobian, lin.input_jacobian, Q, weights.input);
  const Vec4& G = lin.input_jacobian;
  const double s = weights.input + G.dot(P * G);
  const Eigen::RowVector4d K = (G.transpose() * P * lin.state_jacobian) / s;
  return LqrController(K, plant.params().u_max);
}

double LqrController::operator()(const Vec4& x) const { return saturate(-gain_.dot(x), u_max_); }

double closed_loop_spectral_radius(const CartPole& plant, const Eigen::RowVector4d& gain) {
  const Linearization lin = plant.linearize(Vec4::Zero(), 0.0);
  const Mat4 A = lin.state_jacobian - lin.input_jacobian * gain;
  return Eigen::EigenSolver<Mat4>(A, false).eigenvalues().cwiseAbs().maxCoeff();
}

void ThresholdPolicy::validate() const {
  if (!(probe_low > 0.0 && probe_low < probe_high && probe_high <= disable && disable <= 1.0)) {
    throw std::invalid_argument("threshold policy needs 0 < probe_low < probe_high <= disable <= 1");
  }
  if (!(enable >= 0.0 && enable < disable)) {
    throw std::invalid_argument("threshold policy needs 0 <= enable < disable");
  }
}

ProbeDecision decide_probing(const Belief& belief, const ThresholdPolicy& policy) {
  ProbeDecision d;
  double best = -1.0;
  for (SensorId id : kAllSensors) {
    const double p = belief[id];
    if (p > policy.probe_low && p < policy.probe_high && p > best) {
      best = p;
      d = {true, id};
    }
  }
  return d;
}

SensorSet decide_trustable(const Belief& belief, const ThresholdPolicy& policy, SensorSet current) {
  SensorSet next = current;
  for (SensorId id : kAllSensors) {
    if (belief[id] >= policy.disable) {
      next = next.without(id);
    } else if (belief[id] <= policy.enable) {
      next = next.with(id);
    }
  }
  if (next.empty()) {
    SensorId keep = SensorId::Encoder;
    for (SensorId id : kAllSensors) {
      if (belief[id] < belief[keep]) keep = id;
    }
    next = SensorSet::of(keep);
  }
  return next;
}

std::string_view to_string(WolfVariant v) {
  switch (v) {
    case WolfVariant::Imq: return "imq";
    case WolfVariant::Md: return "md";
    case WolfVariant::Tmd: return "tmd";
  }
  return "?";
}

double wolf_weight(WolfVariant variant, double residual_norm, double mahalanobis, double c) {
  if (!(c > 0.0)) throw std::invalid_argument("WoLF parameter c must be > 0");
  switch (variant) {
    case WolfVariant::Imq:
      return 1.0 / std::sqrt(1.0 + residual_norm * residual_norm / (c * c));
    case WolfVariant::Md:
      return mahalanobis <= c ? 1.0 : c / mahalanobis;
    case WolfVariant::Tmd:
      return mahalanobis <= c ? 1.0 : 0.0;
  }
  return 1.0;
}

WolfResult wolf_update(const ExtendedKalmanFilter& filter, const EkfEstimate& prediction,
                       const SoftMeasurement& soft, WolfVariant variant, double c) {
  const Innovation inn = filter.innovation(prediction, soft);
  if (inn.rows.empty()) return {{prediction, inn}, 1.0};
  double mahalanobis = 0.0;
  if (variant != WolfVariant::Imq) {
    Eigen::LLT<Eigen::MatrixXd> llt(inn.restricted_covariance);
    if (llt.info() != Eigen::Success) throw EstimatorFault("innovation covariance not PD");
    mahalanobis = llt.matrixL().solve(inn.restricted_residual).norm();
  }
  const double w = wolf_weight(variant, inn.restricted_residual.norm(), mahalanobis, c);
  if (w <= 0.0) return {{prediction, inn}, 0.0};
  return {filter.update(prediction, soft, 1.0 / (w * w)), w};
}

bool KalmanPredGate::step(bool alert_any, bool oracle_attack_active) {
  holding_ = (holding_ || alert_any) && oracle_attack_active;
  return !holding_;
}

}  // namespace lasead
