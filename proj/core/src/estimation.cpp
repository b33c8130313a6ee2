#include "lasead/estimation.hpp"

#include <algorithm>
#include <string>

namespace lasead {

Vec4 CartPoleProcessModel::propagate(const Vec4& x, double u) const {
  return plant_.integrate(x, u, plant_.dt());
}

Mat4 CartPoleProcessModel::jacobian(const Vec4& x, double u) const {
  return plant_.linearize(x, u).state_jacobian;
}

Mat4 condition_covariance(const Mat4& covariance) {
  if (!covariance.allFinite()) throw EstimatorFault("covariance has non-finite entries");
  Mat4 sym = 0.5 * (covariance + covariance.transpose());
  Eigen::SelfAdjointEigenSolver<Mat4> eig(sym);
  const double min_eig = eig.eigenvalues().minCoeff();
  // Round-off scales with the largest eigenvalue; a diverged filter after the
  // pole has fallen can carry entries of 1e4 and more.
  const double slack = 1e-10 * std::max(1.0, eig.eigenvalues().cwiseAbs().maxCoeff());
  if (min_eig < -slack) {
    throw EstimatorFault("covariance indefinite (min eigenvalue " + std::to_string(min_eig) + ")");
  }
  if (min_eig < 0.0) {
    const Vec4 clamped = eig.eigenvalues().cwiseMax(0.0);
    sym = eig.eigenvectors() * clamped.asDiagonal() * eig.eigenvectors().transpose();
    sym = 0.5 * (sym + sym.transpose());
  }
  return sym;
}

ExtendedKalmanFilter::ExtendedKalmanFilter(std::shared_ptr<const ProcessModel> model,
                                           Mat4 process_noise)
    : model_(std::move(model)), process_noise_(std::move(process_noise)) {
  if (!model_) throw std::invalid_argument("EKF needs a process model");
}

EkfEstimate ExtendedKalmanFilter::predict(const EkfEstimate& estimate, double u) const {
  const Mat4 F = model_->jacobian(estimate.mean, u);
  EkfEstimate out;
  out.mean = model_->propagate(estimate.mean, u);
  out.covariance = condition_covariance(F * estimate.covariance * F.transpose() + process_noise_);
  out.k = estimate.k + 1;
  if (!out.mean.allFinite()) throw EstimatorFault("predicted mean is non-finite");
  return out;
}

Innovation ExtendedKalmanFilter::innovation(const EkfEstimate& prediction,
                                            const SoftMeasurement& soft) const {
  Innovation inn;
  inn.available = soft.available;
  inn.rows = soft.rows();
  const auto n = static_cast<Eigen::Index>(inn.rows.size());
  inn.restricted_residual.resize(n);
  inn.restricted_covariance.resize(n, n);
  for (Eigen::Index a = 0; a < n; ++a) {
    const int ra = inn.rows[a];
    inn.restricted_residual[a] = soft.y[ra] - prediction.mean[ra];
    for (Eigen::Index b = 0; b < n; ++b) {
      inn.restricted_covariance(a, b) = prediction.covariance(ra, inn.rows[b]);
    }
    inn.restricted_covariance(a, a) += soft.variance[ra];
    inn.residual[ra] = inn.restricted_residual[a];
    inn.variance[ra] = inn.restricted_covariance(a, a);
  }
  return inn;
}

UpdateResult ExtendedKalmanFilter::update(const EkfEstimate& prediction,
                                          const SoftMeasurement& soft, double noise_scale) const {
  if (!(noise_scale > 0.0)) throw std::invalid_argument("noise_scale must be > 0");
  UpdateResult result{prediction, innovation(prediction, soft)};
  const auto& rows = result.innovation.rows;
  if (rows.empty()) return result;

  const auto n = static_cast<Eigen::Index>(rows.size());
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(n, kStateDim);
  Eigen::MatrixXd R = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index r = 0; r < n; ++r) {
    H(r, rows[r]) = 1.0;
    R(r, r) = soft.variance[rows[r]] * noise_scale;
  }
  const Eigen::MatrixXd PHt = prediction.covariance * H.transpose();
  const Eigen::MatrixXd S = H * PHt + R;
  Eigen::LLT<Eigen::MatrixXd> llt(S);
  if (llt.info() != Eigen::Success) throw EstimatorFault("innovation covariance not PD");
  const Eigen::MatrixXd gain = llt.solve(PHt.transpose()).transpose();

  result.estimate.mean = prediction.mean + gain * result.innovation.restricted_residual;
  const Mat4 I_KH = Mat4::Identity() - gain * H;
  result.estimate.covariance = condition_covariance(
      I_KH * prediction.covariance * I_KH.transpose() + gain * R * gain.transpose());
  if (!result.estimate.mean.allFinite()) throw EstimatorFault("posterior mean is non-finite");
  return result;
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity_ == 0) throw std::invalid_argument("replay buffer capacity must be > 0");
}

void ReplayBuffer::push(ReplayRecord record) {
  if (records_.size() == capacity_) records_.pop_front();
  records_.push_back(std::move(record));
}

ReplayResult replay(const ExtendedKalmanFilter& filter, const PerceptionPipeline& pipeline,
                    const ReplayBuffer& buffer, SensorSet enabled,
                    const RawMeasurementSet* current_raw, const EkfEstimate& current_estimate) {
  ReplayResult result;
  if (buffer.empty()) {
    result.prediction = current_estimate;
    result.estimate = current_estimate;
    result.from_empty_buffer = true;
    return result;
  }

  const ReplayRecord& oldest = buffer.front();
  EkfEstimate estimate = oldest.posterior;
  SoftMeasurement soft = pipeline.process(enabled, oldest.raw, oldest.previous_soft);
  result.prediction = estimate;

  auto advance = [&](const RawMeasurementSet& raw, double u_before) {
    const EkfEstimate prior = filter.predict(estimate, u_before);
    const SoftMeasurement next_soft = pipeline.process(enabled, raw, soft);
    estimate = filter.update(prior, next_soft).estimate;
    soft = next_soft;
    result.prediction = prior;
  };

  for (std::size_t i = 1; i < buffer.size(); ++i) advance(buffer[i].raw, buffer[i - 1].u);
  if (current_raw) advance(*current_raw, buffer.back().u);

  result.estimate = estimate;
  result.soft = soft;
  return result;
}

}  // namespace lasead
