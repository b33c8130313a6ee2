#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <memory>
#include <optional>
#include <stdexcept>
#include <vector>

#include "lasead/perception.hpp"
#include "lasead/plant.hpp"
#include "lasead/types.hpp"

namespace lasead {

/// Raised when the filter produces a non-finite or indefinite covariance, or
/// an innovation covariance that cannot be factored.
class EstimatorFault : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EkfEstimate {
  Vec4 mean = Vec4::Zero();
  Mat4 covariance = Mat4::Identity();
  std::int64_t k = 0;
};

/// Discrete process model seen by the filter.
class ProcessModel {
 public:
  virtual ~ProcessModel() = default;
  virtual Vec4 propagate(const Vec4& x, double u) const = 0;
  virtual Mat4 jacobian(const Vec4& x, double u) const = 0;
};

class CartPoleProcessModel final : public ProcessModel {
 public:
  explicit CartPoleProcessModel(CartPole plant) : plant_(std::move(plant)) {}
  Vec4 propagate(const Vec4& x, double u) const override;
  Mat4 jacobian(const Vec4& x, double u) const override;

 private:
  CartPole plant_;
};

/// Residual over the available components of a soft measurement. Entries of
/// `residual`/`variance` for unavailable components are zero.
struct Innovation {
  ComponentMask available;
  Vec4 residual = Vec4::Zero();
  Vec4 variance = Vec4::Zero();
  std::vector<int> rows;
  Eigen::VectorXd restricted_residual;
  Eigen::MatrixXd restricted_covariance;
};

struct UpdateResult {
  EkfEstimate estimate;
  Innovation innovation;
};

/// EKF over soft measurements with C = selected rows of I4.
class ExtendedKalmanFilter {
 public:
  ExtendedKalmanFilter(std::shared_ptr<const ProcessModel> model, Mat4 process_noise);

  EkfEstimate predict(const EkfEstimate& estimate, double u) const;

  Innovation innovation(const EkfEstimate& prediction, const SoftMeasurement& soft) const;

  /// Joseph-form update. `noise_scale` multiplies R_S (outlier-robust
  /// variants pass 1/w^2); a non-positive scale is rejected.
  UpdateResult update(const EkfEstimate& prediction, const SoftMeasurement& soft,
                      double noise_scale = 1.0) const;

  const Mat4& process_noise() const { return process_noise_; }
  const ProcessModel& model() const { return *model_; }

 private:
  std::shared_ptr<const ProcessModel> model_;
  Mat4 process_noise_;
};

/// Symmetrizes P, faults on non-finite entries or eigenvalues below -1e-10,
/// and clamps small negative eigenvalues to zero.
Mat4 condition_covariance(const Mat4& covariance);

struct ReplayRecord {
  EkfEstimate posterior;
  RawMeasurementSet raw;
  double u = 0.0;  // input applied after this step's estimate
  std::optional<SoftMeasurement> previous_soft;
};

/// Bounded FIFO of the last T_r filter steps.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 100);

  void push(ReplayRecord record);
  void clear() { records_.clear(); }

  std::size_t size() const { return records_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return records_.empty(); }
  const ReplayRecord& operator[](std::size_t i) const { return records_[i]; }
  const ReplayRecord& back() const { return records_.back(); }
  const ReplayRecord& front() const { return records_.front(); }

 private:
  std::size_t capacity_;
  std::deque<ReplayRecord> records_;
};

struct ReplayResult {
  EkfEstimate prediction;  // last prior before the final update
  EkfEstimate estimate;
  SoftMeasurement soft;    // last soft measurement under the replayed pipeline
  bool from_empty_buffer = false;
};

/// Re-runs the filter from the oldest buffered posterior through every
/// buffered raw measurement using pipeline `enabled`, then (when given) one
/// more predict/update for the current raw measurement. The live filter is
/// untouched. An empty buffer yields `current_estimate` and the flag set.
ReplayResult replay(const ExtendedKalmanFilter& filter, const PerceptionPipeline& pipeline,
                    const ReplayBuffer& buffer, SensorSet enabled,
                    const RawMeasurementSet* current_raw, const EkfEstimate& current_estimate);

inline ReplayResult re_estimate_without_sensors(const ExtendedKalmanFilter& filter,
                                                const PerceptionPipeline& pipeline,
                                                const ReplayBuffer& buffer, SensorSet excluded,
                                                const RawMeasurementSet* current_raw,
                                                const EkfEstimate& current_estimate) {
  return replay(filter, pipeline, buffer, SensorSet::all() - excluded, current_raw,
                current_estimate);
}

}  // namespace lasead
