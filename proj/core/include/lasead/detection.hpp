#pragma once

#include <array>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lasead/estimation.hpp"
#include "lasead/types.hpp"

namespace lasead {

struct CusumParams {
  std::array<double, kStateDim> threshold{5.0, 5.0, 5.0, 5.0};
  std::array<double, kStateDim> drift{1.1, 1.1, 1.1, 1.1};
  void validate() const;
};

/// One-sided CUSUM per component on standardized |innovation|, reset to zero
/// whenever it alerts.
class CusumDetector {
 public:
  CusumDetector() = default;
  explicit CusumDetector(CusumParams params);

  /// Single-component recursion. An unavailable component never alerts and
  /// keeps its statistic.
  bool update_component(int component, double residual, double sigma, bool available);

  AlertVector update(const Innovation& innovation);

  const std::array<double, kStateDim>& statistic() const { return statistic_; }
  const AlertVector& last_alerts() const { return last_; }
  const CusumParams& params() const { return params_; }
  void reset();

 private:
  CusumParams params_{};
  std::array<double, kStateDim> statistic_{};
  AlertVector last_;
};

/// Standardized |r|/sigma per step of one run; unavailable steps are masked.
struct ResidualTrace {
  std::vector<Vec4> magnitude;
  std::vector<ComponentMask> available;

  void push(const Innovation& innovation);
  std::size_t size() const { return magnitude.size(); }
};

/// Runs a fresh CUSUM on one component of each trace and returns the alert
/// sequences.
std::vector<std::vector<bool>> alert_sequences(std::span<const ResidualTrace> traces, int component,
                                               double threshold, double drift);

/// Alerts per available step, pooled over traces.
double alert_rate(std::span<const ResidualTrace> traces, int component, double threshold,
                  double drift);

struct CalibrationGrid {
  std::vector<double> thresholds;
  static CalibrationGrid standard();  // 0.25 .. 40 in 0.25 steps
};

struct CusumCalibration {
  CusumParams params;
  std::array<double, kStateDim> holdout_rate{};
  std::vector<std::string> warnings;
};

/// Drift b_j = mean + 0.5 std of the training magnitudes; threshold is the
/// smallest grid value whose held-out per-step alert rate is below `budget`.
CusumCalibration calibrate_cusum(std::span<const ResidualTrace> training,
                                 std::span<const ResidualTrace> holdout,
                                 const CalibrationGrid& grid, double budget = 0.05);

struct EtaEstimate {
  double eta0 = 0.05;  // P(a=1 | a_prev=0, benign)
  double eta1 = 0.05;  // P(a=1 | a_prev=1, benign)
};

/// Laplace-smoothed transition frequencies. Each sequence starts from an
/// implicit previous alert of 0. Throws std::invalid_argument if empty.
EtaEstimate estimate_eta(std::span<const std::vector<bool>> sequences);

struct BetaPrior {
  double alpha = 3.0;
  double beta = 7.0;
  double mean() const { return alpha / (alpha + beta); }
};

/// Alert-process model of the detector consumed by the Bayesian network.
struct DetectorCharacterization {
  std::array<double, kStateDim> eta0{0.05, 0.05, 0.05, 0.05};
  std::array<double, kStateDim> eta1{0.05, 0.05, 0.05, 0.05};
  std::array<BetaPrior, kStateDim> xi0{};  // missed detection, a_prev = 0
  std::array<BetaPrior, kStateDim> xi1{};  // missed detection, a_prev = 1
  void validate() const;
};

/// Calibration artifact: {component: {tau, b, eta0, eta1}} plus the Beta
/// priors, written by `calibrate` and read by `simulate`.
struct DetectorCalibration {
  CusumParams cusum;
  DetectorCharacterization characterization;
  std::array<double, kStateDim> holdout_rate{};

  std::string to_json() const;
  static DetectorCalibration from_json(std::string_view text);
};

}  // namespace lasead
