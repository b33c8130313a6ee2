#include "lasead/detection.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace lasead {

void CusumParams::validate() const {
  for (int j = 0; j < kStateDim; ++j) {
    if (!(threshold[j] > 0.0) || !std::isfinite(threshold[j])) {
      throw std::invalid_argument("CUSUM threshold must be > 0");
    }
    if (!(drift[j] >= 0.0) || !std::isfinite(drift[j])) {
      throw std::invalid_argument("CUSUM drift must be >= 0");
    }
  }
}

CusumDetector::CusumDetector(CusumParams params) : params_(params) { params_.validate(); }

void CusumDetector::reset() {
  statistic_.fill(0.0);
  last_.reset();
}

bool CusumDetector::update_component(int component, double residual, double sigma,
                                     bool available) {
  if (!available) {
    last_[component] = false;
    return false;
  }
  if (!(sigma > 0.0)) throw std::invalid_argument("CUSUM sigma must be > 0");
  double& s = statistic_[component];
  s = std::max(0.0, s + std::abs(residual) / sigma - params_.drift[component]);
  const bool alert = s > params_.threshold[component];
  if (alert) s = 0.0;
  last_[component] = alert;
  return alert;
}

AlertVector CusumDetector::update(const Innovation& innovation) {
  AlertVector alerts;
  for (int j = 0; j < kStateDim; ++j) {
    const bool available = innovation.available[j];
    alerts[j] = update_component(j, innovation.residual[j],
                                 available ? std::sqrt(innovation.variance[j]) : 0.0, available);
  }
  return alerts;
}

void ResidualTrace::push(const Innovation& innovation) {
  Vec4 z = Vec4::Zero();
  for (int j = 0; j < kStateDim; ++j) {
    if (innovation.available[j]) {
      z[j] = std::abs(innovation.residual[j]) / std::sqrt(innovation.variance[j]);
    }
  }
  magnitude.push_back(z);
  available.push_back(innovation.available);
}

namespace {

// Same recursion as CusumDetector on a pre-standardized magnitude.
template <typename Visitor>
void scan(const ResidualTrace& trace, int component, double threshold, double drift,
          Visitor&& visit) {
  double s = 0.0;
  for (std::size_t k = 0; k < trace.size(); ++k) {
    if (!trace.available[k][component]) {
      visit(false, false);
      continue;
    }
    s = std::max(0.0, s + trace.magnitude[k][component] - drift);
    const bool alert = s > threshold;
    if (alert) s = 0.0;
    visit(true, alert);
  }
}

}  // namespace

std::vector<std::vector<bool>> alert_sequences(std::span<const ResidualTrace> traces, int component,
                                               double threshold, double drift) {
  std::vector<std::vector<bool>> out;
  out.reserve(traces.size());
  for (const auto& trace : traces) {
    std::vector<bool> seq;
    seq.reserve(trace.size());
    scan(trace, component, threshold, drift, [&](bool, bool alert) { seq.push_back(alert); });
    out.push_back(std::move(seq));
  }
  return out;
}

double alert_rate(std::span<const ResidualTrace> traces, int component, double threshold,
                  double drift) {
  std::size_t steps = 0;
  std::size_t alerts = 0;
  for (const auto& trace : traces) {
    scan(trace, component, threshold, drift, [&](bool available, bool alert) {
      steps += available ? 1 : 0;
      alerts += alert ? 1 : 0;
    });
  }
  return steps == 0 ? 0.0 : static_cast<double>(alerts) / static_cast<double>(steps);
}

CalibrationGrid CalibrationGrid::standard() {
  CalibrationGrid grid;
  for (int i = 1; i <= 160; ++i) grid.thresholds.push_back(0.25 * i);
  return grid;
}

CusumCalibration calibrate_cusum(std::span<const ResidualTrace> training,
                                 std::span<const ResidualTrace> holdout,
                                 const CalibrationGrid& grid, double budget) {
  if (grid.thresholds.empty()) throw std::invalid_argument("calibration grid is empty");
  if (training.empty() || holdout.empty()) {
    throw std::invalid_argument("calibration needs training and held-out traces");
  }
  std::vector<double> thresholds = grid.thresholds;
  std::sort(thresholds.begin(), thresholds.end());

  CusumCalibration out;
  for (int j = 0; j < kStateDim; ++j) {
    double sum = 0.0;
    double sum_sq = 0.0;
    std::size_t n = 0;
    for (const auto& trace : training) {
      for (std::size_t k = 0; k < trace.size(); ++k) {
        if (!trace.available[k][j]) continue;
        const double z = trace.magnitude[k][j];
        sum += z;
        sum_sq += z * z;
        ++n;
      }
    }
    const double mean = n ? sum / static_cast<double>(n) : 0.0;
    const double var = n > 1 ? std::max(0.0, (sum_sq - n * mean * mean) / (n - 1.0)) : 0.0;
    out.params.drift[j] = mean + 0.5 * std::sqrt(var);

    bool feasible = false;
    for (double tau : thresholds) {
      const double rate = alert_rate(holdout, j, tau, out.params.drift[j]);
      if (rate < budget) {
        out.params.threshold[j] = tau;
        out.holdout_rate[j] = rate;
        feasible = true;
        break;
      }
    }
    if (!feasible) {
      out.params.threshold[j] = thresholds.back();
      out.holdout_rate[j] = alert_rate(holdout, j, thresholds.back(), out.params.drift[j]);
      out.warnings.push_back("component " + std::string(component_name(j)) +
                             ": alert budget infeasible on grid, using max threshold");
    }
  }
  return out;
}

EtaEstimate estimate_eta(std::span<const std::vector<bool>> sequences) {
  std::size_t from0 = 0, from0_to1 = 0, from1 = 0, from1_to1 = 0;
  std::size_t total = 0;
  for (const auto& seq : sequences) {
    bool prev = false;
    for (bool a : seq) {
      if (prev) {
        ++from1;
        from1_to1 += a ? 1 : 0;
      } else {
        ++from0;
        from0_to1 += a ? 1 : 0;
      }
      prev = a;
      ++total;
    }
  }
  if (total == 0) throw std::invalid_argument("estimate_eta: empty alert sequences");
  return {(from0_to1 + 1.0) / (from0 + 2.0), (from1_to1 + 1.0) / (from1 + 2.0)};
}

void DetectorCharacterization::validate() const {
  auto open_unit = [](double p) { return p > 0.0 && p < 1.0; };
  for (int j = 0; j < kStateDim; ++j) {
    if (!open_unit(eta0[j]) || !open_unit(eta1[j])) {
      throw std::invalid_argument("eta must lie in (0, 1)");
    }
    for (const BetaPrior& b : {xi0[j], xi1[j]}) {
      if (!(b.alpha > 0.0 && b.beta > 0.0)) throw std::invalid_argument("Beta parameters must be > 0");
    }
  }
}

std::string DetectorCalibration::to_json() const {
  nlohmann::json doc = nlohmann::json::object();
  for (int j = 0; j < kStateDim; ++j) {
    doc[std::string(component_name(j))] = {
        {"tau", cusum.threshold[j]},
        {"b", cusum.drift[j]},
        {"eta0", characterization.eta0[j]},
        {"eta1", characterization.eta1[j]},
        {"xi0", {characterization.xi0[j].alpha, characterization.xi0[j].beta}},
        {"xi1", {characterization.xi1[j].alpha, characterization.xi1[j].beta}},
        {"holdout_rate", holdout_rate[j]},
    };
  }
  return doc.dump(2);
}

DetectorCalibration DetectorCalibration::from_json(std::string_view text) {
  try {
    const auto doc = nlohmann::json::parse(text);
    DetectorCalibration cal;
    for (int j = 0; j < kStateDim; ++j) {
      const auto& c = doc.at(std::string(component_name(j)));
      cal.cusum.threshold[j] = c.at("tau").get<double>();
      cal.cusum.drift[j] = c.at("b").get<double>();
      cal.characterization.eta0[j] = c.at("eta0").get<double>();
      cal.characterization.eta1[j] = c.at("eta1").get<double>();
      if (c.contains("xi0")) {
        cal.characterization.xi0[j] = {c["xi0"].at(0).get<double>(), c["xi0"].at(1).get<double>()};
      }
      if (c.contains("xi1")) {
        cal.characterization.xi1[j] = {c["xi1"].at(0).get<double>(), c["xi1"].at(1).get<double>()};
      }
      cal.holdout_rate[j] = c.value("holdout_rate", 0.0);
    }
    cal.cusum.validate();
    cal.characterization.validate();
    return cal;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("calibration: ") + e.what());
  }
}

}  // namespace lasead
