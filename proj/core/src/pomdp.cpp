#include "lasead/pomdp.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace lasead::pomdp {

namespace {

bool in_open_unit(double p) { return p > 0.0 && p < 1.0; }

void check_sensor(const SensorModel2& s, const char* name, std::vector<std::string>& errors) {
  if (!in_open_unit(s.alpha)) errors.push_back(std::string(name) + ".alpha must lie in (0, 1)");
  if (!in_open_unit(s.tau)) errors.push_back(std::string(name) + ".tau must lie in (0, 1)");
  if (!(s.alpha < s.tau)) errors.push_back(std::string(name) + ": alpha must be < tau");
}

void throw_if(const std::vector<std::string>& errors) {
  if (errors.empty()) return;
  std::string msg;
  for (const auto& e : errors) msg += (msg.empty() ? "" : "; ") + e;
  throw std::invalid_argument(msg);
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

}  // namespace

void Chain2::validate() const {
  std::vector<std::string> errors;
  if (!(a01 >= 0.0 && a01 <= 1.0)) errors.push_back("a01 must lie in [0, 1]");
  if (!in_open_unit(a11)) errors.push_back("a11 must lie in (0, 1)");
  if (!in_open_unit(1.0 - a01)) errors.push_back("a00 = 1 - a01 must lie in (0, 1)");
  throw_if(errors);
}

Eigen::Matrix2d Chain2::matrix() const {
  Eigen::Matrix2d m;
  m << 1.0 - a01, a01, 1.0 - a11, a11;
  return m;
}

void SensorModel2::validate() const {
  std::vector<std::string> errors;
  check_sensor(*this, "sensor", errors);
  throw_if(errors);
}

Eigen::Matrix2d SensorModel2::observation_matrix() const {
  Eigen::Matrix2d o;
  o << 1.0 - alpha, 1.0 - tau, alpha, tau;
  return o;
}

void PomdpConfig::validate() const {
  std::vector<std::string> errors;
  check_sensor(cheap, "cheap", errors);
  check_sensor(expensive, "expensive", errors);
  try {
    chain.validate();
  } catch (const std::invalid_argument& e) {
    errors.emplace_back(e.what());
  }
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) errors.push_back("lambda must be >= 0");
  if (!(gamma >= 0.0 && gamma < 1.0)) errors.push_back("gamma must lie in [0, 1)");
  if (grid < 1000) errors.push_back("grid must be >= 1000");
  if (!(tolerance > 0.0)) errors.push_back("tolerance must be > 0");
  if (max_iterations < 1) errors.push_back("max_iterations must be >= 1");
  throw_if(errors);
}

PomdpConfig PomdpConfig::from_json(std::string_view text) {
  try {
    const auto doc = nlohmann::json::parse(text);
    PomdpConfig c;
    auto sensor = [&](const char* key, SensorModel2& s) {
      if (!doc.contains(key)) return;
      s.alpha = doc[key].value("alpha", s.alpha);
      s.tau = doc[key].value("tau", s.tau);
    };
    sensor("cheap", c.cheap);
    sensor("expensive", c.expensive);
    if (doc.contains("chain")) {
      c.chain.a01 = doc["chain"].value("a01", c.chain.a01);
      c.chain.a11 = doc["chain"].value("a11", c.chain.a11);
    }
    c.lambda = doc.value("lambda", c.lambda);
    c.gamma = doc.value("gamma", c.gamma);
    c.grid = doc.value("grid", c.grid);
    c.tolerance = doc.value("tolerance", c.tolerance);
    c.max_iterations = doc.value("max_iterations", c.max_iterations);
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("pomdp config: ") + e.what());
  }
}

std::string PomdpConfig::to_json() const {
  nlohmann::json doc{
      {"cheap", {{"alpha", cheap.alpha}, {"tau", cheap.tau}}},
      {"expensive", {{"alpha", expensive.alpha}, {"tau", expensive.tau}}},
      {"chain", {{"a01", chain.a01}, {"a11", chain.a11}}},
      {"lambda", lambda},
      {"gamma", gamma},
      {"grid", grid},
      {"tolerance", tolerance},
      {"max_iterations", max_iterations},
  };
  return doc.dump(2);
}

bool sensors_ordered(const SensorModel2& cheap, const SensorModel2& expensive) {
  return expensive.alpha < cheap.alpha && expensive.tau > cheap.tau && cheap.alpha < cheap.tau &&
         expensive.alpha < expensive.tau;
}

double predict(const Chain2& chain, double pi) { return chain.a01 + (chain.a11 - chain.a01) * pi; }

double observation_probability(const SensorModel2& s, double pi, int observation) {
  const double p1 = s.tau * pi + s.alpha * (1.0 - pi);
  return observation == 1 ? p1 : 1.0 - p1;
}

double update(const SensorModel2& s, double pi, int observation) {
  if (observation == 1) {
    const double num = s.tau * pi;
    const double den = num + s.alpha * (1.0 - pi);
    return den > 0.0 ? num / den : pi;
  }
  const double num = (1.0 - s.tau) * pi;
  const double den = num + (1.0 - s.alpha) * (1.0 - pi);
  return den > 0.0 ? num / den : pi;
}

double posterior_loss(const SensorModel2& s, double pi) {
  return std::min(pi * s.tau, (1.0 - pi) * s.alpha) +
         std::min(pi * (1.0 - s.tau), (1.0 - pi) * (1.0 - s.alpha));
}

double posterior_loss_bayes(const SensorModel2& s, double pi) {
  double loss = 0.0;
  for (int o : {0, 1}) {
    const double p = observation_probability(s, pi, o);
    if (p <= 0.0) continue;
    const double post = update(s, pi, o);
    loss += p * std::min(post, 1.0 - post);
  }
  return loss;
}

Breakpoints breakpoints(const SensorModel2& s) {
  return {s.alpha / (s.tau + s.alpha), (1.0 - s.alpha) / (2.0 - s.alpha - s.tau)};
}

double advantage(const SensorModel2& cheap, const SensorModel2& expensive, double pi) {
  return posterior_loss(cheap, pi) - posterior_loss(expensive, pi);
}

std::optional<Region> myopic_region(const SensorModel2& cheap, const SensorModel2& expensive,
                                    double lambda) {
  if (!sensors_ordered(cheap, expensive)) {
    throw std::invalid_argument("sensor ordering assumption violated");
  }
  const Breakpoints bc = breakpoints(cheap);
  const Breakpoints be = breakpoints(expensive);
  const std::array<double, 6> x{0.0, be.lower, bc.lower, bc.upper, be.upper, 1.0};
  std::array<double, 6> a{};
  for (int i = 0; i < 6; ++i) a[i] = advantage(cheap, expensive, x[i]);

  int peak = 0;
  for (int i = 1; i < 6; ++i) {
    if (a[i] > a[peak]) peak = i;
  }
  if (!(a[peak] > lambda)) return std::nullopt;

  auto crossing = [&](int i, int j) {
    // A is linear between knots i and j and crosses lambda there.
    if (a[j] == a[i]) return x[i];
    return x[i] + (lambda - a[i]) / (a[j] - a[i]) * (x[j] - x[i]);
  };
  Region r{x[0], x[5]};
  for (int i = peak; i > 0; --i) {
    if (!(a[i - 1] > lambda)) {
      r.lo = crossing(i - 1, i);
      break;
    }
  }
  for (int i = peak; i < 5; ++i) {
    if (!(a[i + 1] > lambda)) {
      r.hi = crossing(i, i + 1);
      break;
    }
  }
  return r;
}

Garbling garbling_matrix(const SensorModel2& cheap, const SensorModel2& expensive) {
  const double d = expensive.tau - expensive.alpha;
  if (std::abs(d) < 1e-15) throw std::invalid_argument("expensive sensor matrix is singular");
  Garbling g;
  g.matrix << (expensive.tau - cheap.alpha) / d, (expensive.tau - cheap.tau) / d,
      (cheap.alpha - expensive.alpha) / d, (cheap.tau - expensive.alpha) / d;
  bool ok = true;
  for (int c = 0; c < 2; ++c) {
    ok = ok && std::abs(g.matrix.col(c).sum() - 1.0) < 1e-12;
    for (int r = 0; r < 2; ++r) ok = ok && g.matrix(r, c) >= 0.0 && g.matrix(r, c) <= 1.0;
  }
  g.valid = ok;
  return g;
}

namespace {

double interpolate(const std::vector<double>& v, double pi) {
  const int n = static_cast<int>(v.size()) - 1;
  const double pos = std::clamp(pi, 0.0, 1.0) * n;
  const int i = std::min(static_cast<int>(pos), n - 1);
  const double t = pos - i;
  return (1.0 - t) * v[i] + t * v[i + 1];
}

struct Successor {
  double p;
  double next;
};

}  // namespace

ValueIterationResult value_iteration(const PomdpConfig& config) {
  config.validate();
  const int n = config.grid;
  ValueIterationResult out;
  out.belief.resize(n + 1);
  for (int i = 0; i <= n; ++i) out.belief[i] = static_cast<double>(i) / n;

  // Successor beliefs do not change between sweeps.
  std::array<std::vector<std::array<Successor, 2>>, 2> succ;
  std::array<std::vector<double>, 2> stage;
  const std::array<const SensorModel2*, 2> sensors{&config.cheap, &config.expensive};
  for (int s = 0; s < 2; ++s) {
    succ[s].resize(n + 1);
    stage[s].resize(n + 1);
    for (int i = 0; i <= n; ++i) {
      const double p = out.belief[i];
      stage[s][i] = posterior_loss(*sensors[s], p) + (s == 1 ? config.lambda : 0.0);
      for (int o : {0, 1}) {
        succ[s][i][o] = {observation_probability(*sensors[s], p, o),
                         predict(config.chain, update(*sensors[s], p, o))};
      }
    }
  }

  std::vector<double> v(n + 1, 0.0), next(n + 1);
  out.q_cheap.resize(n + 1);
  out.q_expensive.resize(n + 1);
  auto sweep = [&](const std::vector<double>& cur) {
    for (int i = 0; i <= n; ++i) {
      std::array<double, 2> q{};
      for (int s = 0; s < 2; ++s) {
        double cont = 0.0;
        for (const auto& [p, nb] : succ[s][i]) {
          if (p > 0.0) cont += p * interpolate(cur, nb);
        }
        q[s] = stage[s][i] + config.gamma * cont;
      }
      out.q_cheap[i] = q[0];
      out.q_expensive[i] = q[1];
      next[i] = std::min(q[0], q[1]);
    }
  };

  for (out.iterations = 0; out.iterations < config.max_iterations;) {
    sweep(v);
    ++out.iterations;
    double delta = 0.0;
    for (int i = 0; i <= n; ++i) delta = std::max(delta, std::abs(next[i] - v[i]));
    out.deltas.push_back(delta);
    v.swap(next);
    if (delta < config.tolerance) {
      out.converged = true;
      break;
    }
  }
  // One more sweep so the Q-values are consistent with the returned V.
  sweep(v);
  out.value = v;
  out.policy.resize(n + 1);
  out.myopic.resize(n + 1);
  for (int i = 0; i <= n; ++i) {
    out.policy[i] = out.q_expensive[i] < out.q_cheap[i] ? Action::Expensive : Action::Cheap;
    out.myopic[i] = advantage(config.cheap, config.expensive, out.belief[i]) > config.lambda
                        ? Action::Expensive
                        : Action::Cheap;
  }
  if (!out.converged) {
    throw std::runtime_error("value iteration did not converge within " +
                             std::to_string(config.max_iterations) + " sweeps");
  }
  return out;
}

DominanceReport verify_dominance(const PomdpConfig& config, const ValueIterationResult& vi) {
  if (!sensors_ordered(config.cheap, config.expensive)) {
    throw std::invalid_argument("sensor ordering assumption violated");
  }
  DominanceReport r;
  r.region = myopic_region(config.cheap, config.expensive, config.lambda);
  r.cheap_breakpoints = breakpoints(config.cheap);
  r.expensive_breakpoints = breakpoints(config.expensive);
  r.garbling = garbling_matrix(config.cheap, config.expensive);
  r.grid_points = static_cast<int>(vi.belief.size());
  r.iterations = vi.iterations;
  r.converged = vi.converged;
  int extra = 0;
  for (std::size_t i = 0; i < vi.belief.size(); ++i) {
    const bool m = vi.myopic[i] == Action::Expensive;
    const bool o = vi.policy[i] == Action::Expensive;
    r.myopic_points += m;
    r.optimal_points += o;
    if (m && !o) {
      ++r.violations;
      r.violating_beliefs.push_back(vi.belief[i]);
    }
    if (o && !m) ++extra;
  }
  r.extra_measure = r.grid_points ? static_cast<double>(extra) / r.grid_points : 0.0;
  return r;
}

DominanceReport verify_dominance(const PomdpConfig& config) {
  return verify_dominance(config, value_iteration(config));
}

std::string DominanceReport::to_json() const {
  nlohmann::json doc;
  doc["breakpoints"] = {
      {"cheap", {cheap_breakpoints.lower, cheap_breakpoints.upper}},
      {"expensive", {expensive_breakpoints.lower, expensive_breakpoints.upper}},
  };
  doc["myopic_region"] =
      region ? nlohmann::json{region->lo, region->hi} : nlohmann::json(nullptr);
  doc["garbling"] = {{"matrix",
                      {{garbling.matrix(0, 0), garbling.matrix(0, 1)},
                       {garbling.matrix(1, 0), garbling.matrix(1, 1)}}},
                     {"valid", garbling.valid}};
  doc["grid_points"] = grid_points;
  doc["myopic_points"] = myopic_points;
  doc["optimal_points"] = optimal_points;
  doc["violations"] = violations;
  doc["violating_beliefs"] = violating_beliefs;
  doc["optimal_only_measure"] = extra_measure;
  doc["iterations"] = iterations;
  doc["converged"] = converged;
  return doc.dump(2);
}

std::string grid_csv(const PomdpConfig& config, const ValueIterationResult& vi) {
  std::ostringstream os;
  os << "pi,advantage,value,optimal,myopic\n";
  for (std::size_t i = 0; i < vi.belief.size(); ++i) {
    const double p = vi.belief[i];
    os << fmt(p) << ',' << fmt(advantage(config.cheap, config.expensive, p)) << ','
       << fmt(vi.value[i]) << ',' << (vi.policy[i] == Action::Expensive ? 'E' : 'C') << ','
       << (vi.myopic[i] == Action::Expensive ? 'E' : 'C') << '\n';
  }
  return os.str();
}

}  // namespace lasead::pomdp
