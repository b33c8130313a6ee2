#include "lasead/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <exception>
#include <fstream>
#include <mutex>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

namespace lasead {

using nlohmann::json;

namespace {

std::string join_lines(const std::vector<std::string>& lines) {
  std::string out;
  for (const auto& l : lines) out += (out.empty() ? "" : "\n") + l;
  return out;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// Reads optional keys while collecting type errors instead of throwing.
class Reader {
 public:
  Reader(const json& obj, std::string prefix, std::vector<std::string>& errors)
      : obj_(obj), prefix_(std::move(prefix)), errors_(errors) {
    if (!obj_.is_object()) errors_.push_back(where("") + "expected an object");
  }

  bool has(const char* key) const { return obj_.is_object() && obj_.contains(key); }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!has(key)) return;
    try {
      out = obj_.at(key).get<T>();
    } catch (const json::exception&) {
      errors_.push_back(where(key) + "has the wrong type");
    }
  }

  void vec2(const char* key, Vec2& out) {
    std::vector<double> v;
    seen_.insert(key);
    if (!has(key)) return;
    get(key, v);
    if (v.size() != 2) {
      errors_.push_back(where(key) + "expected 2 numbers");
      return;
    }
    out = {v[0], v[1]};
  }

  const json* child(const char* key) {
    seen_.insert(key);
    return has(key) ? &obj_.at(key) : nullptr;
  }

  void reject_unknown() {
    if (!obj_.is_object()) return;
    for (const auto& [key, value] : obj_.items()) {
      if (!seen_.contains(key)) errors_.push_back(where(key.c_str()) + "unknown key");
    }
  }

  std::string where(const char* key) const {
    std::string path = prefix_;
    if (key && *key) path += (path.empty() ? "" : ".") + std::string(key);
    return path.empty() ? std::string() : path + ": ";
  }

 private:
  const json& obj_;
  std::string prefix_;
  std::vector<std::string>& errors_;
  std::set<std::string> seen_;
};

std::optional<Vec4> read_vec4(const json& j) {
  if (!j.is_array() || j.size() != 4) return std::nullopt;
  Vec4 v;
  for (int i = 0; i < 4; ++i) {
    if (!j[i].is_number()) return std::nullopt;
    v[i] = j[i].get<double>();
  }
  return v;
}

void parse_plant(const json& j, PlantParams& p, std::vector<std::string>& errors) {
  Reader r(j, "plant", errors);
  r.get("cart_mass", p.cart_mass);
  r.get("pole_mass", p.pole_mass);
  r.get("half_length", p.half_length);
  r.get("gravity", p.gravity);
  r.get("dt", p.dt);
  r.get("u_max", p.u_max);
  if (const json* q = r.child("process_noise")) {
    if (auto diag = read_vec4(*q)) {
      p.process_noise = diag->asDiagonal();
    } else if (q->is_array() && q->size() == 4) {
      bool ok = true;
      for (int i = 0; i < 4 && ok; ++i) {
        auto row = read_vec4((*q)[i]);
        ok = row.has_value();
        if (ok) p.process_noise.row(i) = row->transpose();
      }
      if (!ok) errors.push_back("plant.process_noise: expected 4 numbers or a 4x4 matrix");
    } else {
      errors.push_back("plant.process_noise: expected 4 numbers or a 4x4 matrix");
    }
  }
  r.reject_unknown();
}

void parse_noise(const json& j, SensorNoise& n, std::vector<std::string>& errors) {
  Reader r(j, "noise", errors);
  r.vec2("encoder", n.encoder);
  r.vec2("camera", n.camera);
  r.vec2("imu", n.imu);
  r.reject_unknown();
}

AttackMagnitudes parse_magnitudes(const json& j, std::vector<std::string>& errors) {
  AttackMagnitudes m;
  Reader r(j, "stochastic.magnitudes", errors);
  r.vec2("encoder", m.encoder);
  r.vec2("camera", m.camera);
  r.vec2("imu", m.imu);
  r.reject_unknown();
  return m;
}

std::vector<AttackWindow> parse_attacks(const json& j, std::vector<std::string>& errors) {
  std::vector<AttackWindow> windows;
  if (!j.is_array()) {
    errors.push_back("attacks: expected an array");
    return windows;
  }
  for (std::size_t i = 0; i < j.size(); ++i) {
    AttackWindow w;
    Reader r(j[i], "attacks[" + std::to_string(i) + "]", errors);
    std::string sensor;
    r.get("sensor", sensor);
    if (auto id = parse_sensor(sensor)) {
      w.sensor = *id;
    } else {
      errors.push_back(r.where("sensor") + "unknown sensor '" + sensor + "'");
    }
    r.get("start_s", w.start_s);
    r.get("end_s", w.end_s);
    r.vec2("bias", w.bias);
    if (!(w.start_s < w.end_s)) errors.push_back(r.where("") + "start_s must be < end_s");
    r.reject_unknown();
    windows.push_back(w);
  }
  return windows;
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> problems)
    : std::runtime_error(join_lines(problems)), problems_(std::move(problems)) {}

std::vector<std::uint64_t> seed_range(std::size_t n, std::uint64_t first) {
  std::vector<std::uint64_t> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = first + i;
  return out;
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t run) {
  std::seed_seq seq{static_cast<std::uint32_t>(master), static_cast<std::uint32_t>(master >> 32),
                    static_cast<std::uint32_t>(run), static_cast<std::uint32_t>(run >> 32)};
  std::array<std::uint32_t, 2> out{};
  seq.generate(out.begin(), out.end());
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

unsigned default_workers() {
  if (const char* env = std::getenv("LASEAD_WORKERS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<unsigned>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

ScenarioConfig ScenarioConfig::named(std::string_view name) {
  ScenarioConfig c;
  c.name = std::string(name);
  if (name == "Stochastic") {
    c.loop.stochastic = StochasticAttacker::Params{};
  } else {
    c.loop.schedule = scenario_schedule(name);
  }
  c.seeds = seed_range(50);
  return c;
}

void ScenarioConfig::validate() const {
  std::vector<std::string> errors = loop.problems();
  if (seeds.empty()) errors.emplace_back("seeds: at least one seed is required");
  std::set<std::uint64_t> unique(seeds.begin(), seeds.end());
  if (unique.size() != seeds.size()) errors.emplace_back("seeds: must be distinct");
  if (!errors.empty()) throw ConfigError(errors);
}

ScenarioConfig ScenarioConfig::from_json(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError({std::string("invalid JSON: ") + e.what()});
  }
  std::vector<std::string> errors;
  ScenarioConfig c;
  c.seeds = seed_range(50);
  Reader r(doc, "", errors);
  if (!doc.is_object()) throw ConfigError(errors);

  r.get("name", c.name);
  std::string scenario;
  r.get("scenario", scenario);
  const json* attacks = r.child("attacks");
  const json* stochastic = r.child("stochastic");
  const int sources = !scenario.empty() + (attacks != nullptr) + (stochastic != nullptr);
  if (sources > 1) errors.emplace_back("give only one of scenario, attacks, stochastic");
  if (!scenario.empty()) {
    try {
      if (scenario == "Stochastic") {
        c.loop.stochastic = StochasticAttacker::Params{};
      } else {
        c.loop.schedule = scenario_schedule(scenario);
      }
      if (!r.has("name")) c.name = scenario;
    } catch (const std::invalid_argument& e) {
      errors.push_back(std::string("scenario: ") + e.what());
    }
  }
  if (attacks) {
    const auto windows = parse_attacks(*attacks, errors);
    try {
      c.loop.schedule = AttackSchedule(windows);
    } catch (const std::invalid_argument& e) {
      errors.push_back(std::string("attacks: ") + e.what());
    }
  }
  if (stochastic) {
    StochasticAttacker::Params p;
    Reader s(*stochastic, "stochastic", errors);
    s.get("p_start", p.p_start);
    s.get("p_stay", p.p_stay);
    if (const json* m = s.child("magnitudes")) p.magnitudes = parse_magnitudes(*m, errors);
    s.reject_unknown();
    c.loop.stochastic = p;
  }

  std::string method;
  r.get("method", method);
  if (!method.empty()) {
    if (auto m = parse_method(method)) {
      c.loop.method = *m;
    } else {
      errors.push_back("method: unknown method '" + method + "'");
    }
  }
  if (const json* p = r.child("plant")) parse_plant(*p, c.loop.plant, errors);
  if (const json* n = r.child("noise")) parse_noise(*n, c.loop.noise, errors);
  if (const json* g = r.child("graph")) {
    try {
      c.loop.graph = PerceptionGraph::from_json(g->dump());
    } catch (const std::exception& e) {
      errors.push_back(std::string("graph: ") + e.what());
    }
  }
  if (const json* t = r.child("thresholds")) {
    Reader th(*t, "thresholds", errors);
    ThresholdPolicy p = c.loop.effective_policy();
    th.get("probe_low", p.probe_low);
    th.get("probe_high", p.probe_high);
    th.get("disable", p.disable);
    th.get("enable", p.enable);
    th.reject_unknown();
    c.loop.policy = p;
  }
  if (const json* s = r.child("safe_set")) {
    Reader ss(*s, "safe_set", errors);
    ss.get("angle_limit", c.loop.safe.angle_limit);
    ss.get("position_limit", c.loop.safe.position_limit);
    ss.reject_unknown();
  }
  if (const json* w = r.child("weights")) {
    Reader ws(*w, "weights", errors);
    if (const json* st = ws.child("state")) {
      if (auto v = read_vec4(*st)) {
        c.loop.weights.state = *v;
      } else {
        errors.emplace_back("weights.state: expected 4 numbers");
      }
    }
    ws.get("input", c.loop.weights.input);
    ws.reject_unknown();
  }
  r.get("horizon_s", c.loop.horizon_s);
  r.get("initial_spread", c.loop.initial_spread);
  r.get("prior", c.loop.prior);
  r.get("replay_length", c.loop.replay_length);
  std::string detector_input;
  r.get("detector_input", detector_input);
  if (detector_input == "trusted") {
    c.loop.detector_input = DetectorInput::Trusted;
  } else if (detector_input == "full") {
    c.loop.detector_input = DetectorInput::Full;
  } else if (!detector_input.empty()) {
    errors.push_back("detector_input: expected 'trusted' or 'full'");
  }
  double failure_deg = 90.0;
  r.get("failure_angle_deg", failure_deg);
  c.loop.failure_angle = failure_deg * 3.14159265358979323846 / 180.0;
  if (r.has("wolf_c")) {
    double wc = 0.0;
    r.get("wolf_c", wc);
    c.loop.wolf_c = wc;
  }
  r.get("master_seed", c.master_seed);
  if (const json* s = r.child("seeds")) {
    if (s->is_number_unsigned() || s->is_number_integer()) {
      const auto n = s->get<long long>();
      if (n <= 0) {
        errors.emplace_back("seeds: count must be positive");
      } else {
        c.seeds = seed_range(static_cast<std::size_t>(n));
      }
    } else {
      try {
        c.seeds = s->get<std::vector<std::uint64_t>>();
      } catch (const json::exception&) {
        errors.emplace_back("seeds: expected a count or a list of non-negative integers");
      }
    }
  }
  if (r.has("calibration")) {
    std::string path;
    r.get("calibration", path);
    c.calibration_path = path;
  }
  r.reject_unknown();

  for (auto& e : c.loop.problems()) {
    for (auto& part : split(e, ';')) {
      const auto first = part.find_first_not_of(' ');
      errors.push_back(first == std::string::npos ? part : part.substr(first));
    }
  }
  if (c.seeds.empty()) errors.emplace_back("seeds: at least one seed is required");
  std::set<std::uint64_t> unique(c.seeds.begin(), c.seeds.end());
  if (unique.size() != c.seeds.size()) errors.emplace_back("seeds: must be distinct");
  if (!errors.empty()) throw ConfigError(errors);
  return c;
}

std::vector<RunResult> run_seeds(const ClosedLoop& loop, std::uint64_t master_seed,
                                 const std::vector<std::uint64_t>& seeds, unsigned workers) {
  std::vector<std::uint64_t> order = seeds;
  std::sort(order.begin(), order.end());
  std::vector<RunResult> results(order.size());
  std::vector<std::exception_ptr> errors(order.size());
  if (workers == 0) workers = default_workers();
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(order.size())));

  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < order.size(); i = next++) {
      try {
        results[i] = loop.run(derive_seed(master_seed, order[i]));
        results[i].seed = order[i];
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return results;
}

std::vector<RunResult> run_batch(const ScenarioConfig& config, unsigned workers) {
  config.validate();
  const ClosedLoop loop(config.loop);
  return run_seeds(loop, config.master_seed, config.seeds, workers);
}

Quartiles quartiles(std::vector<double> values) {
  Quartiles q;
  q.count = static_cast<int>(values.size());
  if (values.empty()) return q;
  std::sort(values.begin(), values.end());
  auto at = [&](double p) {
    const double pos = p * (values.size() - 1);
    const auto i = static_cast<std::size_t>(std::floor(pos));
    const std::size_t j = std::min(i + 1, values.size() - 1);
    return values[i] + (pos - i) * (values[j] - values[i]);
  };
  q.min = values.front();
  q.q1 = at(0.25);
  q.median = at(0.5);
  q.q3 = at(0.75);
  q.max = values.back();
  return q;
}

SummaryReport summarize(std::string_view scenario, Method method,
                        const std::vector<RunResult>& runs) {
  SummaryReport r;
  r.scenario = std::string(scenario);
  r.method = std::string(to_string(method));
  r.runs = static_cast<int>(runs.size());
  std::vector<double> costs;
  std::size_t longest = 0;
  double probes = 0.0;
  // Aggregate in seed order so the floating-point sums do not depend on
  // the order runs were supplied in.
  std::vector<const RunResult*> sorted;
  for (const auto& run : runs) sorted.push_back(&run);
  std::sort(sorted.begin(), sorted.end(),
            [](const RunResult* a, const RunResult* b) { return a->seed < b->seed; });
  for (const RunResult* run : sorted) {
    r.failures += run->failed;
    r.faults += !run->fault.empty();
    if (!run->failed) costs.push_back(run->cost);
    probes += run->probes;
    longest = std::max(longest, run->steps.size());
  }
  if (r.runs > 0) {
    r.failure_rate = static_cast<double>(r.failures) / r.runs;
    r.failure_se = std::sqrt(r.failure_rate * (1.0 - r.failure_rate) / r.runs);
    r.mean_probes = probes / r.runs;
  }
  r.cost = quartiles(costs);

  r.t.assign(longest, 0.0);
  r.mean_belief.assign(longest, {0.0, 0.0, 0.0});
  r.probing_rate.assign(longest, 0.0);
  for (std::size_t k = 0; k < longest; ++k) {
    int n = 0;
    for (const RunResult* run : sorted) {
      if (k >= run->steps.size()) continue;
      const StepRecord& s = run->steps[k];
      r.t[k] = s.t;
      for (int i = 0; i < kSensorCount; ++i) r.mean_belief[k][i] += s.belief.pi[i];
      r.probing_rate[k] += s.probing ? 1.0 : 0.0;
      ++n;
    }
    if (n > 0) {
      for (double& b : r.mean_belief[k]) b /= n;
      r.probing_rate[k] /= n;
    }
  }
  return r;
}

std::string SummaryReport::to_json() const {
  json doc;
  doc["scenario"] = scenario;
  doc["method"] = method;
  doc["runs"] = runs;
  doc["failures"] = failures;
  doc["faults"] = faults;
  doc["failure_rate"] = failure_rate;
  doc["failure_se"] = failure_se;
  doc["cost"] = {{"min", cost.min},       {"q1", cost.q1}, {"median", cost.median},
                 {"q3", cost.q3},         {"max", cost.max}, {"count", cost.count}};
  doc["mean_probes"] = mean_probes;
  json belief = json::object();
  for (SensorId id : kAllSensors) {
    std::vector<double> col;
    col.reserve(mean_belief.size());
    for (const auto& b : mean_belief) col.push_back(b[index_of(id)]);
    belief[std::string(lasead::to_string(id))] = col;
  }
  doc["trace"] = {{"t", t}, {"mean_belief", belief}, {"probing_rate", probing_rate}};
  return doc.dump(2);
}

SummaryReport SummaryReport::from_json(std::string_view text) {
  const json doc = json::parse(text);
  SummaryReport r;
  r.scenario = doc.at("scenario").get<std::string>();
  r.method = doc.at("method").get<std::string>();
  r.runs = doc.at("runs").get<int>();
  r.failures = doc.at("failures").get<int>();
  r.faults = doc.at("faults").get<int>();
  r.failure_rate = doc.at("failure_rate").get<double>();
  r.failure_se = doc.at("failure_se").get<double>();
  const json& c = doc.at("cost");
  r.cost = {c.at("min").get<double>(),    c.at("q1").get<double>(), c.at("median").get<double>(),
            c.at("q3").get<double>(),     c.at("max").get<double>(), c.at("count").get<int>()};
  r.mean_probes = doc.at("mean_probes").get<double>();
  const json& tr = doc.at("trace");
  r.t = tr.at("t").get<std::vector<double>>();
  r.probing_rate = tr.at("probing_rate").get<std::vector<double>>();
  r.mean_belief.assign(r.t.size(), {0.0, 0.0, 0.0});
  for (SensorId id : kAllSensors) {
    const auto col = tr.at("mean_belief").at(std::string(lasead::to_string(id))).get<std::vector<double>>();
    for (std::size_t k = 0; k < col.size() && k < r.mean_belief.size(); ++k) {
      r.mean_belief[k][index_of(id)] = col[k];
    }
  }
  return r;
}

bool SummaryReport::operator==(const SummaryReport& o) const {
  auto same_q = [](const Quartiles& a, const Quartiles& b) {
    return a.min == b.min && a.q1 == b.q1 && a.median == b.median && a.q3 == b.q3 &&
           a.max == b.max && a.count == b.count;
  };
  return scenario == o.scenario && method == o.method && runs == o.runs &&
         failures == o.failures && faults == o.faults && failure_rate == o.failure_rate &&
         failure_se == o.failure_se && same_q(cost, o.cost) && mean_probes == o.mean_probes &&
         t == o.t && mean_belief == o.mean_belief && probing_rate == o.probing_rate;
}

namespace {

void put(std::string& out, double v) {
  char buf[32];
  const int n = std::isfinite(v) ? std::snprintf(buf, sizeof buf, "%.10g", v)
                                 : std::snprintf(buf, sizeof buf, "nan");
  out.append(buf, static_cast<std::size_t>(n));
}

}  // namespace

std::string runs_csv(const std::vector<RunResult>& runs) {
  std::string out =
      "seed,t,p,v,theta,omega,y_p,y_v,y_theta,y_omega,a_p,a_v,a_theta,a_omega,"
      "pi_encoder,pi_camera,pi_imu,trust_encoder,trust_camera,trust_imu,probing,u,"
      "xhat_p,xhat_v,xhat_theta,xhat_omega,z_encoder,z_camera,z_imu\n";
  std::vector<const RunResult*> sorted;
  for (const auto& run : runs) sorted.push_back(&run);
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const RunResult* a, const RunResult* b) { return a->seed < b->seed; });
  for (const RunResult* run : sorted) {
    const std::string seed = std::to_string(run->seed);
    for (const StepRecord& s : run->steps) {
      out += seed;
      out += ',';
      put(out, s.t);
      for (int j = 0; j < kStateDim; ++j) {
        out += ',';
        put(out, s.state[j]);
      }
      for (int j = 0; j < kStateDim; ++j) {
        out += ',';
        put(out, s.soft_available[j] ? s.soft[j] : std::nan(""));
      }
      for (int j = 0; j < kStateDim; ++j) out += s.alerts[j] ? ",1" : ",0";
      for (int i = 0; i < kSensorCount; ++i) {
        out += ',';
        put(out, s.belief.pi[i]);
      }
      for (SensorId id : kAllSensors) out += s.trusted.contains(id) ? ",1" : ",0";
      out += s.probing ? ",1," : ",0,";
      put(out, s.u);
      for (int j = 0; j < kStateDim; ++j) {
        out += ',';
        put(out, s.estimate[j]);
      }
      for (SensorId id : kAllSensors) out += s.attacked.contains(id) ? ",1" : ",0";
      out += '\n';
    }
  }
  return out;
}

std::string trace_csv(const SummaryReport& report) {
  std::string out = "t,pi_encoder,pi_camera,pi_imu,probing_rate\n";
  for (std::size_t k = 0; k < report.t.size(); ++k) {
    put(out, report.t[k]);
    for (double b : report.mean_belief[k]) {
      out += ',';
      put(out, b);
    }
    out += ',';
    put(out, report.probing_rate[k]);
    out += '\n';
  }
  return out;
}

void write_text(const std::filesystem::path& path, std::string_view text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) {
    throw std::runtime_error("cannot open " + path.string() + " for writing: " +
                             std::strerror(errno));
  }
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!os) throw std::runtime_error("write failed for " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string() + ": " + std::strerror(errno));
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void export_batch(const std::filesystem::path& dir, const SummaryReport& report,
                  const std::vector<RunResult>& runs) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create " + dir.string() + ": " + ec.message());
  write_text(dir / "runs.csv", runs_csv(runs));
  write_text(dir / "trace.csv", trace_csv(report));
  write_text(dir / "summary.json", report.to_json());
}

namespace {

LoopConfig benign_normal(const LoopConfig& base) {
  LoopConfig c = base;
  c.method = Method::Normal;
  c.schedule = AttackSchedule();
  c.stochastic.reset();
  c.record_steps = false;
  c.record_residuals = true;
  return c;
}

std::vector<ResidualTrace> residual_traces(const ClosedLoop& loop, std::uint64_t master,
                                           const std::vector<std::uint64_t>& seeds,
                                           unsigned workers) {
  std::vector<ResidualTrace> out;
  for (auto& run : run_seeds(loop, master, seeds, workers)) out.push_back(std::move(run.residuals));
  return out;
}

}  // namespace

CalibrationResult calibrate(const LoopConfig& base, const CalibrationOptions& options,
                            unsigned workers) {
  if (options.benign_seeds < 1) throw std::invalid_argument("calibration needs benign seeds");
  const ClosedLoop loop(benign_normal(base));
  const auto training = residual_traces(
      loop, options.master_seed, seed_range(options.benign_seeds, options.training_offset), workers);
  const auto holdout = residual_traces(
      loop, options.master_seed, seed_range(options.benign_seeds, options.holdout_offset), workers);

  CalibrationResult out;
  const CusumCalibration cusum = calibrate_cusum(training, holdout, options.grid, options.budget);
  out.warnings = cusum.warnings;
  out.calibration.cusum = cusum.params;
  out.calibration.holdout_rate = cusum.holdout_rate;
  out.calibration.characterization = base.detector.characterization;
  for (int j = 0; j < kStateDim; ++j) {
    const auto seqs =
        alert_sequences(training, j, cusum.params.threshold[j], cusum.params.drift[j]);
    const EtaEstimate eta = estimate_eta(seqs);
    out.calibration.characterization.eta0[j] = eta.eta0;
    out.calibration.characterization.eta1[j] = eta.eta1;
  }
  return out;
}

std::array<double, kStateDim> benign_alert_rates(const LoopConfig& base,
                                                 const DetectorCalibration& calibration,
                                                 std::uint64_t master_seed,
                                                 const std::vector<std::uint64_t>& seeds,
                                                 unsigned workers) {
  LoopConfig c = benign_normal(base);
  c.detector = calibration;
  const ClosedLoop loop(c);
  const auto traces = residual_traces(loop, master_seed, seeds, workers);
  std::array<double, kStateDim> rates{};
  for (int j = 0; j < kStateDim; ++j) {
    rates[j] = alert_rate(traces, j, calibration.cusum.threshold[j], calibration.cusum.drift[j]);
  }
  return rates;
}

std::optional<TuneMode> parse_tune_mode(std::string_view s) {
  if (s == "stochastic") return TuneMode::Stochastic;
  if (s == "benign") return TuneMode::Benign;
  return std::nullopt;
}

std::vector<std::pair<double, double>> TuneOptions::default_grid() {
  std::vector<std::pair<double, double>> grid;
  for (int i = 0; i <= 10; ++i) {
    const double lo = 0.35 + 0.05 * i;
    for (double width : {0.001, 0.01, 0.04, 0.09, 0.15, 0.25}) {
      if (lo + width < 0.9) grid.emplace_back(lo, lo + width);
    }
  }
  grid.emplace_back(0.499, 0.5);
  grid.emplace_back(0.5, 0.59);
  return grid;
}

namespace {

struct Evaluation {
  double objective = 0.0;
  double failure_rate = 0.0;
  double mean_cost = 0.0;
};

Evaluation evaluate(const LoopConfig& cfg, std::uint64_t master, std::size_t n, double penalty,
                    unsigned workers) {
  const ClosedLoop loop(cfg);
  const auto runs = run_seeds(loop, master, seed_range(n), workers);
  Evaluation e;
  int ok = 0;
  const double horizon = static_cast<double>(cfg.steps());
  for (const auto& r : runs) {
    // A failed run is charged the penalty scaled by the share of the horizon
    // it did not survive, so earlier failures rank worse.
    const double lost = r.failed ? 1.0 - std::max(0, r.failure_step) / horizon : 0.0;
    e.objective += r.failed ? r.cost_before_failure + penalty * lost : r.cost;
    e.failure_rate += r.failed;
    if (!r.failed) {
      e.mean_cost += r.cost;
      ++ok;
    }
  }
  e.objective /= static_cast<double>(runs.size());
  e.failure_rate /= static_cast<double>(runs.size());
  e.mean_cost = ok ? e.mean_cost / ok : 0.0;
  return e;
}

}  // namespace

TuneResult tune_thresholds(const LoopConfig& base, TuneMode mode, const TuneOptions& options,
                           unsigned workers) {
  if (options.grid.empty()) throw std::invalid_argument("tuning grid is empty");
  if (options.seeds == 0) throw std::invalid_argument("tuning needs at least one seed");
  LoopConfig cfg = base;
  cfg.record_steps = false;
  cfg.record_residuals = false;
  if (mode == TuneMode::Stochastic) {
    cfg.method = Method::LaseAdS;
    cfg.schedule = AttackSchedule();
    if (!cfg.stochastic) cfg.stochastic = StochasticAttacker::Params{};
  } else {
    cfg.method = Method::LaseAdB;
    cfg.schedule = AttackSchedule();
    cfg.stochastic.reset();
  }

  TuneResult out;
  bool have_best = false;
  for (const auto& [lo, hi] : options.grid) {
    ThresholdPolicy policy = cfg.effective_policy();
    policy.probe_low = lo;
    policy.probe_high = hi;
    cfg.policy = policy;
    const Evaluation e = evaluate(cfg, options.master_seed, options.seeds,
                                  options.failure_penalty, workers);
    const TuneCandidate cand{lo, hi, e.objective, e.failure_rate, e.mean_cost};
    out.evaluated.push_back(cand);
    if (!have_best) {
      out.best = cand;
      have_best = true;
      continue;
    }
    const TuneCandidate& b = out.best;
    const double tol = 1e-12 * std::max(1.0, std::abs(b.objective));
    const bool better = cand.objective < b.objective - tol;
    const bool tie = std::abs(cand.objective - b.objective) <= tol;
    const double w_c = hi - lo;
    const double w_b = b.probe_high - b.probe_low;
    if (better || (tie && (w_c < w_b - 1e-15 || (std::abs(w_c - w_b) <= 1e-15 && lo < b.probe_low)))) {
      out.best = cand;
    }
  }
  return out;
}

std::string TuneResult::to_json() const {
  auto one = [](const TuneCandidate& c) {
    return json{{"probe_low", c.probe_low},   {"probe_high", c.probe_high},
                {"objective", c.objective},   {"failure_rate", c.failure_rate},
                {"mean_cost", c.mean_cost}};
  };
  json all = json::array();
  for (const auto& c : evaluated) all.push_back(one(c));
  return json{{"best", one(best)}, {"evaluated", all}}.dump(2);
}

std::vector<double> wolf_grid(WolfVariant v) {
  const double lo = v == WolfVariant::Imq ? 1e-3 : 0.5;
  const double hi = v == WolfVariant::Imq ? 10.0 : 500.0;
  std::vector<double> grid(20);
  for (int i = 0; i < 20; ++i) grid[i] = lo * std::pow(hi / lo, i / 19.0);
  return grid;
}

WolfTuneResult tune_wolf(const LoopConfig& base, std::size_t seeds, std::uint64_t master_seed,
                         double failure_penalty, unsigned workers) {
  const auto variant = wolf_variant(base.method);
  if (!variant) throw std::invalid_argument("tune_wolf needs a WoLF method");
  LoopConfig cfg = base;
  cfg.record_steps = false;
  WolfTuneResult out;
  bool have = false;
  for (double c : wolf_grid(*variant)) {
    cfg.wolf_c = c;
    const Evaluation e = evaluate(cfg, master_seed, seeds, failure_penalty, workers);
    out.evaluated.emplace_back(c, e.objective);
    if (!have || e.objective < out.objective) {
      out.c = c;
      out.objective = e.objective;
      have = true;
    }
  }
  return out;
}

}  // namespace lasead
