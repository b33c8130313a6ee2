#include <memory>

#include <benchmark/benchmark.h>

#include "lasead/belief.hpp"
#include "lasead/estimation.hpp"
#include "lasead/loop.hpp"
#include "lasead/pomdp.hpp"
#include "lasead/probing.hpp"

using namespace lasead;

static void BM_EkfPredictUpdate(benchmark::State& state) {
  const CartPole plant;
  const ExtendedKalmanFilter ekf(std::make_shared<CartPoleProcessModel>(plant),
                                 plant.params().process_noise);
  EkfEstimate e;
  e.mean = Vec4(0.01, 0.0, 0.02, 0.0);
  e.covariance = Mat4::Identity() * 1e-3;
  SoftMeasurement soft;
  soft.y = Vec4(0.011, 0.001, 0.019, 0.0);
  soft.variance = Vec4(1e-4, 1e-3, 1e-4, 1e-3);
  soft.available.set();
  for (auto _ : state) {
    const EkfEstimate prior = ekf.predict(e, 0.5);
    benchmark::DoNotOptimize(ekf.update(prior, soft));
  }
}
BENCHMARK(BM_EkfPredictUpdate);

static void BM_AlertPosterior(benchmark::State& state) {
  const BnModel bn(PerceptionGraph::cart_pole(), DetectorCharacterization{});
  const Belief prior{{0.05, 0.05, 0.05}};
  AlertVector a, prev;
  a[0] = a[1] = true;
  for (auto _ : state) benchmark::DoNotOptimize(bn.alert_posterior(prior, a, prev));
}
BENCHMARK(BM_AlertPosterior);

static void BM_SolveProbing(benchmark::State& state) {
  const CartPole plant;
  const Hypothesis h0{Vec4(0.1, 0.0, 0.02, 0.0), Mat4::Identity() * 1e-4};
  const Hypothesis h1{Vec4(0.15, 0.1, 0.02, 0.05), Mat4::Identity() * 1e-4};
  const std::vector<int> rows{0, 2};
  const Eigen::MatrixXd sigma = Eigen::MatrixXd::Identity(2, 2) * 1e-3;
  for (auto _ : state) benchmark::DoNotOptimize(solve_probing(plant, h0, h1, rows, sigma, SafeSet{}, 1.0));
}
BENCHMARK(BM_SolveProbing);

// One 10 s closed-loop run; calibration left at its defaults.
static void BM_ClosedLoopRun(benchmark::State& state) {
  LoopConfig c;
  c.method = static_cast<Method>(state.range(0));
  c.schedule = scenario_schedule("EICAttack");
  c.record_steps = false;
  const ClosedLoop loop(c);
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(loop.run(seed++));
  state.SetLabel(std::string(to_string(c.method)));
}
BENCHMARK(BM_ClosedLoopRun)
    ->Arg(static_cast<int>(Method::Normal))
    ->Arg(static_cast<int>(Method::WolfTmd))
    ->Arg(static_cast<int>(Method::LaseAdS))
    ->Unit(benchmark::kMillisecond);

static void BM_ValueIteration(benchmark::State& state) {
  pomdp::PomdpConfig cfg;
  cfg.grid = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(pomdp::value_iteration(cfg));
}
BENCHMARK(BM_ValueIteration)->Arg(1000)->Arg(10000)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
