// Microbenchmarks for the hot paths of the solver.

#include "divsbl/harness.hpp"
#include "divsbl/inference.hpp"

#include <benchmark/benchmark.h>

namespace {

using namespace divsbl;

struct Problem {
  ExperimentConfig cfg;
  TrialData data;
  BlockLayout layout;
  MeasurementModel model;

  explicit Problem(const char* name)
      : cfg(scenario(name)),
        data(make_trial_data(cfg, 0)),
        layout(BlockLayout::from_dimension(data.phi.cols(), cfg.preset_L)),
        model(data.phi, data.y, default_noise_precision(data.y)) {}
};

// Posterior with every block active; range(0) picks M so both solve branches get exercised.
void BM_Posterior(benchmark::State& state) {
  ExperimentConfig cfg = scenario("heteroscedastic");
  cfg.M = state.range(0);
  const TrialData d = make_trial_data(cfg, 0);
  const auto layout = BlockLayout::from_dimension(d.phi.cols(), cfg.preset_L);
  const MeasurementModel model(d.phi, d.y, 100.0);
  const DiversifiedPrior prior = DiversifiedPrior::initial(layout);
  for (auto _ : state) benchmark::DoNotOptimize(compute_posterior(model, prior, layout));
}
BENCHMARK(BM_Posterior)->Arg(40)->Arg(80)->Arg(160)->Unit(benchmark::kMicrosecond);

void BM_Solve(benchmark::State& state, DualMode mode) {
  const Problem p("heteroscedastic");
  SolverConfig sc = p.cfg.solver;
  sc.dual_mode = mode;
  sc.max_iters = 50;
  int iterations = 0;
  for (auto _ : state) {
    const SolveResult r = solve(p.model, p.layout, sc);
    iterations = r.iterations;
    benchmark::DoNotOptimize(r.x_hat.data());
  }
  state.counters["iterations"] = iterations;
}
BENCHMARK_CAPTURE(BM_Solve, one_step, DualMode::one_step)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_Solve, complete, DualMode::complete)->Unit(benchmark::kMillisecond);

void BM_GammaUpdate(benchmark::State& state) {
  const Problem p("heteroscedastic");
  const DiversifiedPrior prior = DiversifiedPrior::initial(p.layout);
  const Posterior post = compute_posterior(p.model, prior, p.layout);
  for (auto _ : state) benchmark::DoNotOptimize(update_gamma(prior, post, p.layout));
}
BENCHMARK(BM_GammaUpdate)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
