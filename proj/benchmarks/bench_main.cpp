#include <benchmark/benchmark.h>

#include "glmmd/fit.hpp"
#include "glmmd/likelihood.hpp"
#include "glmmd/sim.hpp"
#include "glmmd/special.hpp"

namespace {

void BM_Trigamma(benchmark::State& state) {
  double x = 0.37;
  for (auto _ : state) {
    benchmark::DoNotOptimize(glmmd::trigamma(x));
    x = x < 40.0 ? x + 0.61 : 0.37;
  }
}
BENCHMARK(BM_Trigamma);

// One marginal log-likelihood evaluation, setting A, n = m/5.
void BM_LogLikGamma(benchmark::State& state) {
  const int m = static_cast<int>(state.range(0));
  const int nodes = static_cast<int>(state.range(1));
  const glmmd::SimSetting s = glmmd::SimSetting::preset('A');
  const glmmd::Dataset ds = glmmd::generate_dataset(s, m, m / 5, 1).data;
  const glmmd::LikelihoodEvaluator eval(ds, glmmd::kGamma, {nodes, true});
  const glmmd::Parameters p = s.truth();
  for (auto _ : state) benchmark::DoNotOptimize(eval(p));
  state.SetItemsProcessed(state.iterations() * ds.total_obs());
}
BENCHMARK(BM_LogLikGamma)->Args({50, 11})->Args({100, 21})->Args({400, 11})->Args({400, 21});

void BM_GaussianClosedForm(benchmark::State& state) {
  glmmd::SimSetting s;
  s.name = "gauss";
  s.family = glmmd::kGaussian;
  s.beta_b = Eigen::Vector3d(0.5, -1.0, 2.0);
  const glmmd::Dataset ds = glmmd::generate_dataset(s, 300, 60, 1).data;
  const glmmd::Parameters p = s.truth();
  for (auto _ : state) benchmark::DoNotOptimize(glmmd::gaussian_marginal_loglik(p, ds));
}
BENCHMARK(BM_GaussianClosedForm);

void BM_FitGamma(benchmark::State& state) {
  const glmmd::SimSetting s = glmmd::SimSetting::preset('A');
  const glmmd::Dataset ds = glmmd::generate_dataset(s, static_cast<int>(state.range(0)),
                                                    static_cast<int>(state.range(0)) / 5, 2).data;
  glmmd::FitOptions o;
  o.restarts = 0;
  o.quadrature.nodes_per_dim = 11;
  for (auto _ : state) benchmark::DoNotOptimize(glmmd::fit_mle(ds, glmmd::kGamma, o).loglik);
}
BENCHMARK(BM_FitGamma)->Arg(50)->Arg(100)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
