// Serial reference vs OpenMP kernels. Sampling is timed at 1 worker and at
// omp_get_max_threads() workers; the output is identical in both cases.
#include <benchmark/benchmark.h>
#include <omp.h>

#include <atomic>

#include "condfield/operators.hpp"
#include "condfield/sampling.hpp"

using namespace condfield;

namespace {

const Grid& turbulence_grid() {
  static const Grid g = Grid::build(3, 1.0, 7, 3);
  return g;
}

void BM_AssembleSerial(benchmark::State& state) {
  const TurbulenceKernel k{};
  for (auto _ : state) benchmark::DoNotOptimize(serial::assemble_covariance(turbulence_grid(), k));
}

void BM_AssembleParallel(benchmark::State& state) {
  const TurbulenceKernel k{};
  for (auto _ : state) benchmark::DoNotOptimize(assemble_covariance(turbulence_grid(), k));
}

void BM_CovarianceTimesSerial(benchmark::State& state) {
  const auto g = Grid::build(3, 1.0, 17, 3);
  const auto form = observable_helicity(g);
  const TurbulenceKernel k{};
  for (auto _ : state) benchmark::DoNotOptimize(serial::covariance_times(g, k, form));
}

void BM_CovarianceTimesParallel(benchmark::State& state) {
  const auto g = Grid::build(3, 1.0, 17, 3);
  const auto form = observable_helicity(g);
  const TurbulenceKernel k{};
  for (auto _ : state) benchmark::DoNotOptimize(covariance_times(g, k, form));
}

void BM_DrawBlocks(benchmark::State& state) {
  const int workers = state.range(0) == 0 ? omp_get_max_threads() : static_cast<int>(state.range(0));
  Eigen::VectorXd lambda(64);
  for (Eigen::Index i = 0; i < lambda.size(); ++i) lambda[i] = 1.0 / (1.0 + static_cast<double>(i));
  const CoordinateSampler sampler(lambda, 1, FieldKind::complex, 4.0, SamplingMethod::tilted);
  BlockPlan plan;
  plan.seed = 7;
  plan.samples = 20000;
  const int saved = omp_get_max_threads();
  omp_set_num_threads(workers);
  for (auto _ : state) {
    std::atomic<std::size_t> n{0};
    draw_blocks(sampler, plan, [&](const BlockDraw& b) { n += b.q.size(); });
    benchmark::DoNotOptimize(n.load());
  }
  omp_set_num_threads(saved);
  state.counters["workers"] = workers;
}

}  // namespace

BENCHMARK(BM_AssembleSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_AssembleParallel)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_CovarianceTimesSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_CovarianceTimesParallel)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_DrawBlocks)->Arg(1)->Arg(0)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
