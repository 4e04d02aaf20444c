#include <random>

#include <benchmark/benchmark.h>

#include "wiski/exact_gp.hpp"
#include "wiski/optim.hpp"
#include "wiski/wiski_model.hpp"

namespace {

using namespace wiski;

struct Stream {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
};

Stream make_stream(Eigen::Index n, int d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::normal_distribution<double> g(0.0, 0.1);
  Stream s{Eigen::MatrixXd(n, d), Eigen::VectorXd(n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int k = 0; k < d; ++k) s.X(i, k) = u(rng);
    s.y[i] = std::sin(3.0 * s.X(i, 0)) + g(rng);
  }
  return s;
}

WiskiModel streamed_model(Eigen::Index per_dim, int d, Eigen::Index n) {
  const Stream s = make_stream(n, d, 1);
  WiskiModel model(Grid::uniform(d, per_dim), {KernelFamily::kRbf, d}, KernelParams::defaults(d));
  for (Eigen::Index i = 0; i < n; ++i) model.condition(s.X.row(i).transpose(), s.y[i]);
  return model;
}

// Args: nodes per dimension, dimensions.
void BM_WiskiCondition(benchmark::State& state) {
  const int d = static_cast<int>(state.range(1));
  WiskiModel model = streamed_model(state.range(0), d, 100);
  const Stream s = make_stream(1024, d, 2);
  Eigen::Index i = 0;
  for (auto _ : state) {
    model.condition(s.X.row(i % 1024).transpose(), s.y[i % 1024]);
    ++i;
  }
}
BENCHMARK(BM_WiskiCondition)->Args({64, 1})->Args({256, 1})->Args({16, 2})->Args({6, 3})->Unit(benchmark::kMicrosecond);

void BM_WiskiPredict(benchmark::State& state) {
  const int d = static_cast<int>(state.range(1));
  const WiskiModel model = streamed_model(state.range(0), d, 500);
  model.prepare();
  const Stream s = make_stream(1024, d, 3);
  Eigen::Index i = 0;
  for (auto _ : state) benchmark::DoNotOptimize(model.predict(s.X.row(i++ % 1024).transpose()));
}
BENCHMARK(BM_WiskiPredict)->Args({64, 1})->Args({256, 1})->Args({16, 2})->Args({6, 3})->Unit(benchmark::kMicrosecond);

void BM_WiskiHyperStep(benchmark::State& state) {
  const int d = static_cast<int>(state.range(1));
  WiskiModel model = streamed_model(state.range(0), d, 500);
  Adam adam;
  for (auto _ : state) benchmark::DoNotOptimize(model.hyper_step(adam, 1e-3));
}
BENCHMARK(BM_WiskiHyperStep)->Args({64, 1})->Args({16, 2})->Args({6, 3})->Unit(benchmark::kMillisecond);

// Exact GP predict plus O(n^2) append, against n.
void BM_ExactAppendPredict(benchmark::State& state) {
  const Eigen::Index n = state.range(0);
  const Stream s = make_stream(n + 1, 2, 4);
  const ExactGp base = ExactGp::fit({KernelFamily::kRbf, 2}, KernelParams::defaults(2), s.X.topRows(n), s.y.head(n));
  ExactGp gp = base;
  for (auto _ : state) {
    state.PauseTiming();
    gp = base;
    state.ResumeTiming();
    benchmark::DoNotOptimize(gp.predict(s.X.row(n).transpose()));
    gp.append(s.X.row(n).transpose(), s.y[n]);
  }
  state.SetComplexityN(n);
}
BENCHMARK(BM_ExactAppendPredict)->RangeMultiplier(2)->Range(256, 2048)->Unit(benchmark::kMicrosecond)->Complexity();

}  // namespace

BENCHMARK_MAIN();
