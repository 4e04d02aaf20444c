#include <random>

#include <benchmark/benchmark.h>

#include "wiski/grid.hpp"
#include "wiski/kernels.hpp"
#include "wiski/linalg/kronecker.hpp"
#include "wiski/linalg/root.hpp"
#include "wiski/linalg/toeplitz.hpp"

namespace {

using namespace wiski;

Eigen::VectorXd gaussian(Eigen::Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = g(rng);
  return v;
}

Eigen::VectorXd rbf_column(Eigen::Index p) {
  Eigen::VectorXd c(p);
  for (Eigen::Index i = 0; i < p; ++i) c[i] = kernel_1d(KernelFamily::kRbf, 2.0 * static_cast<double>(i) / p, 0.3);
  return c;
}

void BM_ToeplitzApply(benchmark::State& state, linalg::ToeplitzPath path) {
  const Eigen::Index p = state.range(0);
  const linalg::ToeplitzOperator t(rbf_column(p), path);
  const Eigen::VectorXd v = gaussian(p, 1);
  for (auto _ : state) benchmark::DoNotOptimize(t.apply(v));
  state.SetComplexityN(p);
}
BENCHMARK_CAPTURE(BM_ToeplitzApply, direct, linalg::ToeplitzPath::kDirect)->RangeMultiplier(4)->Range(16, 4096);
BENCHMARK_CAPTURE(BM_ToeplitzApply, fft, linalg::ToeplitzPath::kFft)->RangeMultiplier(4)->Range(16, 4096);

void BM_KroneckerApply(benchmark::State& state) {
  const Eigen::Index p = state.range(0);
  const int d = static_cast<int>(state.range(1));
  std::vector<linalg::ToeplitzOperator> factors;
  for (int k = 0; k < d; ++k) factors.emplace_back(rbf_column(p));
  const linalg::KroneckerToeplitzOperator k(factors);
  const Eigen::VectorXd v = gaussian(k.size(), 2);
  for (auto _ : state) benchmark::DoNotOptimize(k.apply(v));
}
BENCHMARK(BM_KroneckerApply)->Args({16, 2})->Args({32, 2})->Args({64, 2})->Args({8, 3})->Args({16, 3});

void BM_RankOneRootUpdate(benchmark::State& state) {
  const Eigen::Index m = state.range(0);
  const Grid grid = Grid::uniform(1, m);
  linalg::LowRankRoot root = linalg::scaled_identity_root(m, 1e-6);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (auto _ : state) {
    const Eigen::VectorXd w = interp_weights(grid, Eigen::VectorXd::Constant(1, u(rng))).to_dense(m);
    linalg::rank_one_root_update_inplace(root, w);
  }
}
BENCHMARK(BM_RankOneRootUpdate)->RangeMultiplier(2)->Range(64, 512);

}  // namespace
