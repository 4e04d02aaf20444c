#include "wiski/loops/timing.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>

#include "wiski/error.hpp"
#include "wiski/loops/data.hpp"

namespace wiski::loops {
namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 == 1 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

double target_function(const Eigen::Ref<const Eigen::VectorXd>& x) {
  double s = 0.0;
  for (Eigen::Index k = 0; k < x.size(); ++k) s += std::sin(2.0 * x[k] + 0.5 * static_cast<double>(k));
  return s;
}

}  // namespace

Grid grid_for_total(int dims, Eigen::Index m) {
  const auto per_dim = static_cast<Eigen::Index>(std::lround(std::pow(static_cast<double>(m), 1.0 / dims)));
  Eigen::Index total = 1;
  for (int k = 0; k < dims; ++k) total *= per_dim;
  if (total != m) {
    throw InvalidArgument("m = " + std::to_string(m) + " is not a perfect power for " + std::to_string(dims) +
                          " dimensions");
  }
  return Grid::uniform(dims, per_dim);
}

TimingSummary bench_timing(const SurrogateConfig& model_config, const TimingConfig& config) {
  if (config.n_max <= config.initial_points || config.initial_points < 2 || config.window < 1) {
    throw InvalidArgument("bench_timing: need n_max > initial_points >= 2 and window >= 1");
  }
  const Eigen::MatrixXd X = uniform_points(config.n_max, config.dims, config.seed);
  std::mt19937_64 rng(config.seed + 1);
  std::normal_distribution<double> normal(0.0, config.noise_sd);
  Eigen::VectorXd y(config.n_max);
  for (Eigen::Index i = 0; i < config.n_max; ++i) y[i] = target_function(X.row(i).transpose()) + normal(rng);

  SurrogateConfig mc = model_config;
  mc.spec.dims = config.dims;
  if (mc.params.log_lengthscales.size() != config.dims) mc.params = KernelParams::defaults(config.dims);
  if (mc.kind == SurrogateKind::kWiski) mc.grid = grid_for_total(config.dims, config.m);
  auto model = make_surrogate(mc, X.topRows(config.initial_points), y.head(config.initial_points));

  auto timed = [&](Eigen::Index i) {
    if (config.checkpoints.empty()) return true;
    for (Eigen::Index c : config.checkpoints) {
      if (i >= c && i < c + config.window) return true;
    }
    return false;
  };

  TimingSummary summary;
  double se = 0.0, nll = 0.0;
  Eigen::Index predicted = 0;
  std::vector<double> window_ms;
  using Clock = std::chrono::steady_clock;
  for (Eigen::Index i = config.initial_points; i < config.n_max; ++i) {
    const Eigen::VectorXd x = X.row(i).transpose();
    if (!timed(i)) {
      model->condition(x, y[i]);
      continue;
    }
    const auto start = Clock::now();
    const PosteriorGaussian p = model->predict(x);
    model->condition(x, y[i]);
    model->hyper_step(config.lr);
    const double ms = std::chrono::duration<double, std::milli>(Clock::now() - start).count();

    const double var = std::max(p.observation_variance(), 1e-12);
    const double r = y[i] - p.mean;
    se += r * r;
    nll += 0.5 * (kLog2Pi + std::log(var) + r * r / var);
    ++predicted;
    summary.rows.push_back({i, ms, std::sqrt(se / predicted), nll / predicted});
  }

  for (Eigen::Index c : config.checkpoints) {
    window_ms.clear();
    for (const auto& row : summary.rows) {
      if (row.step >= c && row.step < c + config.window) window_ms.push_back(row.elapsed_ms);
    }
    if (window_ms.empty()) continue;
    summary.checkpoint_n.push_back(c);
    summary.checkpoint_median_ms.push_back(median(window_ms));
  }

  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (const auto& row : summary.rows) {
    const double lx = std::log(static_cast<double>(row.step));
    const double ly = std::log(std::max(row.elapsed_ms, 1e-9));
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  const auto k = static_cast<double>(summary.rows.size());
  const double denom = k * sxx - sx * sx;
  summary.log_log_slope = denom > 0.0 ? (k * sxy - sx * sy) / denom : 0.0;
  return summary;
}

}  // namespace wiski::loops
