#pragma once

#include <cstdint>
#include <vector>

#include "wiski/loops/surrogate.hpp"

namespace wiski::loops {

struct TimingConfig {
  Eigen::Index n_max = 2000;
  int dims = 2;
  /// Total inducing points; must be a perfect dims-th power.
  Eigen::Index m = 256;
  Eigen::Index initial_points = 10;
  double noise_sd = 0.1;
  double lr = 5e-3;
  /// Steps at which timing windows are centered; empty times every step.
  std::vector<Eigen::Index> checkpoints;
  /// Timed steps per checkpoint window.
  int window = 11;
  std::uint64_t seed = 0;
};

/// One timed update: predict, then condition and one hyper step.
struct TimingRow {
  Eigen::Index step = 0;  // observations seen before this update
  double elapsed_ms = 0.0;
  double rmse = 0.0;  // cumulative one-step-ahead RMSE
  double nll = 0.0;   // cumulative one-step-ahead NLL
};

struct TimingSummary {
  std::vector<TimingRow> rows;
  std::vector<Eigen::Index> checkpoint_n;
  std::vector<double> checkpoint_median_ms;
  /// Least-squares slope of log(time) against log(n) over the recorded rows.
  double log_log_slope = 0.0;
};

/// Streams a synthetic 2-D smooth function through the surrogate. Outside the timing
/// windows observations are conditioned without hyper steps to reach large n quickly.
TimingSummary bench_timing(const SurrogateConfig& model_config, const TimingConfig& config);

/// Grid with round(m^(1/d)) nodes per dimension.
Grid grid_for_total(int dims, Eigen::Index m);

}  // namespace wiski::loops
