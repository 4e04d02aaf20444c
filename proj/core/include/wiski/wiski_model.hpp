#pragma once

#include <memory>
#include <mutex>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "wiski/grid.hpp"
#include "wiski/kernels.hpp"
#include "wiski/linalg/root.hpp"
#include "wiski/optim.hpp"
#include "wiski/projection.hpp"

namespace wiski {

enum class NoiseMode {
  kHomoscedastic,  // learned Gaussian noise sigma^2
  kFixed,          // per-observation known noise; sigma^2 is pinned to 1 in every formula
};

enum class QSolve {
  kDense,  // Cholesky of the r x r matrix Q
  kCg,     // matrix-free CG solves and SLQ log-determinant
};

struct ModelOptions {
  /// 0 selects r = m for m <= 1024 and r = m / 2 above.
  Eigen::Index rank = 0;
  /// W^T W starts as epsilon * I so the root and its pseudo-inverse exist before any data.
  double root_epsilon = 1e-6;
  QSolve q_solve = QSolve::kDense;
  int cg_steps = 100;
  double cg_tol = 1e-10;
  int slq_probes = 30;
  /// Central finite-difference step in log-parameter space.
  double fd_step = 1e-4;
  /// Finite-difference step for the projection parameters.
  double projection_fd_step = 1e-5;
  bool learn_noise = true;
  HyperPriors priors;
  linalg::ToeplitzPath toeplitz_path = linalg::ToeplitzPath::kAuto;
};

/// Predictive distribution at one input. `variance` is the latent (noise-free)
/// variance; `noise` is the likelihood variance that observation_variance adds.
struct PosteriorGaussian {
  double mean = 0.0;
  double variance = 0.0;
  double noise = 0.0;

  double observation_variance() const { return variance + noise; }
};

/// The n-independent sufficient statistics. In fixed-noise mode every sum is
/// weighted by the inverse observation noise.
struct WiskiCaches {
  Eigen::VectorXd wty;         // sum y_i w_i / v_i
  double yty = 0.0;            // sum y_i^2 / v_i
  Eigen::VectorXd wt1;         // sum w_i / v_i
  double y_sum = 0.0;          // sum y_i / v_i
  double inv_noise_sum = 0.0;  // sum 1 / v_i
  double log_noise_sum = 0.0;  // sum log v_i
  linalg::LowRankRoot root;    // L L^T = sum w_i w_i^T / v_i + epsilon I
  Eigen::Index n = 0;
};

/// Kernel-dependent factorization of Q = I + L^T sigma^-2 K_UU L plus the mean cache.
struct QFactor {
  Eigen::MatrixXd kl;   // K_UU L
  Eigen::MatrixXd klt;  // (K_UU L)^T, so interpolation gathers read contiguous columns
  Eigen::LLT<Eigen::MatrixXd> chol;
  Eigen::MatrixXd l_copy;  // only held for the CG path
  QSolve mode = QSolve::kDense;
  int cg_steps = 0;
  double cg_tol = 0.0;
  double sigma2 = 1.0;
  double logdet = 0.0;
  double jitter = 0.0;
  Eigen::VectorXd mb;  // M W^T y for the transformed targets
  std::optional<linalg::KroneckerToeplitzOperator> kuu;

  Eigen::VectorXd solve(const Eigen::VectorXd& a) const;
  /// C^{-1} a with Q = C C^T (dense path only).
  Eigen::MatrixXd half_solve(const Eigen::MatrixXd& a) const;
};

struct HyperStepResult {
  double objective = 0.0;  // MLL (plus prior) before the step
  Eigen::VectorXd gradient;
  bool skipped = false;
};

struct ProjectionGradient {
  double objective = 0.0;     // partial objective at w_t
  double gamma = 1.0;         // 1 + v^T w
  Eigen::VectorXd grad_w;     // dense m-vector
  Eigen::VectorXd grad_phi;   // projection parameters
};

class WiskiModel {
 public:
  WiskiModel(Grid grid, KernelSpec spec, KernelParams params, ModelOptions options = {},
             NoiseMode mode = NoiseMode::kHomoscedastic);

  WiskiModel(const WiskiModel& other);
  WiskiModel& operator=(const WiskiModel& other);
  WiskiModel(WiskiModel&& other) noexcept;
  WiskiModel& operator=(WiskiModel&& other) noexcept;
  ~WiskiModel() = default;

  /// Batch initialization: W^T W is accumulated densely and root-decomposed once.
  static WiskiModel init(Grid grid, KernelSpec spec, KernelParams params,
                         const Eigen::Ref<const Eigen::MatrixXd>& X0, const Eigen::Ref<const Eigen::VectorXd>& y0,
                         ModelOptions options = {}, std::optional<ProjectionMap> projection = std::nullopt);

  static WiskiModel init_fixed_noise(Grid grid, KernelSpec spec, KernelParams params,
                                     const Eigen::Ref<const Eigen::MatrixXd>& X0,
                                     const Eigen::Ref<const Eigen::VectorXd>& y0,
                                     const Eigen::Ref<const Eigen::VectorXd>& noise0, ModelOptions options = {},
                                     std::optional<ProjectionMap> projection = std::nullopt);

  /// Rebuilds a model from stored caches (snapshot restore).
  static WiskiModel from_caches(Grid grid, KernelSpec spec, KernelParams params, NoiseMode mode,
                                WiskiCaches caches, ModelOptions options = {},
                                std::optional<ProjectionMap> projection = std::nullopt);

  const Grid& grid() const { return grid_; }
  const KernelSpec& spec() const { return spec_; }
  const KernelParams& params() const { return params_; }
  const ModelOptions& options() const { return options_; }
  NoiseMode noise_mode() const { return mode_; }
  const WiskiCaches& caches() const { return caches_; }
  const linalg::LowRankRoot& root() const { return caches_.root; }
  Eigen::Index n() const { return caches_.n; }
  Eigen::Index rank() const { return caches_.root.rank(); }
  Eigen::Index input_dims() const;
  const std::optional<ProjectionMap>& projection() const { return projection_; }

  /// Likelihood variance used by the Woodbury formulas (1 in fixed-noise mode).
  double sigma2() const;

  void set_params(const KernelParams& params);
  void set_projection(std::optional<ProjectionMap> projection);
  void set_options(const ModelOptions& options);

  /// Targets seen by the GP are (y - offset) / scale; predictions are mapped back.
  void set_target_transform(double offset, double scale);
  double target_offset() const { return offset_; }
  double target_scale() const { return scale_; }

  Eigen::VectorXd features(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  SparseWeights weights(const Eigen::Ref<const Eigen::VectorXd>& x) const;

  /// O(m r) rank-one conditioning on one observation (homoscedastic mode).
  void condition(const Eigen::Ref<const Eigen::VectorXd>& x, double y);
  /// Conditioning with a known observation noise (fixed-noise mode). `noise_var` is in
  /// model units, the variance of (y - offset) / scale.
  void condition(const Eigen::Ref<const Eigen::VectorXd>& x, double y, double noise_var);

  /// Conditions on an explicit interpolation vector, bypassing the projection.
  void condition_weights(const SparseWeights& w, double y, double noise_var = 1.0);

  /// Factorizes Q now so the model can be shared read-only across threads.
  void prepare() const;
  std::shared_ptr<const QFactor> q_factor() const;

  linalg::KroneckerToeplitzOperator kuu() const;

  Eigen::VectorXd apply_m(const Eigen::Ref<const Eigen::VectorXd>& v) const;

  /// Targets in model units after the transform.
  Eigen::VectorXd effective_wty() const;
  double effective_yty() const;

  double marginal_log_likelihood() const;
  /// MLL plus prior log density when priors are enabled.
  double objective() const;

  PosteriorGaussian predict(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  std::vector<PosteriorGaussian> predict_batch(const Eigen::Ref<const Eigen::MatrixXd>& X) const;

  /// Latent posterior covariance between the rows of Xa and Xb (target units squared).
  Eigen::MatrixXd posterior_covariance(const Eigen::Ref<const Eigen::MatrixXd>& Xa,
                                       const Eigen::Ref<const Eigen::MatrixXd>& Xb) const;

  /// Latent variances at Xq after hypothetically observing Xf. In fixed-noise mode the
  /// fantasy observations use `fantasy_noise`.
  Eigen::VectorXd fantasy_variance(const Eigen::Ref<const Eigen::MatrixXd>& Xf,
                                   const Eigen::Ref<const Eigen::MatrixXd>& Xq, double fantasy_noise = 0.0) const;

  /// Packed trainable log-parameters: [log lengthscales, log outputscale, (log noise)].
  Eigen::VectorXd packed_params() const;
  KernelParams unpack(const Eigen::Ref<const Eigen::VectorXd>& theta) const;

  /// Objective gradient over packed_params by central differences.
  Eigen::VectorXd objective_gradient() const;
  double objective_at(const KernelParams& params) const;

  HyperStepResult hyper_step(Adam& optimizer, double lr);

  /// f(w) = (bt M b - (v^T b)^2 / gamma) / (2 sigma^2) - log(gamma) / 2 with b = b0 + y w,
  /// v = M w, gamma = 1 + v^T w, where M reflects the data seen so far.
  /// Both w and y are taken in model units (already noise-scaled in fixed-noise mode).
  double partial_objective(const SparseWeights& w, double y) const;
  Eigen::VectorXd partial_objective_grad(const SparseWeights& w, double y) const;

  /// Gradient of the partial objective for (x, y) w.r.t. the projection parameters.
  ProjectionGradient projection_grad(const Eigen::Ref<const Eigen::VectorXd>& x, double y,
                                     double noise_var = 0.0) const;
  /// One Adam ascent step on the projection parameters; returns the gradient used.
  ProjectionGradient projection_step(const Eigen::Ref<const Eigen::VectorXd>& x, double y, Adam& optimizer,
                                     double lr, double noise_var = 0.0);

 private:
  struct KernelParts;

  void invalidate();
  void add_observation(const SparseWeights& w, double y, double noise_var);
  std::shared_ptr<QFactor> build_q_factor(const KernelParams& params, const linalg::LowRankRoot& root,
                                          bool with_mean) const;
  double latent_variance(const QFactor& qf, const std::vector<AxisWeights>& axes, const SparseWeights& w) const;
  /// Latent variances (model units) at the rows of X.
  Eigen::VectorXd latent_variances(const QFactor& qf, const Eigen::Ref<const Eigen::MatrixXd>& X) const;
  KernelParts kernel_parts(const KernelParams& params) const;
  /// Dense-path FD gradient reusing the parts at the current parameters.
  Eigen::VectorXd gradient_from_center(const KernelParts& center) const;
  double objective_from_parts(const KernelParts& parts, double log_outputscale, double sigma2,
                              const KernelParams& params) const;
  static double prior_variance(const std::vector<AxisWeights>& axes, const linalg::KroneckerToeplitzOperator& kuu);
  double sigma2_of(const KernelParams& params) const;
  void require_trainable() const;

  Grid grid_;
  KernelSpec spec_;
  KernelParams params_;
  ModelOptions options_;
  NoiseMode mode_ = NoiseMode::kHomoscedastic;
  WiskiCaches caches_;
  std::optional<ProjectionMap> projection_;
  double offset_ = 0.0;
  double scale_ = 1.0;

  mutable std::mutex q_mutex_;
  mutable std::shared_ptr<const QFactor> q_;
};

/// Rank used when ModelOptions::rank is 0.
Eigen::Index default_rank(Eigen::Index m);

}  // namespace wiski
