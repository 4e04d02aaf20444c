#pragma once

#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "wiski/grid.hpp"
#include "wiski/kernels.hpp"
#include "wiski/optim.hpp"
#include "wiski/wiski_model.hpp"

namespace wiski {

/// Dense Cholesky GP. Appending an observation extends the factor in O(n^2);
/// hyperparameter changes refactor in O(n^3).
class ExactGp {
 public:
  ExactGp(KernelSpec spec, KernelParams params, NoiseMode mode = NoiseMode::kHomoscedastic, HyperPriors priors = {});

  static ExactGp fit(KernelSpec spec, KernelParams params, const Eigen::Ref<const Eigen::MatrixXd>& X,
                     const Eigen::Ref<const Eigen::VectorXd>& y, HyperPriors priors = {});
  static ExactGp fit_fixed_noise(KernelSpec spec, KernelParams params, const Eigen::Ref<const Eigen::MatrixXd>& X,
                                 const Eigen::Ref<const Eigen::VectorXd>& y,
                                 const Eigen::Ref<const Eigen::VectorXd>& noise, HyperPriors priors = {});

  const KernelSpec& spec() const { return spec_; }
  const KernelParams& params() const { return params_; }
  NoiseMode noise_mode() const { return mode_; }
  Eigen::Index n() const { return n_; }
  /// Diagonal jitter currently added on top of the noise.
  double jitter() const { return jitter_; }
  Eigen::MatrixXd inputs() const { return X_.topRows(n_); }
  Eigen::VectorXd targets() const { return y_.head(n_); }
  /// Lower Cholesky factor of K_XX + noise + jitter.
  Eigen::MatrixXd cholesky() const;

  void set_params(const KernelParams& params);
  void set_priors(const HyperPriors& priors) { priors_ = priors; }
  void set_learn_noise(bool learn) { learn_noise_ = learn; }
  void set_target_transform(double offset, double scale);

  void append(const Eigen::Ref<const Eigen::VectorXd>& x, double y);
  /// Fixed-noise append; `noise_var` is in model units like WiskiModel::condition.
  void append(const Eigen::Ref<const Eigen::VectorXd>& x, double y, double noise_var);

  double marginal_log_likelihood() const;
  double objective() const;

  PosteriorGaussian predict(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  Eigen::MatrixXd posterior_covariance(const Eigen::Ref<const Eigen::MatrixXd>& Xa,
                                       const Eigen::Ref<const Eigen::MatrixXd>& Xb) const;
  Eigen::VectorXd fantasy_variance(const Eigen::Ref<const Eigen::MatrixXd>& Xf,
                                   const Eigen::Ref<const Eigen::MatrixXd>& Xq, double fantasy_noise = 0.0) const;

  Eigen::VectorXd packed_params() const;
  KernelParams unpack(const Eigen::Ref<const Eigen::VectorXd>& theta) const;
  /// Analytic gradient of objective() over packed_params().
  Eigen::VectorXd objective_gradient() const;
  HyperStepResult hyper_step(Adam& optimizer, double lr);

 private:
  void refactor();
  void reserve(Eigen::Index capacity);
  double noise_at(Eigen::Index i) const;
  const Eigen::VectorXd& alpha() const;
  Eigen::VectorXd effective_targets() const;

  KernelSpec spec_;
  KernelParams params_;
  NoiseMode mode_;
  HyperPriors priors_;
  bool learn_noise_ = true;
  Eigen::MatrixXd X_;
  Eigen::VectorXd y_;
  Eigen::VectorXd noise_;
  Eigen::MatrixXd chol_;  // capacity-sized; top-left n x n block is live
  Eigen::Index n_ = 0;
  double jitter_ = 0.0;
  double offset_ = 0.0;
  double scale_ = 1.0;
  mutable std::optional<Eigen::VectorXd> alpha_;
};

/// Jitter ladder tried in order when a Cholesky factorization fails.
inline constexpr double kJitterLadder[] = {0.0, 1e-8, 1e-6, 1e-4};

struct DenseOracleOptions {
  /// Per-observation noise; empty means homoscedastic with params.noise().
  std::optional<Eigen::VectorXd> noise;
  /// Adds m phantom observations sqrt(eps) e_i with zero targets, reproducing the
  /// epsilon * I the streaming root carries. The reported MLL drops the phantom
  /// rows' noise and normalization terms so it is comparable with WiskiModel.
  double phantom_epsilon = 0.0;
};

struct DenseOracleResult {
  double mll = 0.0;
  std::vector<PosteriorGaussian> predictions;
};

/// Densifies W and K_UU and evaluates the GP with K~ = W K_UU W^T. X and X_star are grid-space points.
DenseOracleResult dense_ski_oracle(const Grid& grid, const KernelSpec& spec, const KernelParams& params,
                                   const Eigen::Ref<const Eigen::MatrixXd>& X, const Eigen::Ref<const Eigen::VectorXd>& y,
                                   const Eigen::Ref<const Eigen::MatrixXd>& X_star,
                                   const DenseOracleOptions& options = {});

}  // namespace wiski
