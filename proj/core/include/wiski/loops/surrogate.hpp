#pragma once

#include <memory>
#include <string>

#include <Eigen/Dense>

#include "wiski/exact_gp.hpp"
#include "wiski/wiski_model.hpp"

namespace wiski::loops {

enum class SurrogateKind { kWiski, kExact };

std::string to_string(SurrogateKind kind);
SurrogateKind parse_surrogate_kind(const std::string& name);

struct SurrogateConfig {
  SurrogateKind kind = SurrogateKind::kWiski;
  KernelSpec spec;
  KernelParams params;
  /// Inducing grid, used only by the WISKI surrogate.
  Grid grid;
  ModelOptions options;
  NoiseMode noise_mode = NoiseMode::kHomoscedastic;
};

/// Common interface over WiskiModel and ExactGp so every loop can run either.
/// Each surrogate owns its Adam state.
class Surrogate {
 public:
  virtual ~Surrogate() = default;

  virtual std::unique_ptr<Surrogate> clone() const = 0;
  virtual SurrogateKind kind() const = 0;
  virtual Eigen::Index n() const = 0;
  virtual const KernelParams& params() const = 0;

  /// `noise_var` is used only in fixed-noise mode.
  virtual void condition(const Eigen::Ref<const Eigen::VectorXd>& x, double y, double noise_var = 0.0) = 0;
  virtual PosteriorGaussian predict(const Eigen::Ref<const Eigen::VectorXd>& x) const = 0;
  virtual Eigen::VectorXd fantasy_variance(const Eigen::Ref<const Eigen::MatrixXd>& Xf,
                                           const Eigen::Ref<const Eigen::MatrixXd>& Xq,
                                           double fantasy_noise = 0.0) const = 0;
  /// Latent posterior covariance between rows of Xa and Xb.
  virtual Eigen::MatrixXd posterior_covariance(const Eigen::Ref<const Eigen::MatrixXd>& Xa,
                                               const Eigen::Ref<const Eigen::MatrixXd>& Xb) const = 0;
  virtual double objective() const = 0;
  virtual HyperStepResult hyper_step(double lr) = 0;
  virtual void set_target_transform(double offset, double scale) = 0;
  /// Builds any lazily computed factorization ahead of read-heavy phases.
  virtual void prepare() const {}

  virtual NoiseMode noise_mode() const = 0;
  /// The underlying WISKI model, or null for other surrogates.
  virtual const WiskiModel* wiski_model() const { return nullptr; }

  void reset_optimizer() { adam_ = Adam(); }

 protected:
  Adam adam_;
};

/// Builds a surrogate from an initial batch. `noise0` is required in fixed-noise mode.
std::unique_ptr<Surrogate> make_surrogate(const SurrogateConfig& config, const Eigen::Ref<const Eigen::MatrixXd>& X0,
                                          const Eigen::Ref<const Eigen::VectorXd>& y0,
                                          const Eigen::VectorXd* noise0 = nullptr);

struct RefitOptions {
  double lr = 0.05;
  int max_steps = 50;
  /// Stops once the objective improves by less than this fraction of |objective|.
  double rel_tol = 1e-4;
};

/// Runs hyper steps until the budget or the relative-improvement criterion is met; returns steps taken.
int refit(Surrogate& surrogate, const RefitOptions& options);

}  // namespace wiski::loops
