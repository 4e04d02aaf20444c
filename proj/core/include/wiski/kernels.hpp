#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "wiski/grid.hpp"
#include "wiski/linalg/kronecker.hpp"

namespace wiski {

enum class KernelFamily { kRbf, kMatern12 };

std::string to_string(KernelFamily family);
/// Accepts "rbf" and "matern12" (also "matern-1/2"); throws InvalidArgument otherwise.
KernelFamily parse_kernel_family(const std::string& name);

struct KernelSpec {
  KernelFamily family = KernelFamily::kRbf;
  int dims = 1;
};

/// Positive hyperparameters in log space. noise is the Gaussian likelihood variance.
struct KernelParams {
  Eigen::VectorXd log_lengthscales;
  double log_outputscale = 0.0;
  double log_noise = 0.0;

  /// log_lengthscale = log 0.5, log_outputscale = 0, log_noise = log 0.1.
  static KernelParams defaults(int dims);

  double lengthscale(int k) const;
  double outputscale() const;
  double noise() const;
  bool finite() const;
};

/// Gamma(concentration, rate) prior on a positive parameter.
struct GammaPrior {
  double concentration = 1.0;
  double rate = 1.0;

  /// log density of exp(log_value), up to the normalizing constant.
  double log_density(double log_value) const;
};

/// Optional MAP penalties added to the marginal log-likelihood during training.
struct HyperPriors {
  bool enabled = false;
  GammaPrior lengthscale{3.0, 6.0};
  GammaPrior outputscale{2.0, 0.15};

  double log_prob(const KernelParams& params) const;
};

/// Kernel value for a single per-dimension lag with unit outputscale.
double kernel_1d(KernelFamily family, double lag, double lengthscale);

double kernel_value(const KernelSpec& spec, const KernelParams& params,
                    const Eigen::Ref<const Eigen::VectorXd>& x,
                    const Eigen::Ref<const Eigen::VectorXd>& z);

/// K(X, Z) for points stored as rows.
Eigen::MatrixXd kernel_matrix(const KernelSpec& spec, const KernelParams& params,
                              const Eigen::Ref<const Eigen::MatrixXd>& X,
                              const Eigen::Ref<const Eigen::MatrixXd>& Z);

/// K_UU on the grid as a Kronecker product of symmetric Toeplitz factors; the
/// outputscale multiplies the first factor only.
linalg::KroneckerToeplitzOperator kuu_operator(const KernelSpec& spec, const KernelParams& params,
                                       const Grid& grid, linalg::ToeplitzPath path = linalg::ToeplitzPath::kAuto);

}  // namespace wiski
