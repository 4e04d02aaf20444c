#pragma once

#include <cstdint>
#include <functional>

#include <Eigen/Dense>

namespace wiski::linalg {

using LinearMap = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

struct CgResult {
  Eigen::VectorXd x;
  int iterations = 0;
  double relative_residual = 0.0;
  bool converged = false;
};

/// Plain conjugate gradients for SPD systems. Stops at ||Ax - b|| / ||b|| <= tol or max_iter.
CgResult conjugate_gradients(const LinearMap& apply_a, const Eigen::VectorXd& b, double tol,
                             int max_iter);

/// Lanczos output: orthonormal basis Q (n x k) and T = tridiag(beta, alpha, beta) = Q^T A Q.
struct TridiagonalPair {
  Eigen::MatrixXd basis;
  Eigen::VectorXd alpha;
  Eigen::VectorXd beta;  // size k - 1

  Eigen::Index rank() const { return alpha.size(); }
  Eigen::MatrixXd tridiagonal() const;
};

/// Lanczos with full reorthogonalization. Terminates early (reduced rank) when the
/// next off-diagonal falls below breakdown_tol relative to the running spectrum scale.
TridiagonalPair lanczos(const LinearMap& apply_a, const Eigen::VectorXd& probe, Eigen::Index k,
                        double breakdown_tol = 1e-12);

/// Stochastic Lanczos quadrature estimate of log|A| with Rademacher probes.
double slq_logdet(const LinearMap& apply_a, Eigen::Index dim, int num_probes, int steps,
                  std::uint64_t seed);

}  // namespace wiski::linalg
