#pragma once

#include <cstdint>

#include <Eigen/Dense>

#include "wiski/linalg/krylov.hpp"

namespace wiski::linalg {

/// L (m x r) with L L^T ≈ A, and J (m x r) with J J^T ≈ A^+ and J^T L ≈ I_r.
struct LowRankRoot {
  Eigen::MatrixXd L;
  Eigen::MatrixXd J;

  Eigen::Index dim() const { return L.rows(); }
  Eigen::Index rank() const { return L.cols(); }
  Eigen::MatrixXd gram() const { return L * L.transpose(); }
  Eigen::MatrixXd pseudo_inverse() const { return J * J.transpose(); }
};

struct RootOptions {
  /// Eigenvalues below eigen_floor * lambda_max are dropped from the pseudo-inverse factor.
  double eigen_floor = 1e-10;
  /// Negative eigenvalues below -psd_tolerance * lambda_max raise NotPsdError.
  double psd_tolerance = 1e-8;
  /// Full-rank requests up to this size use a dense Cholesky factor.
  Eigen::Index dense_max = 1024;
  std::uint64_t probe_seed = 0x5eed;
};

/// Scaled identity root sqrt(eps) I, with J = I / sqrt(eps).
LowRankRoot scaled_identity_root(Eigen::Index dim, double eps);

LowRankRoot root_decomposition(const LinearMap& apply_a, Eigen::Index dim, Eigen::Index rank,
                               const RootOptions& options = {});

/// Same as above for an explicitly stored symmetric matrix.
LowRankRoot root_decomposition(const Eigen::MatrixXd& a, Eigen::Index rank,
                               const RootOptions& options = {});

/// Root of L L^T + w w^T. With p = J^T w = U S (thin SVD), the inner factor is
/// B = I + U (diag(sqrt(S^2 + 1)) - I) U^T, L' = L B, J' = J B^{-1}.
LowRankRoot rank_one_root_update(const LowRankRoot& root, const Eigen::VectorXd& w);

/// Block form of the update for q columns at once (L L^T + W W^T).
LowRankRoot rank_update(const LowRankRoot& root, const Eigen::MatrixXd& w);

/// In-place variants used on hot paths.
void rank_one_root_update_inplace(LowRankRoot& root, const Eigen::VectorXd& w);
void rank_update_inplace(LowRankRoot& root, const Eigen::MatrixXd& w);

}  // namespace wiski::linalg
