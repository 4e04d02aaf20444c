#pragma once

#include <vector>

#include <Eigen/Dense>

#include "wiski/linalg/toeplitz.hpp"

namespace wiski::linalg {

/// T_1 ⊗ T_2 ⊗ ... ⊗ T_d acting on vectors flattened row-major (last factor fastest).
class KroneckerToeplitzOperator {
 public:
  explicit KroneckerToeplitzOperator(std::vector<ToeplitzOperator> factors);

  Eigen::Index size() const { return total_dim_; }
  const std::vector<ToeplitzOperator>& factors() const { return factors_; }

  /// Entry (i, j) of the full Kronecker product, O(d).
  double entry(Eigen::Index i, Eigen::Index j) const;

  Eigen::VectorXd apply(const Eigen::Ref<const Eigen::VectorXd>& v) const;
  Eigen::MatrixXd apply_columns(const Eigen::Ref<const Eigen::MatrixXd>& x) const;

  Eigen::MatrixXd dense() const;

 private:
  void apply_inplace(double* data) const;

  std::vector<ToeplitzOperator> factors_;
  Eigen::Index total_dim_ = 1;
};

}  // namespace wiski::linalg
