#pragma once

#include <cstdint>

#include <Eigen/Dense>

namespace wiski {

/// h(x) = tanh(A x + bias), mapping raw inputs into (-1, 1)^{d'}.
struct ProjectionMap {
  Eigen::MatrixXd weight;  // d' x d
  Eigen::VectorXd bias;    // d'

  /// Small random weights (N(0, scale^2 / d)) and zero bias.
  static ProjectionMap random(Eigen::Index in_dims, Eigen::Index out_dims, std::uint64_t seed,
                              double scale = 1.0);

  Eigen::Index in_dims() const { return weight.cols(); }
  Eigen::Index out_dims() const { return weight.rows(); }
  Eigen::Index num_params() const { return weight.size() + bias.size(); }

  Eigen::VectorXd apply(const Eigen::Ref<const Eigen::VectorXd>& x) const;

  /// Parameters packed as [vec(weight) column-major, bias].
  Eigen::VectorXd params() const;
  void set_params(const Eigen::Ref<const Eigen::VectorXd>& phi);
};

}  // namespace wiski
