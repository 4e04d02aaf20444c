#pragma once

#include <string>

#include <Eigen/Dense>

namespace wiski::loops {

/// Levy on its native domain [-10, 10]^d; minimum 0 at (1, ..., 1).
double levy(const Eigen::Ref<const Eigen::VectorXd>& z);
/// Ackley on its native domain [-32.768, 32.768]^d; minimum 0 at the origin.
double ackley(const Eigen::Ref<const Eigen::VectorXd>& z);

/// A minimization test problem exposed on [-1, 1]^d through an affine map to its native box.
struct TestObjective {
  std::string name;
  int dims = 3;
  double noise_sd = 0.0;
  double native_half_width = 1.0;

  /// Native-domain coordinates of a unit-cube point.
  Eigen::VectorXd to_native(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  /// Noiseless value at a unit-cube point.
  double value(const Eigen::Ref<const Eigen::VectorXd>& x) const;
};

/// Known names: levy3, ackley3, sine1d. Noise defaults to the standard settings
/// (Levy 10.0, Ackley 4.0, sine 0.2) when `noise_sd` is negative.
TestObjective make_objective(const std::string& name, double noise_sd = -1.0);

}  // namespace wiski::loops
