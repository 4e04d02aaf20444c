#pragma once

#include <complex>
#include <vector>

#include <Eigen/Dense>

namespace wiski::linalg {

/// Strategy used by ToeplitzOperator::apply.
///
/// kAuto picks the circulant-embedding FFT product for p >= kFftMinSize and a
/// direct O(p^2) product for smaller factors, where transform overhead dominates.
enum class ToeplitzPath { kAuto, kFft, kDirect };

inline constexpr Eigen::Index kFftMinSize = 512;

/// Symmetric Toeplitz matrix T with T(i, j) = c[|i - j|], stored by its first column.
class ToeplitzOperator {
 public:
  explicit ToeplitzOperator(Eigen::VectorXd first_column, ToeplitzPath path = ToeplitzPath::kAuto);

  Eigen::Index size() const { return column_.size(); }
  const Eigen::VectorXd& first_column() const { return column_; }
  bool uses_fft() const { return !spectrum_.empty(); }

  double entry(Eigen::Index i, Eigen::Index j) const { return column_[i > j ? i - j : j - i]; }

  Eigen::VectorXd apply(const Eigen::Ref<const Eigen::VectorXd>& v) const;

  /// T * X, column by column.
  Eigen::MatrixXd apply_columns(const Eigen::Ref<const Eigen::MatrixXd>& x) const;

  /// X * T, row by row (T is symmetric).
  Eigen::MatrixXd apply_rows(const Eigen::Ref<const Eigen::MatrixXd>& x) const;

  Eigen::MatrixXd dense() const;

 private:
  void apply_fft(const double* in, double* out) const;

  Eigen::VectorXd column_;
  Eigen::Index fft_size_ = 0;
  std::vector<std::complex<double>> spectrum_;
  Eigen::MatrixXd direct_;
};

}  // namespace wiski::linalg
