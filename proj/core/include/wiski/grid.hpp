#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include <Eigen/Dense>

namespace wiski {

struct Interval {
  double lower = -1.0;
  double upper = 1.0;
};

/// Regular grid of inducing points. Flat indices are row-major over dimensions
/// (the last dimension varies fastest), matching the Kronecker factor order of K_UU.
class Grid {
 public:
  /// Requires at least 4 nodes per dimension and finite, non-degenerate bounds.
  static Grid build(const std::vector<Interval>& bounds, const std::vector<Eigen::Index>& sizes);

  /// Same bounds and node count in every dimension. The default bounds leave a margin
  /// around [-1, 1] so inputs scaled to the unit hypercube never touch edge cells.
  static Grid uniform(int dims, Eigen::Index nodes_per_dim, double lower = -1.2, double upper = 1.2);

  int dims() const { return static_cast<int>(sizes_.size()); }
  Eigen::Index size() const { return total_; }
  Eigen::Index size(int dim) const { return sizes_[static_cast<std::size_t>(dim)]; }
  const std::vector<Eigen::Index>& sizes() const { return sizes_; }
  const std::vector<Interval>& bounds() const { return bounds_; }
  double spacing(int dim) const { return spacing_[static_cast<std::size_t>(dim)]; }

  double node(int dim, Eigen::Index i) const;
  Eigen::VectorXd node_point(Eigen::Index flat) const;
  /// All nodes as an m x d matrix in flat-index order.
  Eigen::MatrixXd nodes() const;

  bool contains(const Eigen::Ref<const Eigen::VectorXd>& x) const;

  bool operator==(const Grid& other) const;

 private:
  std::vector<Interval> bounds_;
  std::vector<Eigen::Index> sizes_;
  std::vector<double> spacing_;
  Eigen::Index total_ = 0;
};

/// One row of the SKI interpolation matrix W: at most 4^d (index, value) pairs.
struct SparseWeights {
  std::vector<Eigen::Index> indices;
  std::vector<double> values;

  std::size_t nnz() const { return indices.size(); }
  double sum() const;
  Eigen::VectorXd to_dense(Eigen::Index m) const;
};

/// Keys cubic convolution kernel with a = -0.5.
double cubic_convolution(double s);

/// Cubic convolution taps along one axis (at most 4; mirrored taps are merged).
struct AxisWeights {
  std::array<Eigen::Index, 4> index{};
  std::array<double, 4> value{};
  int count = 0;
};

/// Per-axis taps of x; interp_weights is their tensor product. Clamps like interp_weights.
std::vector<AxisWeights> axis_weights(const Grid& grid, const Eigen::Ref<const Eigen::VectorXd>& x);

/// Flat row-major tensor product of per-axis taps.
SparseWeights tensor_weights(const Grid& grid, const std::vector<AxisWeights>& axes);

/// Tensor-product cubic convolution weights of x on the grid. Coordinates outside the
/// grid bounds are clamped to the boundary (with a warning); cells touching the edge
/// mirror their missing taps back into the grid, so the weights still sum to one.
SparseWeights interp_weights(const Grid& grid, const Eigen::Ref<const Eigen::VectorXd>& x);

double weights_dot(const SparseWeights& w, const Eigen::Ref<const Eigen::VectorXd>& v);

/// target[idx] += scale * value for every stored entry.
void scatter_add(Eigen::Ref<Eigen::VectorXd> target, const SparseWeights& w, double scale);

/// target += scale * w w^T.
void scatter_outer_add(Eigen::Ref<Eigen::MatrixXd> target, const SparseWeights& w, double scale);

/// Dense n x m interpolation matrix for the rows of x (test and oracle use).
Eigen::MatrixXd interp_matrix(const Grid& grid, const Eigen::Ref<const Eigen::MatrixXd>& x);

/// Number of coordinates clamped by interp_weights since process start.
std::size_t clamped_input_count();

}  // namespace wiski
