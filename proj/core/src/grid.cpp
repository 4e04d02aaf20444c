#include "wiski/grid.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <string>

#include "wiski/error.hpp"
#include "wiski/log.hpp"

namespace wiski {
namespace {

constexpr double kKeysA = -0.5;

std::atomic<std::size_t> g_clamped{0};

void note_clamp(double value, double lo, double hi) {
  const std::size_t count = g_clamped.fetch_add(1) + 1;
  if (count <= 5 || count % 1000 == 0) {
    log_warning("input coordinate " + std::to_string(value) + " outside grid bounds [" +
                std::to_string(lo) + ", " + std::to_string(hi) + "], clamped (" +
                std::to_string(count) + " so far)");
  }
}

AxisWeights axis_taps(double x, const Interval& bounds, Eigen::Index p, double h) {
  if (x < bounds.lower || x > bounds.upper) {
    note_clamp(x, bounds.lower, bounds.upper);
    x = std::clamp(x, bounds.lower, bounds.upper);
  }
  const double u = (x - bounds.lower) / h;
  auto cell = static_cast<Eigen::Index>(std::floor(u));
  cell = std::clamp<Eigen::Index>(cell, 0, p - 2);
  const double t = u - static_cast<double>(cell);
  const std::array<double, 4> offsets{1.0 + t, t, 1.0 - t, 2.0 - t};
  AxisWeights taps;
  for (int k = 0; k < 4; ++k) {
    Eigen::Index idx = cell - 1 + k;
    if (idx < 0) idx = -idx;
    if (idx > p - 1) idx = 2 * (p - 1) - idx;
    const double wv = cubic_convolution(offsets[static_cast<std::size_t>(k)]);
    int slot = 0;
    while (slot < taps.count && taps.index[static_cast<std::size_t>(slot)] != idx) ++slot;
    if (slot == taps.count) {
      taps.index[static_cast<std::size_t>(slot)] = idx;
      taps.value[static_cast<std::size_t>(slot)] = 0.0;
      ++taps.count;
    }
    taps.value[static_cast<std::size_t>(slot)] += wv;
  }
  return taps;
}

}  // namespace

Grid Grid::build(const std::vector<Interval>& bounds, const std::vector<Eigen::Index>& sizes) {
  if (bounds.empty() || bounds.size() != sizes.size()) {
    throw InvalidArgument("Grid::build: need one interval and one size per dimension");
  }
  Grid grid;
  grid.bounds_ = bounds;
  grid.sizes_ = sizes;
  grid.total_ = 1;
  for (std::size_t k = 0; k < sizes.size(); ++k) {
    if (sizes[k] < 4) throw InvalidArgument("Grid::build: cubic interpolation needs >= 4 nodes per dimension");
    if (!std::isfinite(bounds[k].lower) || !std::isfinite(bounds[k].upper) ||
        !(bounds[k].upper > bounds[k].lower)) {
      throw InvalidArgument("Grid::build: bounds must be finite with upper > lower");
    }
    grid.spacing_.push_back((bounds[k].upper - bounds[k].lower) / static_cast<double>(sizes[k] - 1));
    grid.total_ *= sizes[k];
  }
  return grid;
}

Grid Grid::uniform(int dims, Eigen::Index nodes_per_dim, double lower, double upper) {
  if (dims < 1) throw InvalidArgument("Grid::uniform: dims must be positive");
  return build(std::vector<Interval>(static_cast<std::size_t>(dims), Interval{lower, upper}),
               std::vector<Eigen::Index>(static_cast<std::size_t>(dims), nodes_per_dim));
}

double Grid::node(int dim, Eigen::Index i) const {
  const auto k = static_cast<std::size_t>(dim);
  return bounds_[k].lower + static_cast<double>(i) * spacing_[k];
}

Eigen::VectorXd Grid::node_point(Eigen::Index flat) const {
  Eigen::VectorXd x(dims());
  for (int k = dims() - 1; k >= 0; --k) {
    const Eigen::Index p = size(k);
    x[k] = node(k, flat % p);
    flat /= p;
  }
  return x;
}

Eigen::MatrixXd Grid::nodes() const {
  Eigen::MatrixXd out(total_, dims());
  for (Eigen::Index i = 0; i < total_; ++i) out.row(i) = node_point(i).transpose();
  return out;
}

bool Grid::contains(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (x.size() != dims()) return false;
  for (int k = 0; k < dims(); ++k) {
    const auto& b = bounds_[static_cast<std::size_t>(k)];
    if (!(x[k] >= b.lower && x[k] <= b.upper)) return false;
  }
  return true;
}

bool Grid::operator==(const Grid& other) const {
  if (sizes_ != other.sizes_) return false;
  for (std::size_t k = 0; k < bounds_.size(); ++k) {
    if (bounds_[k].lower != other.bounds_[k].lower || bounds_[k].upper != other.bounds_[k].upper) {
      return false;
    }
  }
  return true;
}

double SparseWeights::sum() const {
  double s = 0.0;
  for (double v : values) s += v;
  return s;
}

Eigen::VectorXd SparseWeights::to_dense(Eigen::Index m) const {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(m);
  for (std::size_t i = 0; i < indices.size(); ++i) out[indices[i]] += values[i];
  return out;
}

double cubic_convolution(double s) {
  s = std::abs(s);
  if (s <= 1.0) return ((kKeysA + 2.0) * s - (kKeysA + 3.0)) * s * s + 1.0;
  if (s < 2.0) return ((kKeysA * s - 5.0 * kKeysA) * s + 8.0 * kKeysA) * s - 4.0 * kKeysA;
  return 0.0;
}

std::vector<AxisWeights> axis_weights(const Grid& grid, const Eigen::Ref<const Eigen::VectorXd>& x) {
  require_dims(x.size() == grid.dims(), "interp_weights: point dimension does not match grid");
  if (!x.allFinite()) throw InvalidArgument("interp_weights: non-finite coordinate");
  std::vector<AxisWeights> axes;
  axes.reserve(static_cast<std::size_t>(grid.dims()));
  for (int k = 0; k < grid.dims(); ++k) {
    axes.push_back(axis_taps(x[k], grid.bounds()[static_cast<std::size_t>(k)], grid.size(k), grid.spacing(k)));
  }
  return axes;
}

SparseWeights tensor_weights(const Grid& grid, const std::vector<AxisWeights>& axes) {
  require_dims(static_cast<int>(axes.size()) == grid.dims(), "tensor_weights: one tap set per dimension");
  SparseWeights w;
  w.indices.push_back(0);
  w.values.push_back(1.0);
  for (int k = 0; k < grid.dims(); ++k) {
    const AxisWeights& taps = axes[static_cast<std::size_t>(k)];
    SparseWeights next;
    next.indices.reserve(w.nnz() * static_cast<std::size_t>(taps.count));
    next.values.reserve(w.nnz() * static_cast<std::size_t>(taps.count));
    for (std::size_t a = 0; a < w.nnz(); ++a) {
      for (int b = 0; b < taps.count; ++b) {
        next.indices.push_back(w.indices[a] * grid.size(k) + taps.index[static_cast<std::size_t>(b)]);
        next.values.push_back(w.values[a] * taps.value[static_cast<std::size_t>(b)]);
      }
    }
    w = std::move(next);
  }
  return w;
}

SparseWeights interp_weights(const Grid& grid, const Eigen::Ref<const Eigen::VectorXd>& x) {
  return tensor_weights(grid, axis_weights(grid, x));
}

double weights_dot(const SparseWeights& w, const Eigen::Ref<const Eigen::VectorXd>& v) {
  double s = 0.0;
  for (std::size_t i = 0; i < w.nnz(); ++i) {
    const Eigen::Index idx = w.indices[i];
    if (idx < 0 || idx >= v.size()) throw std::out_of_range("weights_dot: index outside vector");
    s += w.values[i] * v[idx];
  }
  return s;
}

void scatter_add(Eigen::Ref<Eigen::VectorXd> target, const SparseWeights& w, double scale) {
  if (scale == 0.0) return;
  for (std::size_t i = 0; i < w.nnz(); ++i) target[w.indices[i]] += scale * w.values[i];
}

void scatter_outer_add(Eigen::Ref<Eigen::MatrixXd> target, const SparseWeights& w, double scale) {
  for (std::size_t i = 0; i < w.nnz(); ++i) {
    const double vi = scale * w.values[i];
    for (std::size_t j = 0; j < w.nnz(); ++j) target(w.indices[i], w.indices[j]) += vi * w.values[j];
  }
}

Eigen::MatrixXd interp_matrix(const Grid& grid, const Eigen::Ref<const Eigen::MatrixXd>& x) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(x.rows(), grid.size());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const SparseWeights w = interp_weights(grid, x.row(i).transpose());
    for (std::size_t k = 0; k < w.nnz(); ++k) out(i, w.indices[k]) += w.values[k];
  }
  return out;
}

std::size_t clamped_input_count() { return g_clamped.load(); }

}  // namespace wiski
