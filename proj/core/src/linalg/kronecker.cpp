#include "wiski/linalg/kronecker.hpp"

#include "wiski/error.hpp"

namespace wiski::linalg {

KroneckerToeplitzOperator::KroneckerToeplitzOperator(std::vector<ToeplitzOperator> factors)
    : factors_(std::move(factors)) {
  if (factors_.empty()) throw InvalidArgument("KroneckerToeplitzOperator: no factors");
  for (const auto& f : factors_) total_dim_ *= f.size();
}

double KroneckerToeplitzOperator::entry(Eigen::Index i, Eigen::Index j) const {
  double value = 1.0;
  for (auto it = factors_.rbegin(); it != factors_.rend(); ++it) {
    const Eigen::Index p = it->size();
    value *= it->entry(i % p, j % p);
    i /= p;
    j /= p;
  }
  return value;
}

void KroneckerToeplitzOperator::apply_inplace(double* data) const {
  Eigen::Index outer = 1;
  Eigen::Index inner = total_dim_;
  for (const auto& factor : factors_) {
    const Eigen::Index p = factor.size();
    inner /= p;
    if (p > 1) {
      if (inner == 1) {
        // Fibers are contiguous: the whole tensor is a p x outer column block.
        Eigen::Map<Eigen::MatrixXd> block(data, p, outer);
        block = factor.apply_columns(block);
      } else {
        for (Eigen::Index o = 0; o < outer; ++o) {
          // slab(i, j) = tensor(o, j, i); T acts along j.
          Eigen::Map<Eigen::MatrixXd> slab(data + o * p * inner, inner, p);
          slab = factor.apply_rows(slab);
        }
      }
    }
    outer *= p;
  }
}

Eigen::VectorXd KroneckerToeplitzOperator::apply(const Eigen::Ref<const Eigen::VectorXd>& v) const {
  require_dims(v.size() == total_dim_, "kronecker apply: vector length does not match operator size");
  Eigen::VectorXd out = v;
  apply_inplace(out.data());
  return out;
}

Eigen::MatrixXd KroneckerToeplitzOperator::apply_columns(
    const Eigen::Ref<const Eigen::MatrixXd>& x) const {
  require_dims(x.rows() == total_dim_, "kronecker apply: row count does not match operator size");
  Eigen::MatrixXd out = x;
  for (Eigen::Index c = 0; c < out.cols(); ++c) apply_inplace(out.col(c).data());
  return out;
}

Eigen::MatrixXd KroneckerToeplitzOperator::dense() const {
  Eigen::MatrixXd out = factors_.front().dense();
  for (std::size_t k = 1; k < factors_.size(); ++k) {
    const Eigen::MatrixXd f = factors_[k].dense();
    Eigen::MatrixXd next(out.rows() * f.rows(), out.cols() * f.cols());
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
      for (Eigen::Index j = 0; j < out.cols(); ++j) {
        next.block(i * f.rows(), j * f.cols(), f.rows(), f.cols()) = out(i, j) * f;
      }
    }
    out = std::move(next);
  }
  return out;
}

}  // namespace wiski::linalg
