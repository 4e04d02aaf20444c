#include "wiski/projection.hpp"

#include <cmath>
#include <random>

#include "wiski/error.hpp"

namespace wiski {

ProjectionMap ProjectionMap::random(Eigen::Index in_dims, Eigen::Index out_dims, std::uint64_t seed,
                                    double scale) {
  if (in_dims < 1 || out_dims < 1) throw InvalidArgument("ProjectionMap: dimensions must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, scale / std::sqrt(static_cast<double>(in_dims)));
  ProjectionMap map;
  map.weight.resize(out_dims, in_dims);
  for (Eigen::Index j = 0; j < in_dims; ++j) {
    for (Eigen::Index i = 0; i < out_dims; ++i) map.weight(i, j) = normal(rng);
  }
  map.bias = Eigen::VectorXd::Zero(out_dims);
  return map;
}

Eigen::VectorXd ProjectionMap::apply(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  require_dims(x.size() == in_dims(), "ProjectionMap::apply: input dimension mismatch");
  return (weight * x + bias).array().tanh().matrix();
}

Eigen::VectorXd ProjectionMap::params() const {
  Eigen::VectorXd phi(num_params());
  phi.head(weight.size()) = Eigen::Map<const Eigen::VectorXd>(weight.data(), weight.size());
  phi.tail(bias.size()) = bias;
  return phi;
}

void ProjectionMap::set_params(const Eigen::Ref<const Eigen::VectorXd>& phi) {
  require_dims(phi.size() == num_params(), "ProjectionMap::set_params: parameter count mismatch");
  Eigen::Map<Eigen::VectorXd>(weight.data(), weight.size()) = phi.head(weight.size());
  bias = phi.tail(bias.size());
}

}  // namespace wiski
