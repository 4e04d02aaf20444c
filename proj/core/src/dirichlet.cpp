#include "wiski/dirichlet.hpp"

#include <cmath>
#include <string>

#include "wiski/error.hpp"

namespace wiski {

std::vector<DirichletTarget> dirichlet_transform(int label, int num_classes, double alpha_eps) {
  if (num_classes < 1) throw InvalidArgument("dirichlet_transform: need at least one class");
  if (label < 0 || label >= num_classes) {
    throw InvalidArgument("dirichlet_transform: label " + std::to_string(label) + " outside [0, " +
                          std::to_string(num_classes) + ")");
  }
  if (!(alpha_eps > 0.0)) throw InvalidArgument("dirichlet_transform: alpha_eps must be positive");
  std::vector<DirichletTarget> out(static_cast<std::size_t>(num_classes));
  for (int c = 0; c < num_classes; ++c) {
    const double alpha = (c == label ? 1.0 : 0.0) + alpha_eps;
    const double noise = std::log1p(1.0 / alpha);
    out[static_cast<std::size_t>(c)] = {std::log(alpha) - 0.5 * noise, noise};
  }
  return out;
}

}  // namespace wiski
