#pragma once

#include <vector>

namespace wiski {

/// Regression target and fixed noise for one class head.
struct DirichletTarget {
  double target = 0.0;
  double noise = 0.0;
};

/// alpha_c = [label == c] + alpha_eps, noise = log(1 + 1 / alpha_c), target = log(alpha_c) - noise / 2.
std::vector<DirichletTarget> dirichlet_transform(int label, int num_classes, double alpha_eps = 0.01);

}  // namespace wiski
