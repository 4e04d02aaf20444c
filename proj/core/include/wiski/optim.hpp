#pragma once

#include <cmath>

#include <Eigen/Dense>

namespace wiski {

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam moment state. ascent_step returns the increment to add to the parameters
/// when maximizing an objective with gradient `grad`.
class Adam {
 public:
  Adam() = default;
  explicit Adam(Eigen::Index dim, AdamOptions options = {})
      : options_(options), m_(Eigen::VectorXd::Zero(dim)), v_(Eigen::VectorXd::Zero(dim)) {}

  Eigen::Index dim() const { return m_.size(); }
  int iterations() const { return t_; }
  const AdamOptions& options() const { return options_; }

  Eigen::VectorXd ascent_step(const Eigen::VectorXd& grad, double lr) {
    if (m_.size() != grad.size()) {
      m_ = Eigen::VectorXd::Zero(grad.size());
      v_ = Eigen::VectorXd::Zero(grad.size());
      t_ = 0;
    }
    ++t_;
    m_ = options_.beta1 * m_ + (1.0 - options_.beta1) * grad;
    v_ = options_.beta2 * v_ + (1.0 - options_.beta2) * grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(options_.beta1, t_);
    const double c2 = 1.0 - std::pow(options_.beta2, t_);
    return lr * ((m_ / c1).array() / ((v_ / c2).array().sqrt() + options_.eps)).matrix();
  }

  void reset() {
    m_.setZero();
    v_.setZero();
    t_ = 0;
  }

 private:
  AdamOptions options_;
  Eigen::VectorXd m_;
  Eigen::VectorXd v_;
  int t_ = 0;
};

}  // namespace wiski
