#include "wiski/loops/objectives.hpp"

#include <cmath>

#include "wiski/error.hpp"

namespace wiski::loops {

double levy(const Eigen::Ref<const Eigen::VectorXd>& z) {
  const Eigen::Index d = z.size();
  auto w = [&](Eigen::Index i) { return 1.0 + (z[i] - 1.0) / 4.0; };
  double s = std::pow(std::sin(M_PI * w(0)), 2);
  for (Eigen::Index i = 0; i + 1 < d; ++i) {
    const double wi = w(i);
    s += (wi - 1.0) * (wi - 1.0) * (1.0 + 10.0 * std::pow(std::sin(M_PI * wi + 1.0), 2));
  }
  const double wd = w(d - 1);
  s += (wd - 1.0) * (wd - 1.0) * (1.0 + std::pow(std::sin(2.0 * M_PI * wd), 2));
  return s;
}

double ackley(const Eigen::Ref<const Eigen::VectorXd>& z) {
  const auto d = static_cast<double>(z.size());
  const double a = 20.0, b = 0.2, c = 2.0 * M_PI;
  const double sq = z.squaredNorm() / d;
  const double cs = (c * z.array()).cos().sum() / d;
  return -a * std::exp(-b * std::sqrt(sq)) - std::exp(cs) + a + std::exp(1.0);
}

Eigen::VectorXd TestObjective::to_native(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  return native_half_width * x;
}

double TestObjective::value(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  const Eigen::VectorXd z = to_native(x);
  if (name == "levy3") return levy(z);
  if (name == "ackley3") return ackley(z);
  if (name == "sine1d") return std::sin(2.0 * M_PI * z[0]);
  throw InvalidArgument("unknown objective '" + name + "'");
}

TestObjective make_objective(const std::string& name, double noise_sd) {
  TestObjective obj;
  obj.name = name;
  if (name == "levy3") {
    obj.dims = 3;
    obj.native_half_width = 10.0;
    obj.noise_sd = 10.0;
  } else if (name == "ackley3") {
    obj.dims = 3;
    obj.native_half_width = 32.768;
    obj.noise_sd = 4.0;
  } else if (name == "sine1d") {
    obj.dims = 1;
    obj.native_half_width = 1.0;
    obj.noise_sd = 0.2;
  } else {
    throw InvalidArgument("unknown objective '" + name + "' (expected levy3, ackley3 or sine1d)");
  }
  if (noise_sd >= 0.0) obj.noise_sd = noise_sd;
  return obj;
}

}  // namespace wiski::loops
