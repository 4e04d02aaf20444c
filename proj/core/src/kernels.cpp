#include "wiski/kernels.hpp"

#include <cmath>

#include "wiski/error.hpp"

namespace wiski {

std::string to_string(KernelFamily family) {
  return family == KernelFamily::kRbf ? "rbf" : "matern12";
}

KernelFamily parse_kernel_family(const std::string& name) {
  if (name == "rbf" || name == "RBF") return KernelFamily::kRbf;
  if (name == "matern12" || name == "matern-1/2" || name == "Matern-1/2") return KernelFamily::kMatern12;
  throw InvalidArgument("unknown kernel family '" + name + "' (expected rbf or matern12)");
}

KernelParams KernelParams::defaults(int dims) {
  KernelParams p;
  p.log_lengthscales = Eigen::VectorXd::Constant(dims, std::log(0.5));
  p.log_outputscale = 0.0;
  p.log_noise = std::log(0.1);
  return p;
}

double KernelParams::lengthscale(int k) const { return std::exp(log_lengthscales[k]); }
double KernelParams::outputscale() const { return std::exp(log_outputscale); }
double KernelParams::noise() const { return std::exp(log_noise); }

bool KernelParams::finite() const {
  return log_lengthscales.allFinite() && std::isfinite(log_outputscale) && std::isfinite(log_noise);
}

double GammaPrior::log_density(double log_value) const {
  return (concentration - 1.0) * log_value - rate * std::exp(log_value);
}

double HyperPriors::log_prob(const KernelParams& params) const {
  if (!enabled) return 0.0;
  double total = outputscale.log_density(params.log_outputscale);
  for (Eigen::Index k = 0; k < params.log_lengthscales.size(); ++k) {
    total += lengthscale.log_density(params.log_lengthscales[k]);
  }
  return total;
}

double kernel_1d(KernelFamily family, double lag, double lengthscale) {
  const double r = lag / lengthscale;
  if (family == KernelFamily::kRbf) return std::exp(-0.5 * r * r);
  return std::exp(-std::abs(r));
}

namespace {

void check_params(const KernelSpec& spec, const KernelParams& params) {
  require_dims(params.log_lengthscales.size() == spec.dims,
               "kernel: lengthscale count must equal input dimension");
}

}  // namespace

double kernel_value(const KernelSpec& spec, const KernelParams& params,
                    const Eigen::Ref<const Eigen::VectorXd>& x,
                    const Eigen::Ref<const Eigen::VectorXd>& z) {
  check_params(spec, params);
  require_dims(x.size() == spec.dims && z.size() == spec.dims, "kernel_value: point dimension mismatch");
  double acc = 0.0;
  for (int k = 0; k < spec.dims; ++k) {
    const double r = (x[k] - z[k]) / params.lengthscale(k);
    acc += spec.family == KernelFamily::kRbf ? 0.5 * r * r : std::abs(r);
  }
  return params.outputscale() * std::exp(-acc);
}

Eigen::MatrixXd kernel_matrix(const KernelSpec& spec, const KernelParams& params,
                              const Eigen::Ref<const Eigen::MatrixXd>& X,
                              const Eigen::Ref<const Eigen::MatrixXd>& Z) {
  check_params(spec, params);
  require_dims(X.cols() == spec.dims && Z.cols() == spec.dims, "kernel_matrix: point dimension mismatch");
  Eigen::MatrixXd expo = Eigen::MatrixXd::Zero(X.rows(), Z.rows());
  for (int k = 0; k < spec.dims; ++k) {
    const double inv = 1.0 / params.lengthscale(k);
    for (Eigen::Index j = 0; j < Z.rows(); ++j) {
      for (Eigen::Index i = 0; i < X.rows(); ++i) {
        const double r = (X(i, k) - Z(j, k)) * inv;
        expo(i, j) += spec.family == KernelFamily::kRbf ? 0.5 * r * r : std::abs(r);
      }
    }
  }
  return params.outputscale() * (-expo.array()).exp().matrix();
}

linalg::KroneckerToeplitzOperator kuu_operator(const KernelSpec& spec, const KernelParams& params,
                                       const Grid& grid, linalg::ToeplitzPath path) {
  check_params(spec, params);
  require_dims(grid.dims() == spec.dims, "kuu_operator: grid dimension does not match kernel");
  std::vector<linalg::ToeplitzOperator> factors;
  factors.reserve(static_cast<std::size_t>(grid.dims()));
  for (int k = 0; k < grid.dims(); ++k) {
    const Eigen::Index p = grid.size(k);
    Eigen::VectorXd col(p);
    const double ell = params.lengthscale(k);
    for (Eigen::Index i = 0; i < p; ++i) {
      col[i] = kernel_1d(spec.family, static_cast<double>(i) * grid.spacing(k), ell);
    }
    if (k == 0) col *= params.outputscale();
    factors.emplace_back(std::move(col), path);
  }
  return linalg::KroneckerToeplitzOperator(std::move(factors));
}

}  // namespace wiski
