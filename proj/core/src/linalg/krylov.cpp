#include "wiski/linalg/krylov.hpp"

#include <cmath>
#include <random>

#include <Eigen/Eigenvalues>

#include "wiski/error.hpp"

namespace wiski::linalg {

CgResult conjugate_gradients(const LinearMap& apply_a, const Eigen::VectorXd& b, double tol,
                             int max_iter) {
  if (!(tol > 0.0)) throw InvalidArgument("conjugate_gradients: tol must be positive");
  if (!b.allFinite()) throw NumericalError("conjugate_gradients: non-finite right-hand side");
  CgResult result;
  result.x = Eigen::VectorXd::Zero(b.size());
  const double b_norm = b.norm();
  if (b_norm == 0.0) {
    result.converged = true;
    return result;
  }
  Eigen::VectorXd r = b;
  Eigen::VectorXd p = r;
  double rr = r.squaredNorm();
  for (int it = 0; it < max_iter; ++it) {
    const Eigen::VectorXd ap = apply_a(p);
    const double pap = p.dot(ap);
    if (!std::isfinite(pap) || !ap.allFinite()) {
      throw NumericalError("conjugate_gradients: non-finite values encountered");
    }
    if (pap <= 0.0) throw NumericalError("conjugate_gradients: operator is not positive definite");
    const double step = rr / pap;
    result.x += step * p;
    r -= step * ap;
    const double rr_next = r.squaredNorm();
    result.iterations = it + 1;
    result.relative_residual = std::sqrt(rr_next) / b_norm;
    if (result.relative_residual <= tol) {
      result.converged = true;
      return result;
    }
    p = r + (rr_next / rr) * p;
    rr = rr_next;
  }
  return result;
}

Eigen::MatrixXd TridiagonalPair::tridiagonal() const {
  const Eigen::Index k = alpha.size();
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(k, k);
  for (Eigen::Index i = 0; i < k; ++i) {
    t(i, i) = alpha[i];
    if (i + 1 < k) {
      t(i, i + 1) = beta[i];
      t(i + 1, i) = beta[i];
    }
  }
  return t;
}

TridiagonalPair lanczos(const LinearMap& apply_a, const Eigen::VectorXd& probe, Eigen::Index k,
                        double breakdown_tol) {
  const Eigen::Index n = probe.size();
  const double probe_norm = probe.norm();
  if (!(probe_norm > 0.0)) throw InvalidArgument("lanczos: probe vector must be nonzero");
  if (k < 1 || k > n) throw InvalidArgument("lanczos: k must lie in [1, dim]");

  Eigen::MatrixXd q(n, k);
  std::vector<double> alpha;
  std::vector<double> beta;
  q.col(0) = probe / probe_norm;
  double scale = 0.0;
  for (Eigen::Index j = 0; j < k; ++j) {
    Eigen::VectorXd w = apply_a(q.col(j));
    if (!w.allFinite()) throw NumericalError("lanczos: non-finite operator output");
    const double a = q.col(j).dot(w);
    alpha.push_back(a);
    w -= a * q.col(j);
    if (j > 0) w -= beta.back() * q.col(j - 1);
    // Two passes of classical Gram-Schmidt against the whole basis.
    for (int pass = 0; pass < 2; ++pass) {
      const auto basis = q.leftCols(j + 1);
      w -= basis * (basis.transpose() * w);
    }
    scale = std::max(scale, std::abs(a) + (beta.empty() ? 0.0 : beta.back()));
    if (j + 1 == k) break;
    const double b = w.norm();
    if (b <= breakdown_tol * std::max(scale, 1e-300)) break;
    beta.push_back(b);
    q.col(j + 1) = w / b;
  }
  TridiagonalPair out;
  const auto rank = static_cast<Eigen::Index>(alpha.size());
  out.basis = q.leftCols(rank);
  out.alpha = Eigen::Map<Eigen::VectorXd>(alpha.data(), rank);
  out.beta = Eigen::VectorXd(rank - 1);
  for (Eigen::Index i = 0; i + 1 < rank; ++i) out.beta[i] = beta[static_cast<std::size_t>(i)];
  return out;
}

double slq_logdet(const LinearMap& apply_a, Eigen::Index dim, int num_probes, int steps,
                  std::uint64_t seed) {
  if (dim < 1 || num_probes < 1 || steps < 1) {
    throw InvalidArgument("slq_logdet: dim, num_probes and steps must be positive");
  }
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution coin(0.5);
  double total = 0.0;
  Eigen::VectorXd z(dim);
  for (int probe = 0; probe < num_probes; ++probe) {
    for (Eigen::Index i = 0; i < dim; ++i) z[i] = coin(rng) ? 1.0 : -1.0;
    const TridiagonalPair tri = lanczos(apply_a, z, std::min<Eigen::Index>(steps, dim));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(tri.tridiagonal());
    const Eigen::VectorXd& theta = eig.eigenvalues();
    if ((theta.array() <= 0.0).any()) {
      throw NotPsdError("slq_logdet: non-positive Ritz value, operator is not SPD");
    }
    const Eigen::VectorXd tau = eig.eigenvectors().row(0).transpose();
    total += static_cast<double>(dim) * (tau.array().square() * theta.array().log()).sum();
  }
  return total / num_probes;
}

}  // namespace wiski::linalg
