#include "wiski/linalg/root.hpp"

#include <cmath>
#include <random>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "wiski/error.hpp"

namespace wiski::linalg {
namespace {

LowRankRoot root_from_eigen(const Eigen::MatrixXd& basis, const Eigen::VectorXd& evals,
                            const Eigen::MatrixXd& evecs, const RootOptions& options,
                            Eigen::Index max_rank) {
  const double lambda_max = evals.maxCoeff();
  if (!(lambda_max > 0.0)) throw NotPsdError("root_decomposition: matrix has no positive spectrum");
  if (evals.minCoeff() < -options.psd_tolerance * lambda_max) {
    throw NotPsdError("root_decomposition: negative eigenvalue below tolerance");
  }
  // Keep the largest eigenvalues above the floor, at most max_rank of them.
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = evals.size() - 1; i >= 0; --i) {
    if (static_cast<Eigen::Index>(keep.size()) == max_rank) break;
    if (evals[i] >= options.eigen_floor * lambda_max) keep.push_back(i);
  }
  const auto r = static_cast<Eigen::Index>(keep.size());
  LowRankRoot root;
  root.L.resize(basis.rows(), r);
  root.J.resize(basis.rows(), r);
  for (Eigen::Index c = 0; c < r; ++c) {
    const Eigen::Index i = keep[static_cast<std::size_t>(c)];
    const Eigen::VectorXd direction = basis * evecs.col(i);
    const double s = std::sqrt(evals[i]);
    root.L.col(c) = direction * s;
    root.J.col(c) = direction / s;
  }
  return root;
}

LowRankRoot cholesky_root(const Eigen::MatrixXd& a, const RootOptions& options, bool* ok) {
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  *ok = llt.info() == Eigen::Success;
  LowRankRoot root;
  if (!*ok) return root;
  root.L = llt.matrixL();
  const double min_diag = root.L.diagonal().minCoeff();
  const double max_diag = root.L.diagonal().maxCoeff();
  // A numerically singular factor would make J explode; defer to the eigen path.
  if (!(min_diag > std::sqrt(options.eigen_floor) * max_diag)) {
    *ok = false;
    return root;
  }
  const Eigen::Index m = a.rows();
  root.J = root.L.transpose().triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(m, m));
  return root;
}

}  // namespace

LowRankRoot scaled_identity_root(Eigen::Index dim, double eps) {
  if (!(eps > 0.0)) throw InvalidArgument("scaled_identity_root: eps must be positive");
  LowRankRoot root;
  root.L = std::sqrt(eps) * Eigen::MatrixXd::Identity(dim, dim);
  root.J = (1.0 / std::sqrt(eps)) * Eigen::MatrixXd::Identity(dim, dim);
  return root;
}

LowRankRoot root_decomposition(const Eigen::MatrixXd& a, Eigen::Index rank,
                               const RootOptions& options) {
  const Eigen::Index m = a.rows();
  require_dims(a.cols() == m, "root_decomposition: matrix must be square");
  if (rank < 1 || rank > m) throw InvalidArgument("root_decomposition: rank must lie in [1, dim]");
  if (rank == m && m <= options.dense_max) {
    bool ok = false;
    LowRankRoot root = cholesky_root(a, options, &ok);
    if (ok) return root;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(a);
    return root_from_eigen(Eigen::MatrixXd::Identity(m, m), eig.eigenvalues(), eig.eigenvectors(),
                           options, rank);
  }
  return root_decomposition([&a](const Eigen::VectorXd& v) -> Eigen::VectorXd { return a * v; },
                            m, rank, options);
}

LowRankRoot root_decomposition(const LinearMap& apply_a, Eigen::Index dim, Eigen::Index rank,
                               const RootOptions& options) {
  if (rank < 1 || rank > dim) throw InvalidArgument("root_decomposition: rank must lie in [1, dim]");
  if (rank == dim && dim <= options.dense_max) {
    Eigen::MatrixXd a(dim, dim);
    Eigen::VectorXd e = Eigen::VectorXd::Zero(dim);
    for (Eigen::Index j = 0; j < dim; ++j) {
      e[j] = 1.0;
      a.col(j) = apply_a(e);
      e[j] = 0.0;
    }
    a = 0.5 * (a + a.transpose()).eval();
    return root_decomposition(a, rank, options);
  }
  std::mt19937_64 rng(options.probe_seed);
  std::normal_distribution<double> normal;
  Eigen::VectorXd probe(dim);
  for (Eigen::Index i = 0; i < dim; ++i) probe[i] = normal(rng);
  const TridiagonalPair tri = lanczos(apply_a, probe, rank);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(tri.tridiagonal());
  return root_from_eigen(tri.basis, eig.eigenvalues(), eig.eigenvectors(), options, rank);
}

void rank_update_inplace(LowRankRoot& root, const Eigen::MatrixXd& w) {
  require_dims(w.rows() == root.dim(), "rank_update: update rows do not match root dimension");
  if (w.cols() == 0 || root.rank() == 0) return;
  const Eigen::MatrixXd p = root.J.transpose() * w;
  if (p.cols() == 1) {
    const double s = p.norm();
    if (s == 0.0) return;
    const Eigen::VectorXd u = p / s;
    const double grow = std::sqrt(s * s + 1.0);
    const Eigen::VectorXd lu = root.L * u;
    const Eigen::VectorXd ju = root.J * u;
    root.L.noalias() += (grow - 1.0) * lu * u.transpose();
    root.J.noalias() += (1.0 / grow - 1.0) * ju * u.transpose();
    return;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(p, Eigen::ComputeThinU);
  const Eigen::VectorXd& s = svd.singularValues();
  const Eigen::MatrixXd& u = svd.matrixU();
  Eigen::VectorXd grow(s.size());
  Eigen::VectorXd shrink(s.size());
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    const double g = std::sqrt(s[i] * s[i] + 1.0);
    grow[i] = g - 1.0;
    shrink[i] = 1.0 / g - 1.0;
  }
  const Eigen::MatrixXd lu = root.L * u;
  const Eigen::MatrixXd ju = root.J * u;
  root.L.noalias() += lu * grow.asDiagonal() * u.transpose();
  root.J.noalias() += ju * shrink.asDiagonal() * u.transpose();
}

void rank_one_root_update_inplace(LowRankRoot& root, const Eigen::VectorXd& w) {
  rank_update_inplace(root, Eigen::MatrixXd(w));
}

LowRankRoot rank_update(const LowRankRoot& root, const Eigen::MatrixXd& w) {
  LowRankRoot out = root;
  rank_update_inplace(out, w);
  return out;
}

LowRankRoot rank_one_root_update(const LowRankRoot& root, const Eigen::VectorXd& w) {
  LowRankRoot out = root;
  rank_one_root_update_inplace(out, w);
  return out;
}

}  // namespace wiski::linalg
