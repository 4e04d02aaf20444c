#include "wiski/exact_gp.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <string>

#include "wiski/error.hpp"
#include "wiski/log.hpp"

namespace wiski {
namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

// Cholesky with the jitter ladder; returns the jitter used or throws.
double robust_cholesky(const Eigen::MatrixXd& a, Eigen::MatrixXd& lower, double start_jitter) {
  for (double jitter : kJitterLadder) {
    if (jitter < start_jitter) continue;
    Eigen::LLT<Eigen::MatrixXd> llt(a + jitter * Eigen::MatrixXd::Identity(a.rows(), a.cols()));
    if (llt.info() == Eigen::Success) {
      if (jitter > 0.0) {
        char msg[64];
        std::snprintf(msg, sizeof(msg), "Cholesky needed jitter %g", jitter);
        log_warning(msg);
      }
      lower = llt.matrixL();
      return jitter;
    }
  }
  throw NotPsdError("kernel matrix is not positive definite even with jitter 1e-4");
}

}  // namespace

ExactGp::ExactGp(KernelSpec spec, KernelParams params, NoiseMode mode, HyperPriors priors)
    : spec_(spec), params_(std::move(params)), mode_(mode), priors_(priors) {
  require_dims(params_.log_lengthscales.size() == spec_.dims, "ExactGp: one lengthscale per dimension");
  if (!params_.finite()) throw InvalidArgument("ExactGp: non-finite hyperparameters");
  X_.resize(0, spec_.dims);
}

ExactGp ExactGp::fit(KernelSpec spec, KernelParams params, const Eigen::Ref<const Eigen::MatrixXd>& X,
                     const Eigen::Ref<const Eigen::VectorXd>& y, HyperPriors priors) {
  require_dims(X.rows() == y.size(), "ExactGp::fit: X and y row counts differ");
  require_dims(X.cols() == spec.dims, "ExactGp::fit: input dimension mismatch");
  ExactGp gp(spec, std::move(params), NoiseMode::kHomoscedastic, priors);
  gp.X_ = X;
  gp.y_ = y;
  gp.noise_ = Eigen::VectorXd::Ones(y.size());
  gp.n_ = y.size();
  gp.refactor();
  return gp;
}

ExactGp ExactGp::fit_fixed_noise(KernelSpec spec, KernelParams params, const Eigen::Ref<const Eigen::MatrixXd>& X,
                                 const Eigen::Ref<const Eigen::VectorXd>& y,
                                 const Eigen::Ref<const Eigen::VectorXd>& noise, HyperPriors priors) {
  require_dims(X.rows() == y.size() && noise.size() == y.size(), "ExactGp::fit_fixed_noise: row counts differ");
  require_dims(X.cols() == spec.dims, "ExactGp::fit_fixed_noise: input dimension mismatch");
  if (noise.size() > 0 && !(noise.minCoeff() > 0.0)) throw InvalidArgument("ExactGp: noise must be positive");
  ExactGp gp(spec, std::move(params), NoiseMode::kFixed, priors);
  gp.X_ = X;
  gp.y_ = y;
  gp.noise_ = noise;
  gp.n_ = y.size();
  gp.refactor();
  return gp;
}

double ExactGp::noise_at(Eigen::Index i) const {
  return mode_ == NoiseMode::kFixed ? noise_[i] : params_.noise();
}

void ExactGp::reserve(Eigen::Index capacity) {
  if (capacity <= chol_.rows() && capacity <= X_.rows()) return;
  const Eigen::Index cap = std::max<Eigen::Index>(capacity, 2 * std::max<Eigen::Index>(chol_.rows(), 16));
  Eigen::MatrixXd chol = Eigen::MatrixXd::Zero(cap, cap);
  chol.topLeftCorner(n_, n_) = chol_.topLeftCorner(n_, n_);
  chol_ = std::move(chol);
  X_.conservativeResize(cap, spec_.dims);
  y_.conservativeResize(cap);
  noise_.conservativeResize(cap);
}

void ExactGp::refactor() {
  alpha_.reset();
  if (n_ == 0) {
    jitter_ = 0.0;
    return;
  }
  const Eigen::MatrixXd x = X_.topRows(n_);
  Eigen::MatrixXd k = kernel_matrix(spec_, params_, x, x);
  for (Eigen::Index i = 0; i < n_; ++i) k(i, i) += noise_at(i);
  Eigen::MatrixXd lower;
  jitter_ = robust_cholesky(k, lower, 0.0);
  if (chol_.rows() < n_) chol_ = Eigen::MatrixXd::Zero(n_, n_);
  chol_.topLeftCorner(n_, n_) = lower;
}

Eigen::MatrixXd ExactGp::cholesky() const { return chol_.topLeftCorner(n_, n_); }

void ExactGp::set_params(const KernelParams& params) {
  require_dims(params.log_lengthscales.size() == spec_.dims, "ExactGp::set_params: one lengthscale per dimension");
  if (!params.finite()) throw InvalidArgument("ExactGp::set_params: non-finite hyperparameters");
  params_ = params;
  refactor();
}

void ExactGp::set_target_transform(double offset, double scale) {
  if (!std::isfinite(offset) || !(scale > 0.0)) throw InvalidArgument("set_target_transform: bad offset or scale");
  offset_ = offset;
  scale_ = scale;
  alpha_.reset();
}

void ExactGp::append(const Eigen::Ref<const Eigen::VectorXd>& x, double y) {
  if (mode_ != NoiseMode::kHomoscedastic) throw InvalidState("ExactGp::append: fixed-noise model needs a noise value");
  append(x, y, 1.0);
}

void ExactGp::append(const Eigen::Ref<const Eigen::VectorXd>& x, double y, double noise_var) {
  require_dims(x.size() == spec_.dims, "ExactGp::append: input dimension mismatch");
  if (!std::isfinite(y) || !x.allFinite()) throw InvalidArgument("ExactGp::append: non-finite observation");
  if (!(noise_var > 0.0)) throw InvalidArgument("ExactGp::append: noise must be positive");
  reserve(n_ + 1);
  X_.row(n_) = x.transpose();
  y_[n_] = y;
  noise_[n_] = mode_ == NoiseMode::kFixed ? noise_var : 1.0;
  alpha_.reset();
  const Eigen::VectorXd kx =
      n_ > 0 ? Eigen::VectorXd(kernel_matrix(spec_, params_, X_.topRows(n_), x.transpose()).col(0)) : Eigen::VectorXd();
  const double kxx = params_.outputscale() + noise_at(n_) + jitter_;
  Eigen::VectorXd l = Eigen::VectorXd::Zero(n_);
  if (n_ > 0) l = chol_.topLeftCorner(n_, n_).triangularView<Eigen::Lower>().solve(kx);
  const double d2 = kxx - l.squaredNorm();
  ++n_;
  if (d2 > 0.0 && std::isfinite(d2)) {
    chol_.block(n_ - 1, 0, 1, n_ - 1) = l.transpose();
    chol_(n_ - 1, n_ - 1) = std::sqrt(d2);
    return;
  }
  refactor();
}

Eigen::VectorXd ExactGp::effective_targets() const { return (y_.head(n_).array() - offset_).matrix() / scale_; }

const Eigen::VectorXd& ExactGp::alpha() const {
  if (!alpha_) {
    const auto lower = chol_.topLeftCorner(n_, n_).triangularView<Eigen::Lower>();
    Eigen::VectorXd a = lower.solve(effective_targets());
    lower.transpose().solveInPlace(a);
    alpha_ = std::move(a);
  }
  return *alpha_;
}

double ExactGp::marginal_log_likelihood() const {
  if (n_ == 0) throw InvalidState("ExactGp::marginal_log_likelihood: no observations");
  const Eigen::VectorXd yt = effective_targets();
  const double logdet = 2.0 * chol_.topLeftCorner(n_, n_).diagonal().array().log().sum();
  return -0.5 * yt.dot(alpha()) - 0.5 * logdet - 0.5 * static_cast<double>(n_) * kLog2Pi;
}

double ExactGp::objective() const { return marginal_log_likelihood() + priors_.log_prob(params_); }

PosteriorGaussian ExactGp::predict(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  require_dims(x.size() == spec_.dims, "ExactGp::predict: input dimension mismatch");
  PosteriorGaussian out;
  out.noise = mode_ == NoiseMode::kHomoscedastic ? scale_ * scale_ * params_.noise() : 0.0;
  const double prior = params_.outputscale();
  if (n_ == 0) {
    out.mean = offset_;
    out.variance = scale_ * scale_ * prior;
    return out;
  }
  const Eigen::VectorXd kx = kernel_matrix(spec_, params_, X_.topRows(n_), x.transpose()).col(0);
  const Eigen::VectorXd v = chol_.topLeftCorner(n_, n_).triangularView<Eigen::Lower>().solve(kx);
  out.mean = offset_ + scale_ * kx.dot(alpha());
  out.variance = scale_ * scale_ * std::max(0.0, prior - v.squaredNorm());
  return out;
}

Eigen::MatrixXd ExactGp::posterior_covariance(const Eigen::Ref<const Eigen::MatrixXd>& Xa,
                                              const Eigen::Ref<const Eigen::MatrixXd>& Xb) const {
  Eigen::MatrixXd prior = kernel_matrix(spec_, params_, Xa, Xb);
  if (n_ > 0) {
    const auto lower = chol_.topLeftCorner(n_, n_).triangularView<Eigen::Lower>();
    const Eigen::MatrixXd va = lower.solve(kernel_matrix(spec_, params_, X_.topRows(n_), Xa));
    const Eigen::MatrixXd vb = lower.solve(kernel_matrix(spec_, params_, X_.topRows(n_), Xb));
    prior -= va.transpose() * vb;
  }
  return scale_ * scale_ * prior;
}

Eigen::VectorXd ExactGp::fantasy_variance(const Eigen::Ref<const Eigen::MatrixXd>& Xf,
                                          const Eigen::Ref<const Eigen::MatrixXd>& Xq, double fantasy_noise) const {
  ExactGp copy(*this);
  for (Eigen::Index i = 0; i < Xf.rows(); ++i) {
    if (mode_ == NoiseMode::kFixed) {
      copy.append(Xf.row(i).transpose(), 0.0, fantasy_noise);
    } else {
      copy.append(Xf.row(i).transpose(), 0.0);
    }
  }
  Eigen::VectorXd out(Xq.rows());
  for (Eigen::Index i = 0; i < Xq.rows(); ++i) out[i] = copy.predict(Xq.row(i).transpose()).variance;
  return out;
}

Eigen::VectorXd ExactGp::packed_params() const {
  const bool with_noise = mode_ == NoiseMode::kHomoscedastic && learn_noise_;
  Eigen::VectorXd theta(spec_.dims + 1 + (with_noise ? 1 : 0));
  theta.head(spec_.dims) = params_.log_lengthscales;
  theta[spec_.dims] = params_.log_outputscale;
  if (with_noise) theta[spec_.dims + 1] = params_.log_noise;
  return theta;
}

KernelParams ExactGp::unpack(const Eigen::Ref<const Eigen::VectorXd>& theta) const {
  const bool with_noise = mode_ == NoiseMode::kHomoscedastic && learn_noise_;
  require_dims(theta.size() == spec_.dims + 1 + (with_noise ? 1 : 0), "ExactGp::unpack: length mismatch");
  KernelParams p = params_;
  p.log_lengthscales = theta.head(spec_.dims);
  p.log_outputscale = theta[spec_.dims];
  if (with_noise) p.log_noise = theta[spec_.dims + 1];
  return p;
}

Eigen::VectorXd ExactGp::objective_gradient() const {
  if (n_ == 0) throw InvalidState("ExactGp::objective_gradient: no observations");
  const Eigen::MatrixXd x = X_.topRows(n_);
  const Eigen::MatrixXd kf = kernel_matrix(spec_, params_, x, x);
  const auto lower = chol_.topLeftCorner(n_, n_).triangularView<Eigen::Lower>();
  Eigen::MatrixXd kinv = lower.solve(Eigen::MatrixXd::Identity(n_, n_));
  kinv = lower.transpose().solve(kinv).eval();
  const Eigen::VectorXd& a = alpha();
  // d MLL = 0.5 * sum((a a^T - K^-1) .* dK)
  const Eigen::MatrixXd outer = a * a.transpose() - kinv;
  const Eigen::VectorXd theta = packed_params();
  Eigen::VectorXd grad(theta.size());
  for (int k = 0; k < spec_.dims; ++k) {
    const double inv = 1.0 / params_.lengthscale(k);
    double acc = 0.0;
    for (Eigen::Index j = 0; j < n_; ++j) {
      for (Eigen::Index i = 0; i < n_; ++i) {
        const double r = (x(i, k) - x(j, k)) * inv;
        const double factor = spec_.family == KernelFamily::kRbf ? r * r : std::abs(r);
        acc += outer(i, j) * kf(i, j) * factor;
      }
    }
    grad[k] = 0.5 * acc;
  }
  grad[spec_.dims] = 0.5 * (outer.array() * kf.array()).sum();
  if (theta.size() > spec_.dims + 1) grad[spec_.dims + 1] = 0.5 * params_.noise() * outer.trace();
  if (priors_.enabled) {
    const double eps = 1e-6;
    for (Eigen::Index i = 0; i <= spec_.dims; ++i) {
      Eigen::VectorXd tp = theta, tm = theta;
      tp[i] += eps;
      tm[i] -= eps;
      grad[i] += (priors_.log_prob(unpack(tp)) - priors_.log_prob(unpack(tm))) / (2.0 * eps);
    }
  }
  return grad;
}

HyperStepResult ExactGp::hyper_step(Adam& optimizer, double lr) {
  if (n_ < 2) throw InvalidState("ExactGp::hyper_step: needs at least two observations");
  HyperStepResult result;
  result.objective = objective();
  result.gradient = objective_gradient();
  if (!std::isfinite(result.objective) || !result.gradient.allFinite()) {
    result.skipped = true;
    log_warning("ExactGp::hyper_step: non-finite objective or gradient, step skipped");
    return result;
  }
  set_params(unpack(packed_params() + optimizer.ascent_step(result.gradient, lr)));
  return result;
}

DenseOracleResult dense_ski_oracle(const Grid& grid, const KernelSpec& spec, const KernelParams& params,
                                   const Eigen::Ref<const Eigen::MatrixXd>& X, const Eigen::Ref<const Eigen::VectorXd>& y,
                                   const Eigen::Ref<const Eigen::MatrixXd>& X_star, const DenseOracleOptions& options) {
  require_dims(X.rows() == y.size(), "dense_ski_oracle: X and y row counts differ");
  const bool fixed = options.noise.has_value();
  if (fixed) require_dims(options.noise->size() == y.size(), "dense_ski_oracle: one noise value per row");
  const Eigen::Index m = grid.size();
  const Eigen::Index n = X.rows();
  const Eigen::MatrixXd nodes = grid.nodes();
  const Eigen::MatrixXd kuu = kernel_matrix(spec, params, nodes, nodes);
  const double sigma2 = params.noise();
  const bool phantom = options.phantom_epsilon > 0.0;
  const Eigen::Index rows = n + (phantom ? m : 0);

  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(rows, m);
  w.topRows(n) = interp_matrix(grid, X);
  Eigen::VectorXd noise(rows);
  Eigen::VectorXd targets = Eigen::VectorXd::Zero(rows);
  targets.head(n) = y;
  for (Eigen::Index i = 0; i < n; ++i) noise[i] = fixed ? (*options.noise)[i] : sigma2;
  if (phantom) {
    const double phantom_noise = fixed ? 1.0 : sigma2;
    for (Eigen::Index i = 0; i < m; ++i) {
      w(n + i, i) = std::sqrt(options.phantom_epsilon);
      noise[n + i] = phantom_noise;
    }
  }
  Eigen::MatrixXd cov = w * kuu * w.transpose();
  cov.diagonal() += noise;
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) throw NotPsdError("dense_ski_oracle: SKI covariance not positive definite");
  const Eigen::VectorXd alpha = llt.solve(targets);
  const double logdet = 2.0 * Eigen::MatrixXd(llt.matrixL()).diagonal().array().log().sum();

  DenseOracleResult result;
  result.mll = -0.5 * targets.dot(alpha) - 0.5 * logdet - 0.5 * static_cast<double>(rows) * kLog2Pi;
  if (phantom) {
    const double phantom_noise = fixed ? 1.0 : sigma2;
    result.mll += 0.5 * static_cast<double>(m) * (std::log(phantom_noise) + kLog2Pi);
  }
  const Eigen::MatrixXd ws = interp_matrix(grid, X_star);
  const Eigen::MatrixXd cross = w * kuu * ws.transpose();  // rows x n_star
  const Eigen::MatrixXd solved = llt.matrixL().solve(cross);
  const Eigen::VectorXd prior = (ws * kuu * ws.transpose()).diagonal();
  for (Eigen::Index j = 0; j < X_star.rows(); ++j) {
    PosteriorGaussian p;
    p.mean = cross.col(j).dot(alpha);
    p.variance = std::max(0.0, prior[j] - solved.col(j).squaredNorm());
    p.noise = fixed ? 0.0 : sigma2;
    result.predictions.push_back(p);
  }
  return result;
}

}  // namespace wiski
