#include "wiski/wiski_model.hpp"

#include <cmath>
#include <limits>

#include "wiski/error.hpp"
#include "wiski/linalg/krylov.hpp"
#include "wiski/log.hpp"

namespace wiski {
namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

Eigen::Index resolve_rank(const ModelOptions& options, Eigen::Index m) {
  const Eigen::Index r = options.rank > 0 ? options.rank : default_rank(m);
  if (r > m) throw InvalidArgument("ModelOptions::rank exceeds the number of inducing points");
  return r;
}

// Gathers rows of a dense matrix by sparse weights: returns A^T w (length A.cols()).
Eigen::VectorXd gather_rows(const Eigen::MatrixXd& a, const SparseWeights& w) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(a.cols());
  for (std::size_t k = 0; k < w.nnz(); ++k) out.noalias() += w.values[k] * a.row(w.indices[k]).transpose();
  return out;
}

// Combines columns of a dense matrix by sparse weights: returns A w (length A.rows()).
Eigen::VectorXd gather_cols(const Eigen::MatrixXd& a, const SparseWeights& w) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(a.rows());
  for (std::size_t k = 0; k < w.nnz(); ++k) out.noalias() += w.values[k] * a.col(w.indices[k]);
  return out;
}

bool factor_q(const Eigen::MatrixXd& q, QFactor& out) {
  out.chol.compute(q);
  if (out.chol.info() == Eigen::Success) {
    out.jitter = 0.0;
    return true;
  }
  const double jitter = 1e-8 * std::max(1.0, q.diagonal().cwiseAbs().maxCoeff());
  out.chol.compute(q + jitter * Eigen::MatrixXd::Identity(q.rows(), q.cols()));
  out.jitter = jitter;
  return out.chol.info() == Eigen::Success;
}

double chol_logdet(const Eigen::LLT<Eigen::MatrixXd>& chol) {
  return 2.0 * chol.matrixLLT().diagonal().array().log().sum();
}

}  // namespace

Eigen::Index default_rank(Eigen::Index m) { return m <= 1024 ? m : m / 2; }

Eigen::VectorXd QFactor::solve(const Eigen::VectorXd& a) const {
  if (mode == QSolve::kDense) return chol.solve(a);
  const Eigen::MatrixXd& l = l_copy;
  const double inv_s2 = 1.0 / sigma2;
  const Eigen::MatrixXd& k_l = kl;
  linalg::LinearMap apply = [&](const Eigen::VectorXd& v) -> Eigen::VectorXd {
    return v + inv_s2 * (l.transpose() * (k_l * v));
  };
  return linalg::conjugate_gradients(apply, a, cg_tol, cg_steps).x;
}

Eigen::MatrixXd QFactor::half_solve(const Eigen::MatrixXd& a) const {
  if (mode != QSolve::kDense) throw InvalidState("QFactor::half_solve requires the dense path");
  return chol.matrixL().solve(a);
}

struct WiskiModel::KernelParts {
  Eigen::MatrixXd g1;  // L^T K1 L with unit outputscale
  Eigen::VectorXd u1;  // (K1 L)^T b
  double beta1 = 0.0;  // b^T K1 b
};

WiskiModel::WiskiModel(Grid grid, KernelSpec spec, KernelParams params, ModelOptions options, NoiseMode mode)
    : grid_(std::move(grid)), spec_(spec), params_(std::move(params)), options_(options), mode_(mode) {
  require_dims(spec_.dims == grid_.dims(), "WiskiModel: kernel dimension must match grid dimension");
  require_dims(params_.log_lengthscales.size() == spec_.dims, "WiskiModel: one lengthscale per dimension");
  if (!params_.finite()) throw InvalidArgument("WiskiModel: non-finite hyperparameters");
  if (!(options_.root_epsilon > 0.0)) throw InvalidArgument("WiskiModel: root_epsilon must be positive");
  const Eigen::Index m = grid_.size();
  const Eigen::Index r = resolve_rank(options_, m);
  if (r < m) {
    throw InvalidArgument("WiskiModel: a reduced-rank root needs an initial batch; use WiskiModel::init");
  }
  caches_.wty = Eigen::VectorXd::Zero(m);
  caches_.wt1 = Eigen::VectorXd::Zero(m);
  caches_.root = linalg::scaled_identity_root(m, options_.root_epsilon);
}

WiskiModel::WiskiModel(const WiskiModel& other)
    : grid_(other.grid_),
      spec_(other.spec_),
      params_(other.params_),
      options_(other.options_),
      mode_(other.mode_),
      caches_(other.caches_),
      projection_(other.projection_),
      offset_(other.offset_),
      scale_(other.scale_) {
  std::lock_guard<std::mutex> lock(other.q_mutex_);
  q_ = other.q_;
}

WiskiModel& WiskiModel::operator=(const WiskiModel& other) {
  if (this == &other) return *this;
  WiskiModel copy(other);
  *this = std::move(copy);
  return *this;
}

WiskiModel::WiskiModel(WiskiModel&& other) noexcept
    : grid_(std::move(other.grid_)),
      spec_(other.spec_),
      params_(std::move(other.params_)),
      options_(std::move(other.options_)),
      mode_(other.mode_),
      caches_(std::move(other.caches_)),
      projection_(std::move(other.projection_)),
      offset_(other.offset_),
      scale_(other.scale_),
      q_(std::move(other.q_)) {}

WiskiModel& WiskiModel::operator=(WiskiModel&& other) noexcept {
  if (this == &other) return *this;
  grid_ = std::move(other.grid_);
  spec_ = other.spec_;
  params_ = std::move(other.params_);
  options_ = std::move(other.options_);
  mode_ = other.mode_;
  caches_ = std::move(other.caches_);
  projection_ = std::move(other.projection_);
  offset_ = other.offset_;
  scale_ = other.scale_;
  std::lock_guard<std::mutex> lock(q_mutex_);
  q_ = std::move(other.q_);
  return *this;
}

namespace {

WiskiModel batch_init(Grid grid, KernelSpec spec, KernelParams params, const Eigen::Ref<const Eigen::MatrixXd>& X0,
                      const Eigen::Ref<const Eigen::VectorXd>& y0, const Eigen::VectorXd* noise0,
                      ModelOptions options, std::optional<ProjectionMap> projection) {
  require_dims(X0.rows() == y0.size(), "init: X0 and y0 must have the same number of rows");
  if (noise0 != nullptr) require_dims(noise0->size() == y0.size(), "init: one noise value per observation");
  const Eigen::Index m = grid.size();
  const Eigen::Index r = resolve_rank(options, m);
  WiskiCaches caches;
  caches.wty = Eigen::VectorXd::Zero(m);
  caches.wt1 = Eigen::VectorXd::Zero(m);
  const NoiseMode mode = noise0 != nullptr ? NoiseMode::kFixed : NoiseMode::kHomoscedastic;

  // A throwaway model holds the projection and weight logic.
  ModelOptions probe_options = options;
  probe_options.rank = m;
  WiskiModel probe(grid, spec, params, probe_options, mode);
  probe.set_projection(projection);
  if (X0.rows() > 0) require_dims(X0.cols() == probe.input_dims(), "init: input dimension mismatch");

  if (X0.rows() == 0) {
    if (r < m) throw InvalidArgument("init: a reduced-rank root needs a non-empty initial batch");
    caches.root = linalg::scaled_identity_root(m, options.root_epsilon);
  } else {
    Eigen::MatrixXd gram = options.root_epsilon * Eigen::MatrixXd::Identity(m, m);
    for (Eigen::Index i = 0; i < X0.rows(); ++i) {
      const double v = noise0 != nullptr ? (*noise0)[i] : 1.0;
      if (!(v > 0.0) || !std::isfinite(v)) throw InvalidArgument("init: noise variances must be positive");
      if (!std::isfinite(y0[i])) throw InvalidArgument("init: non-finite target");
      const SparseWeights w = probe.weights(X0.row(i).transpose());
      const double inv = 1.0 / v;
      scatter_add(caches.wty, w, y0[i] * inv);
      scatter_add(caches.wt1, w, inv);
      scatter_outer_add(gram, w, inv);
      caches.yty += y0[i] * y0[i] * inv;
      caches.y_sum += y0[i] * inv;
      caches.inv_noise_sum += inv;
      caches.log_noise_sum += std::log(v);
    }
    caches.root = linalg::root_decomposition(gram, r);
  }
  caches.n = X0.rows();
  return WiskiModel::from_caches(std::move(grid), spec, std::move(params), mode, std::move(caches), options,
                                 std::move(projection));
}

}  // namespace

WiskiModel WiskiModel::init(Grid grid, KernelSpec spec, KernelParams params,
                            const Eigen::Ref<const Eigen::MatrixXd>& X0, const Eigen::Ref<const Eigen::VectorXd>& y0,
                            ModelOptions options, std::optional<ProjectionMap> projection) {
  return batch_init(std::move(grid), spec, std::move(params), X0, y0, nullptr, options, std::move(projection));
}

WiskiModel WiskiModel::init_fixed_noise(Grid grid, KernelSpec spec, KernelParams params,
                                        const Eigen::Ref<const Eigen::MatrixXd>& X0,
                                        const Eigen::Ref<const Eigen::VectorXd>& y0,
                                        const Eigen::Ref<const Eigen::VectorXd>& noise0, ModelOptions options,
                                        std::optional<ProjectionMap> projection) {
  const Eigen::VectorXd noise = noise0;
  return batch_init(std::move(grid), spec, std::move(params), X0, y0, &noise, options, std::move(projection));
}

WiskiModel WiskiModel::from_caches(Grid grid, KernelSpec spec, KernelParams params, NoiseMode mode,
                                   WiskiCaches caches, ModelOptions options,
                                   std::optional<ProjectionMap> projection) {
  const Eigen::Index m = grid.size();
  require_dims(caches.wty.size() == m && caches.wt1.size() == m, "from_caches: cache vectors must have length m");
  require_dims(caches.root.L.rows() == m && caches.root.J.rows() == m && caches.root.L.cols() == caches.root.J.cols(),
               "from_caches: root factors must be m x r");
  if (caches.n < 0) throw InvalidArgument("from_caches: negative observation count");
  ModelOptions full = options;
  full.rank = m;
  WiskiModel model(std::move(grid), spec, std::move(params), full, mode);
  model.options_ = options;
  model.options_.rank = caches.root.rank();
  model.caches_ = std::move(caches);
  model.set_projection(std::move(projection));
  return model;
}

Eigen::Index WiskiModel::input_dims() const {
  return projection_ ? projection_->in_dims() : static_cast<Eigen::Index>(grid_.dims());
}

double WiskiModel::sigma2_of(const KernelParams& params) const {
  return mode_ == NoiseMode::kFixed ? 1.0 : params.noise();
}

double WiskiModel::sigma2() const { return sigma2_of(params_); }

void WiskiModel::invalidate() {
  std::lock_guard<std::mutex> lock(q_mutex_);
  q_.reset();
}

void WiskiModel::set_params(const KernelParams& params) {
  require_dims(params.log_lengthscales.size() == spec_.dims, "set_params: one lengthscale per dimension");
  if (!params.finite()) throw InvalidArgument("set_params: non-finite hyperparameters");
  params_ = params;
  invalidate();
}

void WiskiModel::set_projection(std::optional<ProjectionMap> projection) {
  if (projection) {
    require_dims(projection->out_dims() == grid_.dims(), "set_projection: output dimension must equal grid dimension");
    require_dims(projection->bias.size() == projection->out_dims(), "set_projection: bias length mismatch");
  }
  projection_ = std::move(projection);
}

void WiskiModel::set_options(const ModelOptions& options) {
  ModelOptions next = options;
  next.rank = caches_.root.rank();
  options_ = next;
  invalidate();
}

void WiskiModel::set_target_transform(double offset, double scale) {
  if (!std::isfinite(offset) || !(scale > 0.0) || !std::isfinite(scale)) {
    throw InvalidArgument("set_target_transform: need finite offset and positive scale");
  }
  offset_ = offset;
  scale_ = scale;
  invalidate();
}

Eigen::VectorXd WiskiModel::features(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  require_dims(x.size() == input_dims(), "WiskiModel: input dimension mismatch");
  if (projection_) return projection_->apply(x);
  return x;
}

SparseWeights WiskiModel::weights(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  return interp_weights(grid_, features(x));
}

void WiskiModel::add_observation(const SparseWeights& w, double y, double noise_var) {
  if (!std::isfinite(y)) throw InvalidArgument("condition: non-finite target");
  const double inv = 1.0 / noise_var;
  scatter_add(caches_.wty, w, y * inv);
  scatter_add(caches_.wt1, w, inv);
  caches_.yty += y * y * inv;
  caches_.y_sum += y * inv;
  caches_.inv_noise_sum += inv;
  caches_.log_noise_sum += std::log(noise_var);
  linalg::rank_one_root_update_inplace(caches_.root, std::sqrt(inv) * w.to_dense(grid_.size()));
  ++caches_.n;
  invalidate();
}

void WiskiModel::condition(const Eigen::Ref<const Eigen::VectorXd>& x, double y) {
  if (mode_ != NoiseMode::kHomoscedastic) {
    throw InvalidState("condition: fixed-noise models need an observation noise");
  }
  add_observation(weights(x), y, 1.0);
}

void WiskiModel::condition(const Eigen::Ref<const Eigen::VectorXd>& x, double y, double noise_var) {
  if (mode_ != NoiseMode::kFixed) throw InvalidState("condition: observation noise given to a homoscedastic model");
  if (!(noise_var > 0.0) || !std::isfinite(noise_var)) {
    throw InvalidArgument("condition: noise variance must be positive");
  }
  add_observation(weights(x), y, noise_var);
}

void WiskiModel::condition_weights(const SparseWeights& w, double y, double noise_var) {
  if (!(noise_var > 0.0)) throw InvalidArgument("condition_weights: noise variance must be positive");
  if (mode_ == NoiseMode::kHomoscedastic && noise_var != 1.0) {
    throw InvalidState("condition_weights: homoscedastic models take unit weighting");
  }
  for (auto idx : w.indices) {
    if (idx < 0 || idx >= grid_.size()) throw std::out_of_range("condition_weights: index outside grid");
  }
  add_observation(w, y, noise_var);
}

linalg::KroneckerToeplitzOperator WiskiModel::kuu() const {
  return kuu_operator(spec_, params_, grid_, options_.toeplitz_path);
}

Eigen::VectorXd WiskiModel::effective_wty() const {
  return (caches_.wty - offset_ * caches_.wt1) / scale_;
}

double WiskiModel::effective_yty() const {
  return (caches_.yty - 2.0 * offset_ * caches_.y_sum + offset_ * offset_ * caches_.inv_noise_sum) /
         (scale_ * scale_);
}

std::shared_ptr<QFactor> WiskiModel::build_q_factor(const KernelParams& params, const linalg::LowRankRoot& root,
                                                    bool with_mean) const {
  auto qf = std::make_shared<QFactor>();
  qf->kuu.emplace(kuu_operator(spec_, params, grid_, options_.toeplitz_path));
  const auto& k = *qf->kuu;
  const double s2 = sigma2_of(params);
  qf->sigma2 = s2;
  qf->mode = options_.q_solve;
  qf->kl = k.apply_columns(root.L);
  qf->klt = qf->kl.transpose();
  const Eigen::Index r = root.rank();
  if (options_.q_solve == QSolve::kDense) {
    Eigen::MatrixXd q = root.L.transpose() * qf->kl;
    q = 0.5 * (q + q.transpose()).eval();
    q /= s2;
    q.diagonal().array() += 1.0;
    if (!factor_q(q, *qf)) throw NotPsdError("Q = I + L^T K L / sigma^2 is not positive definite");
    qf->logdet = chol_logdet(qf->chol);
  } else {
    qf->l_copy = root.L;
    qf->cg_steps = options_.cg_steps;
    qf->cg_tol = options_.cg_tol;
    const Eigen::MatrixXd& l = qf->l_copy;
    const Eigen::MatrixXd& kl = qf->kl;
    linalg::LinearMap apply = [&](const Eigen::VectorXd& v) -> Eigen::VectorXd {
      return v + (l.transpose() * (kl * v)) / s2;
    };
    qf->logdet = linalg::slq_logdet(apply, r, options_.slq_probes, std::min<int>(options_.cg_steps, static_cast<int>(r)),
                                    0x51a9);
  }
  if (with_mean) {
    const Eigen::VectorXd b = effective_wty();
    const Eigen::VectorXd a = qf->kl.transpose() * b;
    qf->mb = (k.apply(b) - qf->kl * qf->solve(a) / s2) / s2;
  }
  return qf;
}

std::shared_ptr<const QFactor> WiskiModel::q_factor() const {
  std::lock_guard<std::mutex> lock(q_mutex_);
  if (!q_) q_ = build_q_factor(params_, caches_.root, true);
  return q_;
}

void WiskiModel::prepare() const { (void)q_factor(); }

Eigen::VectorXd WiskiModel::apply_m(const Eigen::Ref<const Eigen::VectorXd>& v) const {
  require_dims(v.size() == grid_.size(), "apply_m: vector length must equal m");
  const auto qf = q_factor();
  const double s2 = qf->sigma2;
  const Eigen::VectorXd a = qf->kl.transpose() * v;
  return (qf->kuu->apply(v) - qf->kl * qf->solve(a) / s2) / s2;
}

double WiskiModel::marginal_log_likelihood() const {
  if (caches_.n == 0) throw InvalidState("marginal_log_likelihood: no observations");
  const auto qf = q_factor();
  const double s2 = qf->sigma2;
  const double n = static_cast<double>(caches_.n);
  const double quad = effective_yty() - effective_wty().dot(qf->mb);
  return -0.5 * quad / s2 - 0.5 * (qf->logdet + n * std::log(s2) + caches_.log_noise_sum) - 0.5 * n * kLog2Pi;
}

double WiskiModel::objective() const { return marginal_log_likelihood() + options_.priors.log_prob(params_); }

// w^T K_UU w factorizes over axes because both w and K_UU are Kronecker products.
double WiskiModel::prior_variance(const std::vector<AxisWeights>& axes, const linalg::KroneckerToeplitzOperator& k) {
  double acc = 1.0;
  for (std::size_t d = 0; d < axes.size(); ++d) {
    const AxisWeights& a = axes[d];
    const linalg::ToeplitzOperator& t = k.factors()[d];
    double quad = 0.0;
    for (int i = 0; i < a.count; ++i) {
      double row = 0.0;
      for (int j = 0; j < a.count; ++j) row += a.value[static_cast<std::size_t>(j)] * t.entry(a.index[static_cast<std::size_t>(i)], a.index[static_cast<std::size_t>(j)]);
      quad += a.value[static_cast<std::size_t>(i)] * row;
    }
    acc *= quad;
  }
  return acc;
}

double WiskiModel::latent_variance(const QFactor& qf, const std::vector<AxisWeights>& axes,
                                   const SparseWeights& w) const {
  const Eigen::VectorXd u = gather_cols(qf.klt, w);
  double correction = 0.0;
  if (qf.mode == QSolve::kDense) {
    correction = qf.chol.matrixL().solve(u).squaredNorm();
  } else {
    correction = u.dot(qf.solve(u));
  }
  return std::max(0.0, prior_variance(axes, *qf.kuu) - correction / qf.sigma2);
}

Eigen::VectorXd WiskiModel::latent_variances(const QFactor& qf, const Eigen::Ref<const Eigen::MatrixXd>& X) const {
  const Eigen::Index n = X.rows();
  Eigen::VectorXd prior(n);
  Eigen::MatrixXd u(qf.klt.rows(), n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto axes = axis_weights(grid_, features(X.row(i).transpose()));
    prior[i] = prior_variance(axes, *qf.kuu);
    u.col(i) = gather_cols(qf.klt, tensor_weights(grid_, axes));
  }
  Eigen::VectorXd correction(n);
  if (qf.mode == QSolve::kDense) {
    correction = qf.half_solve(u).colwise().squaredNorm().transpose();
  } else {
    for (Eigen::Index i = 0; i < n; ++i) correction[i] = u.col(i).dot(qf.solve(u.col(i)));
  }
  return (prior - correction / qf.sigma2).cwiseMax(0.0);
}

PosteriorGaussian WiskiModel::predict(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  const auto qf = q_factor();
  const auto axes = axis_weights(grid_, features(x));
  const SparseWeights w = tensor_weights(grid_, axes);
  PosteriorGaussian out;
  out.mean = offset_ + scale_ * weights_dot(w, qf->mb);
  out.variance = scale_ * scale_ * latent_variance(*qf, axes, w);
  out.noise = mode_ == NoiseMode::kHomoscedastic ? scale_ * scale_ * qf->sigma2 : 0.0;
  return out;
}

std::vector<PosteriorGaussian> WiskiModel::predict_batch(const Eigen::Ref<const Eigen::MatrixXd>& X) const {
  std::vector<PosteriorGaussian> out;
  out.reserve(static_cast<std::size_t>(X.rows()));
  for (Eigen::Index i = 0; i < X.rows(); ++i) out.push_back(predict(X.row(i).transpose()));
  return out;
}

Eigen::MatrixXd WiskiModel::posterior_covariance(const Eigen::Ref<const Eigen::MatrixXd>& Xa,
                                                 const Eigen::Ref<const Eigen::MatrixXd>& Xb) const {
  const auto qf = q_factor();
  const Eigen::Index m = grid_.size();
  std::vector<SparseWeights> wa;
  wa.reserve(static_cast<std::size_t>(Xa.rows()));
  for (Eigen::Index i = 0; i < Xa.rows(); ++i) wa.push_back(weights(Xa.row(i).transpose()));
  Eigen::MatrixXd wb_dense = Eigen::MatrixXd::Zero(m, Xb.rows());
  Eigen::MatrixXd ub(qf->kl.cols(), Xb.rows());
  for (Eigen::Index j = 0; j < Xb.rows(); ++j) {
    const SparseWeights w = weights(Xb.row(j).transpose());
    for (std::size_t k = 0; k < w.nnz(); ++k) wb_dense(w.indices[k], j) += w.values[k];
    ub.col(j) = gather_cols(qf->klt, w);
  }
  const Eigen::MatrixXd kwb = qf->kuu->apply_columns(wb_dense);
  Eigen::MatrixXd ua(qf->kl.cols(), Xa.rows());
  Eigen::MatrixXd prior(Xa.rows(), Xb.rows());
  for (Eigen::Index i = 0; i < Xa.rows(); ++i) {
    const SparseWeights& w = wa[static_cast<std::size_t>(i)];
    ua.col(i) = gather_cols(qf->klt, w);
    prior.row(i) = gather_rows(kwb, w).transpose();
  }
  Eigen::MatrixXd correction;
  if (qf->mode == QSolve::kDense) {
    correction = qf->half_solve(ua).transpose() * qf->half_solve(ub);
  } else {
    Eigen::MatrixXd solved(ub.rows(), ub.cols());
    for (Eigen::Index j = 0; j < ub.cols(); ++j) solved.col(j) = qf->solve(ub.col(j));
    correction = ua.transpose() * solved;
  }
  return scale_ * scale_ * (prior - correction / qf->sigma2);
}

Eigen::VectorXd WiskiModel::fantasy_variance(const Eigen::Ref<const Eigen::MatrixXd>& Xf,
                                             const Eigen::Ref<const Eigen::MatrixXd>& Xq, double fantasy_noise) const {
  std::shared_ptr<const QFactor> qf;
  if (Xf.rows() == 0) {
    qf = q_factor();
  } else {
    double weight = 1.0;
    if (mode_ == NoiseMode::kFixed) {
      if (!(fantasy_noise > 0.0)) throw InvalidArgument("fantasy_variance: fixed-noise fantasies need a positive noise");
      weight = 1.0 / std::sqrt(fantasy_noise);
    }
    Eigen::MatrixXd wf = Eigen::MatrixXd::Zero(grid_.size(), Xf.rows());
    for (Eigen::Index j = 0; j < Xf.rows(); ++j) {
      const SparseWeights w = weights(Xf.row(j).transpose());
      for (std::size_t k = 0; k < w.nnz(); ++k) wf(w.indices[k], j) += weight * w.values[k];
    }
    const linalg::LowRankRoot root = linalg::rank_update(caches_.root, wf);
    qf = build_q_factor(params_, root, false);
  }
  return scale_ * scale_ * latent_variances(*qf, Xq);
}

Eigen::VectorXd WiskiModel::packed_params() const {
  const bool with_noise = mode_ == NoiseMode::kHomoscedastic && options_.learn_noise;
  Eigen::VectorXd theta(spec_.dims + 1 + (with_noise ? 1 : 0));
  theta.head(spec_.dims) = params_.log_lengthscales;
  theta[spec_.dims] = params_.log_outputscale;
  if (with_noise) theta[spec_.dims + 1] = params_.log_noise;
  return theta;
}

KernelParams WiskiModel::unpack(const Eigen::Ref<const Eigen::VectorXd>& theta) const {
  const bool with_noise = mode_ == NoiseMode::kHomoscedastic && options_.learn_noise;
  require_dims(theta.size() == spec_.dims + 1 + (with_noise ? 1 : 0), "unpack: parameter vector length mismatch");
  KernelParams p = params_;
  p.log_lengthscales = theta.head(spec_.dims);
  p.log_outputscale = theta[spec_.dims];
  if (with_noise) p.log_noise = theta[spec_.dims + 1];
  return p;
}

WiskiModel::KernelParts WiskiModel::kernel_parts(const KernelParams& params) const {
  KernelParams unit = params;
  unit.log_outputscale = 0.0;
  const auto k1 = kuu_operator(spec_, unit, grid_, options_.toeplitz_path);
  const Eigen::MatrixXd kl1 = k1.apply_columns(caches_.root.L);
  const Eigen::VectorXd b = effective_wty();
  KernelParts parts;
  parts.g1 = caches_.root.L.transpose() * kl1;
  parts.g1 = 0.5 * (parts.g1 + parts.g1.transpose()).eval();
  parts.u1 = kl1.transpose() * b;
  parts.beta1 = b.dot(k1.apply(b));
  return parts;
}

double WiskiModel::objective_from_parts(const KernelParts& parts, double log_outputscale, double sigma2,
                                        const KernelParams& params) const {
  const double s = std::exp(log_outputscale);
  const double ratio = s / sigma2;
  Eigen::MatrixXd q = ratio * parts.g1;
  q.diagonal().array() += 1.0;
  QFactor qf;
  if (!factor_q(q, qf)) return std::numeric_limits<double>::quiet_NaN();
  const double n = static_cast<double>(caches_.n);
  // b^T M b with K = s K1.
  const double btmb = ratio * parts.beta1 - ratio * ratio * parts.u1.dot(qf.chol.solve(parts.u1));
  const double mll = -0.5 * (effective_yty() - btmb) / sigma2 -
                     0.5 * (chol_logdet(qf.chol) + n * std::log(sigma2) + caches_.log_noise_sum) - 0.5 * n * kLog2Pi;
  KernelParams with_s = params;
  with_s.log_outputscale = log_outputscale;
  return mll + options_.priors.log_prob(with_s);
}

double WiskiModel::objective_at(const KernelParams& params) const {
  if (caches_.n == 0) throw InvalidState("objective_at: no observations");
  if (options_.q_solve == QSolve::kDense) {
    return objective_from_parts(kernel_parts(params), params.log_outputscale, sigma2_of(params), params);
  }
  WiskiModel probe(*this);
  probe.set_params(params);
  return probe.objective();
}

Eigen::VectorXd WiskiModel::objective_gradient() const {
  if (caches_.n == 0) throw InvalidState("objective_gradient: no observations");
  const Eigen::VectorXd theta = packed_params();
  const double h = options_.fd_step;
  Eigen::VectorXd grad(theta.size());
  if (options_.q_solve != QSolve::kDense) {
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
      Eigen::VectorXd tp = theta, tm = theta;
      tp[i] += h;
      tm[i] -= h;
      grad[i] = (objective_at(unpack(tp)) - objective_at(unpack(tm))) / (2.0 * h);
    }
    return grad;
  }
  return gradient_from_center(kernel_parts(params_));
}

Eigen::VectorXd WiskiModel::gradient_from_center(const KernelParts& center) const {
  const Eigen::VectorXd theta = packed_params();
  const double h = options_.fd_step;
  Eigen::VectorXd grad(theta.size());
  const int d = spec_.dims;
  for (int i = 0; i < d; ++i) {
    Eigen::VectorXd tp = theta, tm = theta;
    tp[i] += h;
    tm[i] -= h;
    grad[i] = (objective_at(unpack(tp)) - objective_at(unpack(tm))) / (2.0 * h);
  }
  // Outputscale and noise only rescale L^T K L, so they share one set of parts.
  const double ls = params_.log_outputscale;
  const double s2 = sigma2();
  grad[d] = (objective_from_parts(center, ls + h, s2, params_) - objective_from_parts(center, ls - h, s2, params_)) /
            (2.0 * h);
  if (theta.size() > d + 1) {
    const double ln = params_.log_noise;
    grad[d + 1] = (objective_from_parts(center, ls, std::exp(ln + h), params_) -
                   objective_from_parts(center, ls, std::exp(ln - h), params_)) /
                  (2.0 * h);
  }
  return grad;
}

void WiskiModel::require_trainable() const {
  if (caches_.n < 2) throw InvalidState("hyper_step: needs at least two observations");
}

HyperStepResult WiskiModel::hyper_step(Adam& optimizer, double lr) {
  require_trainable();
  HyperStepResult result;
  if (options_.q_solve == QSolve::kDense) {
    const KernelParts center = kernel_parts(params_);
    result.objective = objective_from_parts(center, params_.log_outputscale, sigma2(), params_);
    result.gradient = gradient_from_center(center);
  } else {
    result.objective = objective();
    result.gradient = objective_gradient();
  }
  if (!std::isfinite(result.objective) || !result.gradient.allFinite()) {
    result.skipped = true;
    log_warning("hyper_step: non-finite objective or gradient, step skipped");
    return result;
  }
  const Eigen::VectorXd theta = packed_params() + optimizer.ascent_step(result.gradient, lr);
  set_params(unpack(theta));
  return result;
}

double WiskiModel::partial_objective(const SparseWeights& w, double y) const {
  const auto qf = q_factor();
  const Eigen::VectorXd mw = apply_m(w.to_dense(grid_.size()));
  const Eigen::VectorXd b0 = effective_wty();
  const double gamma = 1.0 + weights_dot(w, mw);
  if (!(gamma > 0.0)) throw NumericalError("partial_objective: 1 + v^T w is not positive");
  const double b0mb0 = b0.dot(qf->mb);
  const double wmb0 = weights_dot(w, qf->mb);
  const double wmw = gamma - 1.0;
  const double btmb = b0mb0 + 2.0 * y * wmb0 + y * y * wmw;
  const double alpha = wmb0 + y * wmw;
  return 0.5 * (btmb - alpha * alpha / gamma) / qf->sigma2 - 0.5 * std::log(gamma);
}

Eigen::VectorXd WiskiModel::partial_objective_grad(const SparseWeights& w, double y) const {
  const auto qf = q_factor();
  const Eigen::VectorXd v = apply_m(w.to_dense(grid_.size()));
  const double gamma = 1.0 + weights_dot(w, v);
  if (!(gamma > 0.0)) throw NumericalError("partial_objective_grad: 1 + v^T w is not positive");
  const Eigen::VectorXd mb = qf->mb + y * v;
  const double alpha = weights_dot(w, mb);
  const Eigen::VectorXd quad =
      2.0 * y * mb - 2.0 * (alpha / gamma) * (mb + y * v) + 2.0 * (alpha * alpha / (gamma * gamma)) * v;
  return 0.5 * quad / qf->sigma2 - v / gamma;
}

ProjectionGradient WiskiModel::projection_grad(const Eigen::Ref<const Eigen::VectorXd>& x, double y,
                                               double noise_var) const {
  if (!projection_) throw InvalidState("projection_grad: model has no projection");
  double weight = 1.0;
  if (mode_ == NoiseMode::kFixed) {
    if (!(noise_var > 0.0)) throw InvalidArgument("projection_grad: fixed-noise models need a positive noise");
    weight = 1.0 / std::sqrt(noise_var);
  }
  const double y_model = weight * (y - offset_) / scale_;
  auto scaled = [&](SparseWeights w) {
    for (double& v : w.values) v *= weight;
    return w;
  };
  const SparseWeights w = scaled(weights(x));
  ProjectionGradient out;
  out.grad_w = partial_objective_grad(w, y_model);
  out.objective = partial_objective(w, y_model);
  out.gamma = 1.0 + weights_dot(w, apply_m(w.to_dense(grid_.size())));
  const Eigen::VectorXd phi = projection_->params();
  out.grad_phi.resize(phi.size());
  const double h = options_.projection_fd_step;
  ProjectionMap probe = *projection_;
  for (Eigen::Index k = 0; k < phi.size(); ++k) {
    Eigen::VectorXd pp = phi, pm = phi;
    pp[k] += h;
    pm[k] -= h;
    probe.set_params(pp);
    const SparseWeights wp = scaled(interp_weights(grid_, probe.apply(x)));
    probe.set_params(pm);
    const SparseWeights wm = scaled(interp_weights(grid_, probe.apply(x)));
    out.grad_phi[k] = (weights_dot(wp, out.grad_w) - weights_dot(wm, out.grad_w)) / (2.0 * h);
  }
  return out;
}

ProjectionGradient WiskiModel::projection_step(const Eigen::Ref<const Eigen::VectorXd>& x, double y,
                                               Adam& optimizer, double lr, double noise_var) {
  ProjectionGradient g = projection_grad(x, y, noise_var);
  if (!g.grad_phi.allFinite()) {
    log_warning("projection_step: non-finite gradient, step skipped");
    return g;
  }
  projection_->set_params(projection_->params() + optimizer.ascent_step(g.grad_phi, lr));
  return g;
}

}  // namespace wiski
