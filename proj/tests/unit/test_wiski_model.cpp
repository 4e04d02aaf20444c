#include <cmath>
#include <numeric>
#include <thread>

#include <gtest/gtest.h>

#include "test_util.hpp"
#include "wiski/error.hpp"
#include "wiski/exact_gp.hpp"
#include "wiski/wiski_model.hpp"

using namespace wiski;
using wiski::testing::random_uniform;
using wiski::testing::random_vector;
using wiski::testing::rel_err;
using wiski::testing::rel_frob;

namespace {

constexpr double kEps = 1e-6;

KernelParams params_for(int d, double ell, double s, double noise) {
  KernelParams p = KernelParams::defaults(d);
  p.log_lengthscales.setConstant(std::log(ell));
  p.log_outputscale = std::log(s);
  p.log_noise = std::log(noise);
  return p;
}

struct Instance {
  Grid grid;
  KernelSpec spec;
  KernelParams params;
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
};

Instance make_instance(int d, Eigen::Index per_dim, Eigen::Index n, std::uint64_t seed,
                       KernelFamily family = KernelFamily::kRbf, double noise = 0.1) {
  Instance inst{Grid::uniform(d, per_dim), KernelSpec{family, d}, params_for(d, 0.4, 1.3, noise),
                random_uniform(n, d, -1.0, 1.0, seed), Eigen::VectorXd()};
  inst.y = (inst.X.col(0).array() * 2.0).sin().matrix() + 0.1 * random_vector(n, seed + 1);
  return inst;
}

WiskiModel build(const Instance& inst, ModelOptions options = {}) {
  return WiskiModel::init(inst.grid, inst.spec, inst.params, inst.X, inst.y, options);
}

DenseOracleResult oracle(const Instance& inst, const Eigen::MatrixXd& xs, double eps = kEps) {
  DenseOracleOptions opt;
  opt.phantom_epsilon = eps;
  return dense_ski_oracle(inst.grid, inst.spec, inst.params, inst.X, inst.y, xs, opt);
}

Eigen::MatrixXd dense_kuu(const Instance& inst) {
  const Eigen::MatrixXd nodes = inst.grid.nodes();
  return kernel_matrix(inst.spec, inst.params, nodes, nodes);
}

// M = (sigma^2 K^-1 + G)^-1 = K (sigma^2 I + G K)^-1, avoiding K^-1.
Eigen::MatrixXd dense_m(const Eigen::MatrixXd& k, const Eigen::MatrixXd& gram, double sigma2) {
  const Eigen::Index m = k.rows();
  return k * (sigma2 * Eigen::MatrixXd::Identity(m, m) + gram * k).inverse();
}

}  // namespace

TEST(InitState, EmptyCaches) {
  const WiskiModel model(Grid::uniform(2, 6), {KernelFamily::kRbf, 2}, KernelParams::defaults(2));
  EXPECT_EQ(model.n(), 0);
  EXPECT_EQ(model.caches().wty.norm(), 0.0);
  EXPECT_EQ(model.caches().yty, 0.0);
  EXPECT_LE((model.root().gram() - kEps * Eigen::MatrixXd::Identity(36, 36)).norm(), 1e-18);
  EXPECT_THROW(model.marginal_log_likelihood(), InvalidState);
}

TEST(InitState, SingleGridNode) {
  const Grid grid = Grid::uniform(1, 10);
  Eigen::MatrixXd X(1, 1);
  X(0, 0) = grid.node(0, 3);
  const WiskiModel model =
      WiskiModel::init(grid, {KernelFamily::kRbf, 1}, KernelParams::defaults(1), X, Eigen::VectorXd::Constant(1, 2.0));
  Eigen::VectorXd expected = Eigen::VectorXd::Zero(10);
  expected[3] = 2.0;
  EXPECT_LE((model.caches().wty - expected).norm(), 1e-15);
  EXPECT_DOUBLE_EQ(model.caches().yty, 4.0);
  EXPECT_EQ(model.n(), 1);
}

TEST(InitState, BatchCachesMatchDense) {
  const Instance inst = make_instance(2, 7, 50, 3);
  const WiskiModel model = build(inst);
  const Eigen::MatrixXd w = interp_matrix(inst.grid, inst.X);
  const Eigen::MatrixXd gram = w.transpose() * w + kEps * Eigen::MatrixXd::Identity(49, 49);
  EXPECT_LE((model.caches().wty - w.transpose() * inst.y).norm(), 1e-10);
  EXPECT_NEAR(model.caches().yty, inst.y.squaredNorm(), 1e-12);
  EXPECT_LE(rel_frob(model.root().gram(), gram), 1e-10);
  EXPECT_EQ(model.n(), 50);
}

TEST(ApplyM, EmptyStateIsScaledKernel) {
  const Instance inst = make_instance(1, 16, 0, 4);
  const WiskiModel model(inst.grid, inst.spec, inst.params);
  const Eigen::VectorXd v = random_vector(16, 5);
  const Eigen::VectorXd expected = dense_kuu(inst) * v / inst.params.noise();
  EXPECT_LE((model.apply_m(v) - expected).norm() / expected.norm(), 1e-4);
  EXPECT_EQ(model.apply_m(Eigen::VectorXd::Zero(16)).norm(), 0.0);
}

TEST(ApplyM, MatchesDenseInverse) {
  const Instance inst = make_instance(2, 8, 120, 6);
  const WiskiModel model = build(inst);
  const Eigen::MatrixXd w = interp_matrix(inst.grid, inst.X);
  const Eigen::MatrixXd gram = w.transpose() * w + kEps * Eigen::MatrixXd::Identity(64, 64);
  const Eigen::MatrixXd m = dense_m(dense_kuu(inst), gram, inst.params.noise());
  const Eigen::VectorXd v = random_vector(64, 7);
  EXPECT_LE((model.apply_m(v) - m * v).norm() / (m * v).norm(), 1e-6);

  // Same check with a jittered K_UU inverse, the textbook form of M.
  const Eigen::MatrixXd kinv = (dense_kuu(inst) + 1e-8 * Eigen::MatrixXd::Identity(64, 64)).inverse();
  const Eigen::MatrixXd m_textbook = (inst.params.noise() * kinv + gram).inverse();
  EXPECT_LE((model.apply_m(v) - m_textbook * v).norm() / (m_textbook * v).norm(), 1e-4);
}

TEST(Mll, SinglePointAtNode) {
  const Grid grid = Grid::uniform(1, 12);
  const KernelSpec spec{KernelFamily::kRbf, 1};
  const KernelParams p = params_for(1, 0.5, 1.0, 0.2);
  Eigen::MatrixXd X(1, 1);
  X(0, 0) = grid.node(0, 5);
  const WiskiModel model = WiskiModel::init(grid, spec, p, X, Eigen::VectorXd::Zero(1));
  // k~(x, x) = w^T K w = s for a one-hot w.
  const double expected = -0.5 * std::log(2.0 * M_PI * (1.0 + 0.2));
  // The epsilon jitter through K_UU^-1 dominates the residual.
  EXPECT_NEAR(model.marginal_log_likelihood(), expected, 1e-4);
  DenseOracleOptions opt;
  opt.phantom_epsilon = kEps;
  EXPECT_LE(rel_err(model.marginal_log_likelihood(), dense_ski_oracle(grid, spec, p, X, Eigen::VectorXd::Zero(1), X, opt).mll),
            1e-6);
}

TEST(Mll, MatchesDenseOracle) {
  for (int d : {1, 2}) {
    for (auto family : {KernelFamily::kRbf, KernelFamily::kMatern12}) {
      const Instance inst = make_instance(d, d == 1 ? 40 : 7, 150, 10 + static_cast<std::uint64_t>(d), family);
      const WiskiModel model = build(inst);
      const Eigen::MatrixXd xs = random_uniform(5, d, -1.0, 1.0, 99);
      EXPECT_LE(rel_err(model.marginal_log_likelihood(), oracle(inst, xs).mll), 1e-6);
      // Without the phantom epsilon the match degrades to the jitter level.
      EXPECT_LE(rel_err(model.marginal_log_likelihood(), oracle(inst, xs, 0.0).mll), 1e-4);
    }
  }
}

TEST(Mll, NoiseDirectionOnPureNoise) {
  Instance inst = make_instance(1, 20, 150, 12);
  inst.y = random_vector(150, 13);  // unit-variance noise
  inst.params.log_noise = std::log(0.1);
  const WiskiModel low = build(inst);
  Instance hi = inst;
  hi.params.log_noise = std::log(0.2);
  const WiskiModel high = build(hi);
  EXPECT_GT(high.marginal_log_likelihood(), low.marginal_log_likelihood());
  EXPECT_GT(oracle(hi, inst.X.topRows(1)).mll, oracle(inst, inst.X.topRows(1)).mll);
}

TEST(Predict, EmptyStateIsPrior) {
  const Instance inst = make_instance(2, 8, 0, 14);
  const WiskiModel model(inst.grid, inst.spec, inst.params);
  const Eigen::Vector2d x(0.123, -0.456);
  const SparseWeights w = interp_weights(inst.grid, x);
  const Eigen::VectorXd wd = w.to_dense(64);
  const double prior = wd.dot(dense_kuu(inst) * wd);
  const PosteriorGaussian p = model.predict(x);
  EXPECT_EQ(p.mean, 0.0);
  EXPECT_LE(rel_err(p.variance, prior), 1e-4);
  EXPECT_NEAR(p.observation_variance(), p.variance + inst.params.noise(), 1e-15);
}

TEST(Predict, MatchesDenseOracle) {
  const Instance inst = make_instance(2, 8, 180, 15, KernelFamily::kMatern12);
  const WiskiModel model = build(inst);
  const Eigen::MatrixXd xs = random_uniform(25, 2, -1.1, 1.1, 16);
  const auto ref = oracle(inst, xs);
  for (Eigen::Index i = 0; i < xs.rows(); ++i) {
    const PosteriorGaussian p = model.predict(xs.row(i).transpose());
    EXPECT_LE(rel_err(p.mean, ref.predictions[i].mean), 1e-6);
    EXPECT_LE(rel_err(p.variance, ref.predictions[i].variance), 1e-6);
    EXPECT_GE(p.variance, 0.0);
    EXPECT_LE(p.variance, inst.params.outputscale() + inst.params.noise() + 1e-9);
  }
}

TEST(Predict, InterpolatesObservedNode) {
  const Grid grid = Grid::uniform(1, 20);
  const KernelSpec spec{KernelFamily::kRbf, 1};
  const KernelParams p = params_for(1, 0.5, 1.0, 1e-6);
  Eigen::MatrixXd X(3, 1);
  X << grid.node(0, 4), grid.node(0, 9), grid.node(0, 14);
  const Eigen::Vector3d y(0.7, -1.2, 0.3);
  const WiskiModel model = WiskiModel::init(grid, spec, p, X, y);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(model.predict(X.row(i).transpose()).mean, y[i], 1e-2);
}

TEST(Condition, FarAwayStaysPrior) {
  const Grid grid = Grid::uniform(1, 200, -12.0, 12.0);
  const KernelSpec spec{KernelFamily::kRbf, 1};
  const KernelParams p = params_for(1, 0.5, 1.0, 0.1);
  WiskiModel model(grid, spec, p);
  model.condition(Eigen::VectorXd::Constant(1, -5.0), 1.5);
  const PosteriorGaussian far = model.predict(Eigen::VectorXd::Constant(1, 5.0));
  EXPECT_NEAR(far.mean, 0.0, 1e-3);
  const SparseWeights w = interp_weights(grid, Eigen::VectorXd::Constant(1, 5.0));
  const Eigen::VectorXd wd = w.to_dense(200);
  const Eigen::MatrixXd nodes = grid.nodes();
  EXPECT_NEAR(far.variance, wd.dot(kernel_matrix(spec, p, nodes, nodes) * wd), 1e-3);
}

TEST(Condition, StreamEqualsBatch) {
  const Instance inst = make_instance(2, 8, 100, 17);
  const WiskiModel batch = build(inst);
  WiskiModel stream(inst.grid, inst.spec, inst.params);
  for (Eigen::Index i = 0; i < 100; ++i) stream.condition(inst.X.row(i).transpose(), inst.y[i]);
  EXPECT_EQ(stream.n(), 100);
  EXPECT_LE(rel_frob(stream.root().gram(), batch.root().gram()), 1e-5);
  EXPECT_LE((stream.caches().wty - batch.caches().wty).norm(), 1e-10);
  EXPECT_NEAR(stream.caches().yty, batch.caches().yty, 1e-10);
  const Eigen::MatrixXd xs = random_uniform(10, 2, -1.0, 1.0, 18);
  for (Eigen::Index i = 0; i < xs.rows(); ++i) {
    EXPECT_LE(rel_err(stream.predict(xs.row(i).transpose()).mean, batch.predict(xs.row(i).transpose()).mean), 1e-5);
  }
}

TEST(Condition, OrderInvariant) {
  const Instance inst = make_instance(1, 30, 80, 19);
  WiskiModel a(inst.grid, inst.spec, inst.params);
  WiskiModel b(inst.grid, inst.spec, inst.params);
  std::vector<Eigen::Index> order(80);
  std::iota(order.begin(), order.end(), 0);
  std::reverse(order.begin(), order.end());
  for (Eigen::Index i = 0; i < 80; ++i) a.condition(inst.X.row(i).transpose(), inst.y[i]);
  for (auto i : order) b.condition(inst.X.row(i).transpose(), inst.y[i]);
  EXPECT_LE(rel_frob(a.root().gram(), b.root().gram()), 1e-6);
  EXPECT_LE((a.caches().wty - b.caches().wty).norm(), 1e-6);
}

TEST(Condition, VarianceDecreasesAtConditionedPoint) {
  const Instance inst = make_instance(2, 8, 20, 20);
  WiskiModel model = build(inst);
  const Eigen::Vector2d x(0.2, 0.3);
  const double before = model.predict(x).variance;
  model.condition(x, 0.5);
  EXPECT_LT(model.predict(x).variance, before);
  EXPECT_THROW(model.condition(x, 0.5, 0.1), InvalidState);
  EXPECT_THROW(model.condition(Eigen::Vector3d::Zero(), 0.5), DimensionError);
}

TEST(Woodbury, SkiInverseIdentity) {
  const Instance inst = make_instance(1, 24, 60, 21);
  const WiskiModel model = build(inst);
  const Eigen::Index n = 60;
  const Eigen::Index m = 24;
  Eigen::MatrixXd w_aug = Eigen::MatrixXd::Zero(n + m, m);
  w_aug.topRows(n) = interp_matrix(inst.grid, inst.X);
  w_aug.bottomRows(m) = std::sqrt(kEps) * Eigen::MatrixXd::Identity(m, m);
  const double s2 = inst.params.noise();
  Eigen::MatrixXd cov = w_aug * dense_kuu(inst) * w_aug.transpose();
  cov.diagonal().array() += s2;
  const Eigen::VectorXd v = random_vector(n, 22);
  Eigen::VectorXd v_aug = Eigen::VectorXd::Zero(n + m);
  v_aug.head(n) = v;
  const Eigen::VectorXd ref = cov.llt().solve(v_aug).head(n);
  const Eigen::MatrixXd w = w_aug.topRows(n);
  const Eigen::VectorXd via_m = v / s2 - w * model.apply_m(w.transpose() * v) / s2;
  EXPECT_LE((via_m - ref).norm() / ref.norm(), 1e-6);
}

TEST(ShermanMorrison, UpdatedRootMatchesRankOneFormula) {
  const Instance inst = make_instance(2, 8, 40, 23);
  const WiskiModel before = build(inst);
  const Eigen::Vector2d x(0.31, -0.52);
  const Eigen::VectorXd w = interp_weights(inst.grid, x).to_dense(64);
  WiskiModel after = before;
  after.condition(x, 0.4);
  const Eigen::VectorXd v = before.apply_m(w);
  const double gamma = 1.0 + v.dot(w);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Eigen::VectorXd probe = random_vector(64, 100 + seed);
    const Eigen::VectorXd expected = before.apply_m(probe) - v * (v.dot(probe) / gamma);
    EXPECT_LE((after.apply_m(probe) - expected).norm() / expected.norm(), 1e-6);
  }
}

TEST(HyperStep, ZeroLearningRateKeepsParams) {
  const Instance inst = make_instance(1, 20, 30, 24);
  WiskiModel model = build(inst);
  Adam adam(model.packed_params().size());
  const Eigen::VectorXd before = model.packed_params();
  const HyperStepResult r = model.hyper_step(adam, 0.0);
  EXPECT_FALSE(r.skipped);
  EXPECT_EQ(model.packed_params(), before);
}

TEST(HyperStep, ImprovesMllOnPriorSample) {
  // Draw from the SKI prior at lengthscale 0.5 and start from 0.15.
  const Grid grid = Grid::uniform(1, 60);
  const KernelSpec spec{KernelFamily::kRbf, 1};
  const KernelParams truth = params_for(1, 0.5, 1.0, 0.01);
  const Eigen::MatrixXd X = random_uniform(150, 1, -1.0, 1.0, 25);
  Eigen::MatrixXd k = kernel_matrix(spec, truth, X, X);
  k.diagonal().array() += 0.01;
  const Eigen::VectorXd y = Eigen::MatrixXd(k.llt().matrixL()) * random_vector(150, 26);
  KernelParams start = truth;
  start.log_lengthscales[0] = std::log(0.15);
  WiskiModel model = WiskiModel::init(grid, spec, start, X, y);
  const double before = model.marginal_log_likelihood();
  Adam adam(model.packed_params().size());
  for (int i = 0; i < 60; ++i) ASSERT_FALSE(model.hyper_step(adam, 0.05).skipped);
  EXPECT_GT(model.marginal_log_likelihood(), before);
  EXPECT_GT(model.params().lengthscale(0), 0.15);
  const auto ref_before = dense_ski_oracle(grid, spec, start, X, y, X.topRows(1));
  const auto ref_after = dense_ski_oracle(grid, spec, model.params(), X, y, X.topRows(1));
  EXPECT_GT(ref_after.mll, ref_before.mll);
}

TEST(HyperStep, FdGradientMatchesOracleFd) {
  const Instance inst = make_instance(2, 8, 100, 27);
  const WiskiModel model = build(inst);
  const Eigen::VectorXd grad = model.objective_gradient();
  const double h = 1e-4;
  const Eigen::VectorXd theta = model.packed_params();
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    Eigen::VectorXd tp = theta, tm = theta;
    tp[i] += h;
    tm[i] -= h;
    Instance ip = inst, im = inst;
    ip.params = model.unpack(tp);
    im.params = model.unpack(tm);
    const double ref = (oracle(ip, inst.X.topRows(1)).mll - oracle(im, inst.X.topRows(1)).mll) / (2.0 * h);
    EXPECT_LE(std::abs(grad[i] - ref) / std::max(1.0, std::abs(ref)), 1e-3) << i;
  }
}

TEST(HyperStep, SharedPartsMatchDirectEvaluation) {
  const Instance inst = make_instance(2, 8, 60, 28);
  const WiskiModel model = build(inst);
  KernelParams p = inst.params;
  p.log_outputscale += 0.3;
  p.log_noise -= 0.2;
  WiskiModel moved = model;
  moved.set_params(p);
  EXPECT_LE(rel_err(model.objective_at(p), moved.marginal_log_likelihood()), 1e-10);
}

TEST(HyperStep, RequiresTwoObservations) {
  const Instance inst = make_instance(1, 10, 1, 29);
  WiskiModel model = build(inst);
  Adam adam(3);
  EXPECT_THROW(model.hyper_step(adam, 0.1), InvalidState);
}

TEST(HyperStep, PriorsShiftObjective) {
  const Instance inst = make_instance(1, 20, 30, 30);
  ModelOptions opts;
  opts.priors.enabled = true;
  const WiskiModel with_prior = build(inst, opts);
  const WiskiModel plain = build(inst);
  EXPECT_NEAR(with_prior.objective() - plain.objective(), opts.priors.log_prob(inst.params), 1e-10);
}

TEST(ProjectionGrad, ZeroDataReduction) {
  const Grid grid = Grid::uniform(2, 8);
  WiskiModel model(grid, {KernelFamily::kRbf, 2}, params_for(2, 0.4, 1.0, 0.1));
  model.set_projection(ProjectionMap::random(3, 2, 5));
  const Eigen::Vector3d x(0.3, -0.2, 0.5);
  const ProjectionGradient g = model.projection_grad(x, 0.0);
  const SparseWeights w = model.weights(x);
  const Eigen::VectorXd v = model.apply_m(w.to_dense(64));
  const double gamma = 1.0 + weights_dot(w, v);
  EXPECT_NEAR(g.objective, -0.5 * std::log(gamma), 1e-12);
  EXPECT_LE((g.grad_w + v / gamma).norm(), 1e-12);
}

TEST(ProjectionGrad, ClosedFormMatchesFiniteDifference) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Instance inst = make_instance(2, 8, 40, 200 + seed);
    const WiskiModel model = build(inst);
    SparseWeights w = interp_weights(inst.grid, random_uniform(1, 2, -0.9, 0.9, 300 + seed).row(0).transpose());
    const double y = 0.8;
    const Eigen::VectorXd grad = model.partial_objective_grad(w, y);
    const double h = 1e-6;
    for (std::size_t k = 0; k < w.nnz(); ++k) {
      SparseWeights wp = w, wm = w;
      wp.values[k] += h;
      wm.values[k] -= h;
      const double fd = (model.partial_objective(wp, y) - model.partial_objective(wm, y)) / (2.0 * h);
      EXPECT_LE(std::abs(grad[w.indices[k]] - fd) / std::max(1.0, std::abs(fd)), 1e-4);
    }
  }
}

TEST(ProjectionGrad, FullMllConsistency) {
  const Instance inst = make_instance(1, 24, 30, 31);
  const WiskiModel past = build(inst);
  const SparseWeights w = interp_weights(inst.grid, Eigen::VectorXd::Constant(1, 0.37));
  const double y = -0.6;
  const Eigen::VectorXd grad = past.partial_objective_grad(w, y);
  const double h = 1e-6;
  for (std::size_t k = 0; k < w.nnz(); ++k) {
    SparseWeights wp = w, wm = w;
    wp.values[k] += h;
    wm.values[k] -= h;
    WiskiModel mp = past, mm = past;
    mp.condition_weights(wp, y);
    mm.condition_weights(wm, y);
    const double fd = (mp.marginal_log_likelihood() - mm.marginal_log_likelihood()) / (2.0 * h);
    EXPECT_LE(std::abs(grad[w.indices[k]] - fd) / std::max(1.0, std::abs(fd)), 1e-4);
  }
}

TEST(ProjectionGrad, ChainRuleMatchesFiniteDifferenceOverPhi) {
  const Instance inst = make_instance(2, 10, 30, 32);
  WiskiModel model = build(inst);
  const Eigen::Vector2d x(0.25, -0.4);
  model.set_projection(ProjectionMap::random(2, 2, 7, 0.8));
  const ProjectionGradient g = model.projection_grad(x, 0.5);
  const Eigen::VectorXd phi = model.projection()->params();
  const double h = 1e-5;
  for (Eigen::Index k = 0; k < phi.size(); ++k) {
    Eigen::VectorXd pp = phi, pm = phi;
    pp[k] += h;
    pm[k] -= h;
    ProjectionMap a = *model.projection(), b = *model.projection();
    a.set_params(pp);
    b.set_params(pm);
    const double fp = model.partial_objective(interp_weights(inst.grid, a.apply(x)), 0.5);
    const double fm = model.partial_objective(interp_weights(inst.grid, b.apply(x)), 0.5);
    EXPECT_NEAR(g.grad_phi[k], (fp - fm) / (2.0 * h), 1e-4 * std::max(1.0, std::abs(g.grad_phi[k])));
  }
  EXPECT_THROW(build(inst).projection_grad(x, 0.5), InvalidState);
}

TEST(FixedNoise, ConstantNoiseEqualsHomoscedastic) {
  const Instance inst = make_instance(2, 8, 60, 33);
  const WiskiModel homo = build(inst);
  const Eigen::VectorXd noise = Eigen::VectorXd::Constant(60, inst.params.noise());
  const WiskiModel fixed = WiskiModel::init_fixed_noise(inst.grid, inst.spec, inst.params, inst.X, inst.y, noise);
  const Eigen::MatrixXd xs = random_uniform(10, 2, -1.0, 1.0, 34);
  for (Eigen::Index i = 0; i < xs.rows(); ++i) {
    const auto a = homo.predict(xs.row(i).transpose());
    const auto b = fixed.predict(xs.row(i).transpose());
    // The epsilon jitter is scaled differently (eps vs eps / sigma^2), so allow 1e-4.
    EXPECT_LE(rel_err(a.mean, b.mean), 1e-4);
    EXPECT_LE(rel_err(a.variance, b.variance), 1e-4);
  }
  EXPECT_LE(rel_err(homo.marginal_log_likelihood(), fixed.marginal_log_likelihood()), 1e-4);
}

TEST(FixedNoise, TwoPointsMatchDense) {
  const Grid grid = Grid::uniform(1, 16);
  const KernelSpec spec{KernelFamily::kRbf, 1};
  const KernelParams p = params_for(1, 0.5, 1.0, 1.0);
  Eigen::MatrixXd X(2, 1);
  X << -0.3, 0.4;
  const Eigen::Vector2d y(1.0, -0.5);
  const Eigen::Vector2d noise(0.1, 10.0);
  WiskiModel model(grid, spec, p, {}, NoiseMode::kFixed);
  model.condition(X.row(0).transpose(), y[0], noise[0]);
  model.condition(X.row(1).transpose(), y[1], noise[1]);
  DenseOracleOptions opt;
  opt.noise = Eigen::VectorXd(noise);
  opt.phantom_epsilon = kEps;
  const Eigen::MatrixXd xs = random_uniform(6, 1, -1.0, 1.0, 35);
  const auto ref = dense_ski_oracle(grid, spec, p, X, y, xs, opt);
  EXPECT_LE(rel_err(model.marginal_log_likelihood(), ref.mll), 1e-6);
  for (Eigen::Index i = 0; i < xs.rows(); ++i) {
    EXPECT_LE(rel_err(model.predict(xs.row(i).transpose()).mean, ref.predictions[i].mean), 1e-6);
    EXPECT_LE(rel_err(model.predict(xs.row(i).transpose()).variance, ref.predictions[i].variance), 1e-6);
  }
  EXPECT_THROW(model.condition(X.row(0).transpose(), 1.0, 0.0), InvalidArgument);
  EXPECT_THROW(model.condition(X.row(0).transpose(), 1.0), InvalidState);
}

TEST(FixedNoise, HugeNoiseRemovesInfluence) {
  const Grid grid = Grid::uniform(1, 16);
  const KernelSpec spec{KernelFamily::kRbf, 1};
  WiskiModel model(grid, spec, params_for(1, 0.5, 1.0, 1.0), {}, NoiseMode::kFixed);
  model.condition(Eigen::VectorXd::Constant(1, 0.2), 5.0, 1e8);
  EXPECT_NEAR(model.predict(Eigen::VectorXd::Constant(1, 0.2)).mean, 0.0, 1e-6);
}

TEST(FantasyVariance, ReducesVarianceAtQuery) {
  const Instance inst = make_instance(2, 8, 30, 36);
  const WiskiModel model = build(inst);
  const Eigen::MatrixXd xq = random_uniform(4, 2, -1.0, 1.0, 37);
  const Eigen::VectorXd after = model.fantasy_variance(xq, xq);
  const Eigen::VectorXd same = model.fantasy_variance(Eigen::MatrixXd(0, 2), xq);
  for (Eigen::Index i = 0; i < xq.rows(); ++i) {
    const double before = model.predict(xq.row(i).transpose()).variance;
    EXPECT_LT(after[i], before);
    EXPECT_NEAR(same[i], before, 1e-14);
  }
  EXPECT_EQ(model.n(), 30);
}

TEST(FantasyVariance, MatchesDenseWithAppendedRows) {
  const Instance inst = make_instance(2, 8, 50, 38);
  const WiskiModel model = build(inst);
  const Eigen::MatrixXd xf = random_uniform(3, 2, -1.0, 1.0, 39);
  const Eigen::MatrixXd xq = random_uniform(8, 2, -1.0, 1.0, 40);
  Instance appended = inst;
  appended.X.conservativeResize(53, 2);
  appended.X.bottomRows(3) = xf;
  appended.y.conservativeResize(53);
  appended.y.tail(3).setZero();
  const auto ref = oracle(appended, xq);
  const Eigen::VectorXd fv = model.fantasy_variance(xf, xq);
  for (Eigen::Index i = 0; i < xq.rows(); ++i) EXPECT_LE(rel_err(fv[i], ref.predictions[i].variance), 1e-6);
}

TEST(PosteriorCovariance, DiagonalMatchesPredictAndIsSymmetric) {
  const Instance inst = make_instance(2, 8, 50, 41);
  const WiskiModel model = build(inst);
  const Eigen::MatrixXd xs = random_uniform(7, 2, -1.0, 1.0, 42);
  const Eigen::MatrixXd cov = model.posterior_covariance(xs, xs);
  EXPECT_LE((cov - cov.transpose()).cwiseAbs().maxCoeff(), 1e-12);
  for (Eigen::Index i = 0; i < xs.rows(); ++i) {
    EXPECT_NEAR(cov(i, i), model.predict(xs.row(i).transpose()).variance, 1e-12);
  }
}

TEST(TargetTransform, MatchesTransformedData) {
  const Instance inst = make_instance(1, 20, 40, 43);
  WiskiModel transformed = build(inst);
  transformed.set_target_transform(0.7, 2.0);
  Instance shifted = inst;
  shifted.y = (inst.y.array() - 0.7) / 2.0;
  const WiskiModel direct = build(shifted);
  EXPECT_NEAR(transformed.marginal_log_likelihood(), direct.marginal_log_likelihood(), 1e-10);
  const Eigen::VectorXd x = Eigen::VectorXd::Constant(1, 0.1);
  EXPECT_NEAR(transformed.predict(x).mean, 0.7 + 2.0 * direct.predict(x).mean, 1e-10);
  EXPECT_NEAR(transformed.predict(x).variance, 4.0 * direct.predict(x).variance, 1e-10);
}

TEST(QSolveCg, AgreesWithDense) {
  const Instance inst = make_instance(2, 6, 40, 44);
  ModelOptions cg;
  cg.q_solve = QSolve::kCg;
  cg.cg_steps = 200;
  cg.cg_tol = 1e-12;
  cg.slq_probes = 200;
  const WiskiModel a = build(inst);
  const WiskiModel b = build(inst, cg);
  const Eigen::Vector2d x(0.1, -0.3);
  EXPECT_LE(rel_err(a.predict(x).mean, b.predict(x).mean), 1e-8);
  EXPECT_LE(rel_err(a.predict(x).variance, b.predict(x).variance), 1e-8);
  EXPECT_LE(std::abs(a.marginal_log_likelihood() - b.marginal_log_likelihood()),
            0.05 * std::abs(a.marginal_log_likelihood()));
}

TEST(ReducedRank, LanczosRootFromBatch) {
  const Instance inst = make_instance(1, 40, 200, 45);
  ModelOptions opts;
  opts.rank = 20;
  const WiskiModel model = build(inst, opts);
  EXPECT_LE(model.rank(), 20);
  const PosteriorGaussian p = model.predict(Eigen::VectorXd::Constant(1, 0.2));
  EXPECT_TRUE(std::isfinite(p.mean));
  EXPECT_GE(p.variance, 0.0);
  EXPECT_THROW(WiskiModel(inst.grid, inst.spec, inst.params, opts), InvalidArgument);
  EXPECT_EQ(default_rank(900), 900);
  EXPECT_EQ(default_rank(2048), 1024);
}

TEST(Concurrency, PreparedModelServesParallelReads) {
  const Instance inst = make_instance(2, 8, 50, 46);
  const WiskiModel model = build(inst);
  model.prepare();
  const Eigen::MatrixXd xs = random_uniform(40, 2, -1.0, 1.0, 47);
  std::vector<double> serial(40);
  for (Eigen::Index i = 0; i < 40; ++i) serial[static_cast<std::size_t>(i)] = model.predict(xs.row(i).transpose()).mean;
  std::vector<double> parallel(40);
  std::vector<std::thread> workers;
  for (int t = 0; t < 4; ++t) {
    workers.emplace_back([&, t] {
      for (Eigen::Index i = t; i < 40; i += 4) {
        parallel[static_cast<std::size_t>(i)] = model.predict(xs.row(i).transpose()).mean;
      }
    });
  }
  for (auto& w : workers) w.join();
  EXPECT_EQ(serial, parallel);
}

TEST(ExactGp, SinglePointMll) {
  const KernelSpec spec{KernelFamily::kRbf, 1};
  const ExactGp gp = ExactGp::fit(spec, params_for(1, 0.5, 1.0, 1.0), Eigen::MatrixXd::Zero(1, 1),
                                  Eigen::VectorXd::Zero(1));
  EXPECT_NEAR(gp.marginal_log_likelihood(), -0.5 * std::log(4.0 * M_PI), 1e-12);
}

TEST(ExactGp, EqualsWiskiWhenWIsPermutation) {
  // Data on grid nodes: W is a selection matrix so K~ = K exactly.
  const Grid grid = Grid::uniform(1, 12);
  const KernelSpec spec{KernelFamily::kMatern12, 1};
  const KernelParams p = params_for(1, 0.6, 1.4, 0.3);
  Eigen::MatrixXd X(12, 1);
  for (int i = 0; i < 12; ++i) X(i, 0) = grid.node(0, (i * 5) % 12);
  const Eigen::VectorXd y = random_vector(12, 48);
  const ExactGp gp = ExactGp::fit(spec, p, X, y);
  const auto ref = dense_ski_oracle(grid, spec, p, X, y, X);
  EXPECT_LE(rel_err(gp.marginal_log_likelihood(), ref.mll), 1e-8);
  const WiskiModel model = WiskiModel::init(grid, spec, p, X, y);
  EXPECT_LE(rel_err(gp.marginal_log_likelihood(), model.marginal_log_likelihood()), 1e-6);
  for (Eigen::Index i = 0; i < 12; ++i) {
    EXPECT_LE(rel_err(gp.predict(X.row(i).transpose()).mean, ref.predictions[i].mean), 1e-8);
    EXPECT_LE(rel_err(gp.predict(X.row(i).transpose()).variance, ref.predictions[i].variance), 1e-8);
  }
}

TEST(ExactGp, AppendEqualsRefit) {
  const KernelSpec spec{KernelFamily::kRbf, 2};
  const KernelParams p = params_for(2, 0.4, 1.0, 0.05);
  const Eigen::MatrixXd X = random_uniform(30, 2, -1.0, 1.0, 49);
  const Eigen::VectorXd y = random_vector(30, 50);
  ExactGp streamed = ExactGp::fit(spec, p, X.topRows(10), y.head(10));
  for (Eigen::Index i = 10; i < 30; ++i) streamed.append(X.row(i).transpose(), y[i]);
  const ExactGp batch = ExactGp::fit(spec, p, X, y);
  EXPECT_LE(rel_frob(streamed.cholesky(), batch.cholesky()), 1e-10);
  EXPECT_NEAR(streamed.marginal_log_likelihood(), batch.marginal_log_likelihood(), 1e-9);
  const Eigen::MatrixXd k = kernel_matrix(spec, p, X, X) + 0.05 * Eigen::MatrixXd::Identity(30, 30);
  EXPECT_LE(rel_frob(batch.cholesky() * batch.cholesky().transpose(), k), 1e-8);
}

TEST(ExactGp, HandComputedTwoPointPosterior) {
  const KernelSpec spec{KernelFamily::kRbf, 1};
  const KernelParams p = params_for(1, 1.0, 1.0, 0.5);
  Eigen::MatrixXd X(2, 1);
  X << 0.0, 1.0;
  const Eigen::Vector2d y(1.0, 2.0);
  const ExactGp gp = ExactGp::fit(spec, p, X, y);
  const double k01 = std::exp(-0.5);
  Eigen::Matrix2d k;
  k << 1.5, k01, k01, 1.5;
  const Eigen::Vector2d ks(std::exp(-0.125), std::exp(-0.125));  // x* = 0.5
  const Eigen::Vector2d a = k.inverse() * y;
  const PosteriorGaussian post = gp.predict(Eigen::VectorXd::Constant(1, 0.5));
  EXPECT_NEAR(post.mean, ks.dot(a), 1e-12);
  EXPECT_NEAR(post.variance, 1.0 - ks.dot(k.inverse() * ks), 1e-12);
}

TEST(ExactGp, LimitsAndFarField) {
  const KernelSpec spec{KernelFamily::kRbf, 1};
  Eigen::MatrixXd X(2, 1);
  X << -0.5, 0.5;
  const ExactGp gp = ExactGp::fit(spec, params_for(1, 0.3, 2.0, 1e-8), X, Eigen::Vector2d(1.0, -1.0));
  EXPECT_NEAR(gp.predict(X.row(0).transpose()).mean, 1.0, 1e-5);
  const PosteriorGaussian far = gp.predict(Eigen::VectorXd::Constant(1, 50.0));
  EXPECT_NEAR(far.mean, 0.0, 1e-12);
  EXPECT_NEAR(far.variance, 2.0, 1e-12);
}

TEST(ExactGp, AnalyticGradientMatchesFd) {
  for (auto family : {KernelFamily::kRbf, KernelFamily::kMatern12}) {
    const KernelSpec spec{family, 2};
    HyperPriors priors;
    priors.enabled = family == KernelFamily::kMatern12;
    const ExactGp gp = ExactGp::fit(spec, params_for(2, 0.4, 1.2, 0.1), random_uniform(40, 2, -1.0, 1.0, 51),
                                    random_vector(40, 52), priors);
    const Eigen::VectorXd grad = gp.objective_gradient();
    const Eigen::VectorXd theta = gp.packed_params();
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
      Eigen::VectorXd tp = theta, tm = theta;
      tp[i] += 1e-5;
      tm[i] -= 1e-5;
      ExactGp a = gp, b = gp;
      a.set_params(gp.unpack(tp));
      b.set_params(gp.unpack(tm));
      const double fd = (a.objective() - b.objective()) / 2e-5;
      EXPECT_LE(std::abs(grad[i] - fd) / std::max(1.0, std::abs(fd)), 1e-5) << i;
    }
  }
}

TEST(ExactGp, NoiseDirectionAndJitterLadder) {
  const KernelSpec spec{KernelFamily::kRbf, 1};
  const Eigen::MatrixXd X = random_uniform(80, 1, -1.0, 1.0, 53);
  const Eigen::VectorXd y = (X.col(0).array() * 3.0).sin().matrix() + 0.3 * random_vector(80, 54);
  const double near_truth = ExactGp::fit(spec, params_for(1, 0.3, 1.0, 0.09), X, y).marginal_log_likelihood();
  const double far_off = ExactGp::fit(spec, params_for(1, 0.3, 1.0, 9.0), X, y).marginal_log_likelihood();
  EXPECT_GT(near_truth, far_off);
  // Duplicate inputs with tiny noise force the jitter ladder.
  Eigen::MatrixXd dup = Eigen::MatrixXd::Zero(3, 1);
  const ExactGp jittered = ExactGp::fit(spec, params_for(1, 0.3, 1.0, 1e-20), dup, Eigen::Vector3d(1, 1, 1));
  EXPECT_GT(jittered.jitter(), 0.0);
}

TEST(ExactGp, FixedNoiseFantasy) {
  const KernelSpec spec{KernelFamily::kRbf, 1};
  const Eigen::MatrixXd X = random_uniform(10, 1, -1.0, 1.0, 55);
  const ExactGp gp = ExactGp::fit_fixed_noise(spec, params_for(1, 0.3, 1.0, 1.0), X, random_vector(10, 56),
                                              Eigen::VectorXd::Constant(10, 0.2));
  const Eigen::MatrixXd xq = Eigen::MatrixXd::Constant(1, 1, 0.05);
  const Eigen::VectorXd fv = gp.fantasy_variance(xq, xq, 0.2);
  EXPECT_LT(fv[0], gp.predict(xq.row(0).transpose()).variance);
  EXPECT_EQ(gp.n(), 10);
}

TEST(DenseOracle, SkiApproachesExactAsGridRefines) {
  const KernelSpec spec{KernelFamily::kRbf, 1};
  const KernelParams p = params_for(1, 0.3, 1.0, 0.05);
  const Eigen::MatrixXd X = random_uniform(60, 1, -1.0, 1.0, 57);
  const Eigen::VectorXd y = (X.col(0).array() * 3.0).sin().matrix();
  const Eigen::MatrixXd xs = random_uniform(20, 1, -1.0, 1.0, 58);
  const ExactGp gp = ExactGp::fit(spec, p, X, y);
  std::vector<double> errors;
  for (Eigen::Index nodes : {13, 25, 49, 97}) {
    const auto ref = dense_ski_oracle(Grid::uniform(1, nodes), spec, p, X, y, xs);
    double err = 0.0;
    for (Eigen::Index i = 0; i < xs.rows(); ++i) {
      err = std::max(err, std::abs(ref.predictions[i].mean - gp.predict(xs.row(i).transpose()).mean));
      EXPECT_GE(ref.predictions[i].variance, 0.0);
    }
    errors.push_back(err);
  }
  for (std::size_t i = 1; i < errors.size(); ++i) EXPECT_LE(errors[i], 0.5 * errors[i - 1]) << i;
}
