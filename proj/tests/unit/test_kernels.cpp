#include <cmath>

#include <gtest/gtest.h>

#include "test_util.hpp"
#include "wiski/error.hpp"
#include "wiski/kernels.hpp"

using namespace wiski;
using wiski::testing::random_uniform;
using wiski::testing::random_vector;

namespace {

KernelParams make_params(double ell, double s, int dims = 1) {
  KernelParams p = KernelParams::defaults(dims);
  p.log_lengthscales.setConstant(std::log(ell));
  p.log_outputscale = std::log(s);
  return p;
}

}  // namespace

TEST(KernelMatrix, ZeroLagIsOutputscale) {
  for (auto family : {KernelFamily::kRbf, KernelFamily::kMatern12}) {
    const KernelSpec spec{family, 3};
    const KernelParams p = make_params(0.7, 2.3, 3);
    const Eigen::Vector3d x(0.1, -0.4, 0.9);
    EXPECT_NEAR(kernel_value(spec, p, x, x), 2.3, 1e-14);
  }
}

TEST(KernelMatrix, RbfUnitLag) {
  const KernelSpec spec{KernelFamily::kRbf, 1};
  const Eigen::MatrixXd x = Eigen::MatrixXd::Constant(1, 1, 0.0);
  const Eigen::MatrixXd z = Eigen::MatrixXd::Constant(1, 1, 1.0);
  EXPECT_NEAR(kernel_matrix(spec, make_params(1.0, 1.0), x, z)(0, 0), 0.60653, 1e-5);
  EXPECT_NEAR(kernel_matrix(spec, make_params(1.0, 1.0), x, z)(0, 0), std::exp(-0.5), 1e-15);
}

TEST(KernelMatrix, Matern12) {
  const KernelSpec spec{KernelFamily::kMatern12, 1};
  const Eigen::MatrixXd x = Eigen::MatrixXd::Constant(1, 1, 0.5);
  const Eigen::MatrixXd z = Eigen::MatrixXd::Constant(1, 1, -1.5);
  EXPECT_NEAR(kernel_matrix(spec, make_params(2.0, 3.0), x, z)(0, 0), 1.10364, 1e-5);
}

TEST(KernelMatrix, SymmetricPsd) {
  const Eigen::MatrixXd X = random_uniform(200, 2, -1.0, 1.0, 3);
  for (auto family : {KernelFamily::kRbf, KernelFamily::kMatern12}) {
    const Eigen::MatrixXd k = kernel_matrix({family, 2}, make_params(0.4, 1.5, 2), X, X);
    EXPECT_LE((k - k.transpose()).cwiseAbs().maxCoeff(), 1e-15);
    Eigen::LLT<Eigen::MatrixXd> llt(k + 1e-10 * Eigen::MatrixXd::Identity(200, 200));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(k);
    EXPECT_GE(es.eigenvalues().minCoeff(), -1e-10);
  }
}

TEST(KernelMatrix, ArdMonotonicity) {
  const Eigen::MatrixXd X = random_uniform(30, 2, -1.0, 1.0, 4);
  const KernelSpec spec{KernelFamily::kRbf, 2};
  KernelParams p = make_params(0.3, 1.0, 2);
  const Eigen::MatrixXd before = kernel_matrix(spec, p, X, X);
  p.log_lengthscales[1] += 0.5;
  const Eigen::MatrixXd after = kernel_matrix(spec, p, X, X);
  EXPECT_GE((after - before).minCoeff(), 0.0);
}

TEST(KernelMatrix, RejectsLengthscaleMismatch) {
  const Eigen::MatrixXd X = Eigen::MatrixXd::Zero(2, 2);
  EXPECT_THROW(kernel_matrix({KernelFamily::kRbf, 2}, make_params(1.0, 1.0, 1), X, X), DimensionError);
}

TEST(KuuOperator, OneDimensionalMatchesKernelMatrix) {
  const Grid g = Grid::uniform(1, 40);
  const KernelSpec spec{KernelFamily::kRbf, 1};
  const KernelParams p = make_params(0.3, 1.7);
  const auto op = kuu_operator(spec, p, g);
  const Eigen::MatrixXd nodes = g.nodes();
  EXPECT_LE((op.dense() - kernel_matrix(spec, p, nodes, nodes)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(KuuOperator, TwoDimensionalMatchesKernelMatrix) {
  const Grid g = Grid::build({{-1.0, 1.0}, {-2.0, 2.0}}, {4, 4});
  for (auto family : {KernelFamily::kRbf, KernelFamily::kMatern12}) {
    const KernelSpec spec{family, 2};
    KernelParams p = make_params(0.5, 2.0, 2);
    p.log_lengthscales[1] = std::log(1.3);
    const auto op = kuu_operator(spec, p, g);
    ASSERT_EQ(op.size(), 16);
    const Eigen::MatrixXd nodes = g.nodes();
    EXPECT_LE((op.dense() - kernel_matrix(spec, p, nodes, nodes)).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(KuuOperator, LargeGridMatchesKernelMatrix) {
  const Grid g = Grid::uniform(2, 16);
  const KernelSpec spec{KernelFamily::kMatern12, 2};
  const KernelParams p = make_params(0.4, 0.8, 2);
  const Eigen::MatrixXd nodes = g.nodes();
  EXPECT_LE((kuu_operator(spec, p, g).dense() - kernel_matrix(spec, p, nodes, nodes)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(KuuOperator, LinearInOutputscale) {
  const Grid g = Grid::uniform(2, 6);
  const KernelSpec spec{KernelFamily::kRbf, 2};
  const Eigen::VectorXd v = random_vector(g.size(), 9);
  const Eigen::VectorXd a = kuu_operator(spec, make_params(0.5, 1.0, 2), g).apply(v);
  const Eigen::VectorXd b = kuu_operator(spec, make_params(0.5, 2.0, 2), g).apply(v);
  EXPECT_LE((b - 2.0 * a).norm(), 1e-12 * b.norm());
}

TEST(Kernels, FamilyNames) {
  EXPECT_EQ(parse_kernel_family("rbf"), KernelFamily::kRbf);
  EXPECT_EQ(parse_kernel_family("matern12"), KernelFamily::kMatern12);
  EXPECT_THROW(parse_kernel_family("spectral"), InvalidArgument);
  EXPECT_EQ(to_string(KernelFamily::kMatern12), "matern12");
}

TEST(Kernels, DefaultsAndPriors) {
  const KernelParams p = KernelParams::defaults(2);
  EXPECT_NEAR(p.lengthscale(0), 0.5, 1e-15);
  EXPECT_NEAR(p.noise(), 0.1, 1e-15);
  EXPECT_NEAR(p.outputscale(), 1.0, 1e-15);
  HyperPriors priors;
  EXPECT_EQ(priors.log_prob(p), 0.0);
  priors.enabled = true;
  // Gamma(3, 6) mode is 1/3; Gamma(2, 0.15) mode is 1/0.15.
  KernelParams at_mode = p;
  at_mode.log_lengthscales.setConstant(std::log(1.0 / 3.0));
  at_mode.log_outputscale = std::log(1.0 / 0.15);
  for (double delta : {-0.3, 0.3}) {
    KernelParams off = at_mode;
    off.log_lengthscales[0] += delta;
    EXPECT_LT(priors.log_prob(off), priors.log_prob(at_mode));
    off = at_mode;
    off.log_outputscale += delta;
    EXPECT_LT(priors.log_prob(off), priors.log_prob(at_mode));
  }
}
