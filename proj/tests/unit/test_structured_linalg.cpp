#include <cmath>

#include <gtest/gtest.h>

#include "test_util.hpp"
#include "wiski/error.hpp"
#include "wiski/linalg/kronecker.hpp"
#include "wiski/linalg/krylov.hpp"
#include "wiski/linalg/root.hpp"
#include "wiski/linalg/toeplitz.hpp"

using namespace wiski;
using namespace wiski::linalg;
using wiski::testing::random_matrix;
using wiski::testing::random_spd;
using wiski::testing::random_vector;
using wiski::testing::rel_frob;

namespace {

Eigen::MatrixXd dense_toeplitz(const Eigen::VectorXd& c) {
  const Eigen::Index p = c.size();
  Eigen::MatrixXd t(p, p);
  for (Eigen::Index i = 0; i < p; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) t(i, j) = c[std::abs(i - j)];
  }
  return t;
}

Eigen::MatrixXd kron(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::MatrixXd out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    }
  }
  return out;
}

LinearMap dense_map(const Eigen::MatrixXd& a) {
  return [a](const Eigen::VectorXd& v) -> Eigen::VectorXd { return a * v; };
}

Eigen::VectorXd decaying_column(Eigen::Index p, std::uint64_t seed) {
  Eigen::VectorXd c = random_vector(p, seed);
  for (Eigen::Index i = 0; i < p; ++i) c[i] *= std::exp(-0.1 * static_cast<double>(i));
  c[0] = std::abs(c[0]) + 2.0;
  return c;
}

}  // namespace

TEST(Toeplitz, IdentityColumn) {
  ToeplitzOperator t(Eigen::Vector2d(1.0, 0.0));
  const Eigen::VectorXd out = t.apply(Eigen::Vector2d(3.0, 7.0));
  EXPECT_DOUBLE_EQ(out[0], 3.0);
  EXPECT_DOUBLE_EQ(out[1], 7.0);
}

TEST(Toeplitz, TwoByTwo) {
  ToeplitzOperator t(Eigen::Vector2d(2.0, 1.0));
  const Eigen::VectorXd out = t.apply(Eigen::Vector2d(1.0, 1.0));
  EXPECT_NEAR(out[0], 3.0, 1e-14);
  EXPECT_NEAR(out[1], 3.0, 1e-14);
}

TEST(Toeplitz, FftMatchesDenseAtP64) {
  const Eigen::VectorXd c = random_vector(64, 11);
  const Eigen::VectorXd v = random_vector(64, 12);
  const Eigen::VectorXd ref = dense_toeplitz(c) * v;
  for (auto path : {ToeplitzPath::kFft, ToeplitzPath::kDirect, ToeplitzPath::kAuto}) {
    ToeplitzOperator t(c, path);
    EXPECT_LE((t.apply(v) - ref).norm() / ref.norm(), 1e-10);
  }
  EXPECT_EQ(ToeplitzOperator(c).uses_fft(), 64 >= kFftMinSize);
  EXPECT_TRUE(ToeplitzOperator(random_vector(kFftMinSize, 13)).uses_fft());
  EXPECT_FALSE(ToeplitzOperator(random_vector(kFftMinSize - 1, 14)).uses_fft());
}

TEST(Toeplitz, OddSizesAndBlocks) {
  for (Eigen::Index p : {1, 3, 17, 65, 130}) {
    const Eigen::VectorXd c = random_vector(p, 100 + static_cast<std::uint64_t>(p));
    const Eigen::MatrixXd x = random_matrix(p, 3, 7);
    const Eigen::MatrixXd dense = dense_toeplitz(c);
    ToeplitzOperator fft(c, ToeplitzPath::kFft);
    EXPECT_LE(rel_frob(fft.apply_columns(x), dense * x), 1e-10) << p;
    EXPECT_LE(rel_frob(fft.apply_rows(x.transpose()), x.transpose() * dense), 1e-10) << p;
    EXPECT_LE(rel_frob(fft.dense(), dense), 1e-15) << p;
  }
}

TEST(Toeplitz, LengthMismatchThrows) {
  ToeplitzOperator t(Eigen::Vector3d(1.0, 0.5, 0.25));
  EXPECT_THROW(t.apply(Eigen::Vector2d(1.0, 1.0)), DimensionError);
  EXPECT_THROW(ToeplitzOperator(Eigen::VectorXd()), std::invalid_argument);
}

TEST(Kronecker, SingleFactorEqualsToeplitz) {
  const Eigen::VectorXd c = random_vector(9, 3);
  const Eigen::VectorXd v = random_vector(9, 4);
  KroneckerToeplitzOperator k({ToeplitzOperator(c)});
  EXPECT_LE((k.apply(v) - ToeplitzOperator(c).apply(v)).norm(), 1e-14);
}

TEST(Kronecker, TwoByTwoFirstColumn) {
  const Eigen::Vector2d c1(2.0, 1.0);
  const Eigen::Vector2d c2(3.0, -1.0);
  KroneckerToeplitzOperator k({ToeplitzOperator(c1), ToeplitzOperator(c2)});
  const Eigen::MatrixXd dense = kron(dense_toeplitz(c1), dense_toeplitz(c2));
  Eigen::VectorXd e1 = Eigen::VectorXd::Zero(4);
  e1[0] = 1.0;
  EXPECT_LE((k.apply(e1) - dense.col(0)).norm(), 1e-14);
}

TEST(Kronecker, ThreeFactorsMatchDense) {
  std::vector<ToeplitzOperator> factors;
  Eigen::MatrixXd dense = Eigen::MatrixXd::Ones(1, 1);
  for (int k = 0; k < 3; ++k) {
    const Eigen::VectorXd c = random_vector(4, 20 + static_cast<std::uint64_t>(k));
    factors.emplace_back(c);
    dense = kron(dense, dense_toeplitz(c));
  }
  KroneckerToeplitzOperator op(factors);
  ASSERT_EQ(op.size(), 64);
  const Eigen::VectorXd v = random_vector(64, 30);
  const Eigen::VectorXd ref = dense * v;
  EXPECT_LE((op.apply(v) - ref).norm() / ref.norm(), 1e-10);
  EXPECT_LE(rel_frob(op.dense(), dense), 1e-14);
  EXPECT_NEAR(op.entry(17, 42), dense(17, 42), 1e-14);
}

TEST(Kronecker, MixedSizesWithFftFactor) {
  const Eigen::VectorXd c1 = decaying_column(5, 1);
  const Eigen::VectorXd c2 = decaying_column(70, 2);
  KroneckerToeplitzOperator op({ToeplitzOperator(c1), ToeplitzOperator(c2)});
  const Eigen::MatrixXd dense = kron(dense_toeplitz(c1), dense_toeplitz(c2));
  const Eigen::MatrixXd x = random_matrix(350, 2, 5);
  EXPECT_LE(rel_frob(op.apply_columns(x), dense * x), 1e-10);
  EXPECT_THROW(op.apply(Eigen::VectorXd::Ones(10)), DimensionError);
}

TEST(ConjugateGradients, IdentityOneIteration) {
  const auto result = conjugate_gradients(dense_map(Eigen::MatrixXd::Identity(2, 2)),
                                          Eigen::Vector2d(5.0, -2.0), 1e-10, 10);
  EXPECT_TRUE(result.converged);
  EXPECT_EQ(result.iterations, 1);
  EXPECT_NEAR(result.x[0], 5.0, 1e-14);
  EXPECT_NEAR(result.x[1], -2.0, 1e-14);
}

TEST(ConjugateGradients, CramerTwoByTwo) {
  Eigen::Matrix2d a;
  a << 4, 1, 1, 3;
  const auto result = conjugate_gradients(dense_map(a), Eigen::Vector2d(1.0, 2.0), 1e-12, 10);
  EXPECT_TRUE(result.converged);
  EXPECT_NEAR(result.x[0], 1.0 / 11.0, 1e-12);
  EXPECT_NEAR(result.x[1], 7.0 / 11.0, 1e-12);
}

TEST(ConjugateGradients, RandomSpdMatchesDenseSolve) {
  const Eigen::MatrixXd a = random_spd(50, 8);
  const Eigen::VectorXd b = random_vector(50, 9);
  const double tol = 1e-10;
  const auto result = conjugate_gradients(dense_map(a), b, tol, 500);
  ASSERT_TRUE(result.converged);
  EXPECT_LE((a * result.x - b).norm() / b.norm(), tol);
  const Eigen::VectorXd ref = a.llt().solve(b);
  EXPECT_LE((result.x - ref).norm() / ref.norm(), 1e-8);
}

TEST(ConjugateGradients, ErrorsAndEdgeCases) {
  const auto zero = conjugate_gradients(dense_map(Eigen::MatrixXd::Identity(3, 3)),
                                        Eigen::VectorXd::Zero(3), 1e-8, 5);
  EXPECT_TRUE(zero.converged);
  EXPECT_EQ(zero.x.norm(), 0.0);
  EXPECT_THROW(conjugate_gradients(dense_map(Eigen::MatrixXd::Identity(2, 2)), Eigen::Vector2d(1, 1), 0.0, 5),
               InvalidArgument);
  LinearMap nan_map = [](const Eigen::VectorXd& v) -> Eigen::VectorXd {
    return Eigen::VectorXd::Constant(v.size(), std::nan(""));
  };
  EXPECT_THROW(conjugate_gradients(nan_map, Eigen::Vector2d(1, 1), 1e-8, 5), NumericalError);
  const auto capped = conjugate_gradients(dense_map(random_spd(40, 3, 0.01)), random_vector(40, 4), 1e-14, 2);
  EXPECT_FALSE(capped.converged);
  EXPECT_EQ(capped.iterations, 2);
}

TEST(Lanczos, IdentityTerminatesAfterOneStep) {
  const auto t = lanczos(dense_map(Eigen::MatrixXd::Identity(5, 5)), random_vector(5, 1), 5);
  ASSERT_EQ(t.rank(), 1);
  EXPECT_NEAR(t.alpha[0], 1.0, 1e-14);
  EXPECT_EQ(t.beta.size(), 0);
}

TEST(Lanczos, DiagonalSpectrum) {
  const Eigen::MatrixXd a = Eigen::Vector3d(1.0, 2.0, 3.0).asDiagonal();
  const auto t = lanczos(dense_map(a), Eigen::Vector3d(1.0, 1.0, 1.0), 3);
  ASSERT_EQ(t.rank(), 3);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(t.tridiagonal());
  EXPECT_NEAR(es.eigenvalues()[0], 1.0, 1e-8);
  EXPECT_NEAR(es.eigenvalues()[1], 2.0, 1e-8);
  EXPECT_NEAR(es.eigenvalues()[2], 3.0, 1e-8);
}

TEST(Lanczos, ReconstructsRandomSpd) {
  const Eigen::MatrixXd a = random_spd(32, 21);
  const auto t = lanczos(dense_map(a), random_vector(32, 22), 32);
  ASSERT_EQ(t.rank(), 32);
  const Eigen::MatrixXd& q = t.basis;
  EXPECT_LE((q.transpose() * q - Eigen::MatrixXd::Identity(32, 32)).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LE((q.transpose() * a * q - t.tridiagonal()).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_LE(rel_frob(q * t.tridiagonal() * q.transpose(), a), 1e-6);
}

TEST(Lanczos, RejectsZeroProbeAndBadK) {
  const auto map = dense_map(Eigen::MatrixXd::Identity(3, 3));
  EXPECT_THROW(lanczos(map, Eigen::VectorXd::Zero(3), 2), InvalidArgument);
  EXPECT_THROW(lanczos(map, Eigen::VectorXd::Ones(3), 4), InvalidArgument);
  EXPECT_THROW(lanczos(map, Eigen::VectorXd::Ones(3), 0), InvalidArgument);
}

TEST(RootDecomposition, Identity) {
  const auto root = root_decomposition(Eigen::MatrixXd::Identity(4, 4), 4);
  EXPECT_LE((root.gram() - Eigen::MatrixXd::Identity(4, 4)).norm(), 1e-14);
}

TEST(RootDecomposition, DiagonalPseudoInverse) {
  const Eigen::MatrixXd a = Eigen::Vector2d(4.0, 1.0).asDiagonal();
  const auto root = root_decomposition(a, 2);
  EXPECT_LE((root.gram() - a).norm(), 1e-14);
  EXPECT_LE((root.pseudo_inverse() - Eigen::MatrixXd(Eigen::Vector2d(0.25, 1.0).asDiagonal())).norm(), 1e-14);
}

TEST(RootDecomposition, RandomPsdFullRank) {
  const Eigen::MatrixXd a = random_spd(64, 31, 0.1);
  const auto root = root_decomposition(a, 64);
  EXPECT_LE(rel_frob(root.gram(), a), 1e-6);
  EXPECT_LE((root.J.transpose() * root.L - Eigen::MatrixXd::Identity(64, 64)).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(RootDecomposition, LanczosPathLowRank) {
  // Rank-6 PSD matrix: a rank-6 root captures it exactly.
  const Eigen::MatrixXd b = random_matrix(40, 6, 41);
  const Eigen::MatrixXd a = b * b.transpose();
  const auto root = root_decomposition(dense_map(a), 40, 10);
  EXPECT_LE(root.rank(), 10);
  EXPECT_GE(root.rank(), 6);
  EXPECT_LE(rel_frob(root.gram(), a), 1e-6);
  EXPECT_LE((root.J.transpose() * root.L - Eigen::MatrixXd::Identity(root.rank(), root.rank())).cwiseAbs().maxCoeff(),
            1e-6);
}

TEST(RootDecomposition, SingularFullRankRequestFallsBack) {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(3, 3);
  a(0, 0) = 2.0;
  const auto root = root_decomposition(a, 3);
  EXPECT_LE((root.gram() - a).norm(), 1e-12);
  EXPECT_NEAR(root.pseudo_inverse()(0, 0), 0.5, 1e-12);
}

TEST(RootDecomposition, NegativeEigenvalueThrows) {
  const Eigen::MatrixXd a = Eigen::Vector3d(1.0, -1.0, 2.0).asDiagonal();
  EXPECT_THROW(root_decomposition(a, 3), NotPsdError);
}

TEST(Slq, IdentityIsZero) {
  EXPECT_NEAR(slq_logdet(dense_map(Eigen::MatrixXd::Identity(10, 10)), 10, 7, 5, 1), 0.0, 1e-12);
}

TEST(Slq, ScaledIdentity) {
  const double est = slq_logdet(dense_map(2.0 * Eigen::MatrixXd::Identity(16, 16)), 16, 30, 10, 2);
  EXPECT_NEAR(est, 16.0 * std::log(2.0), 0.05 * 16.0 * std::log(2.0));
}

TEST(Slq, RandomSpdWithinTwoPercent) {
  const Eigen::MatrixXd a = random_spd(64, 51);
  const double exact = 2.0 * a.llt().matrixL().toDenseMatrix().diagonal().array().log().sum();
  const double est = slq_logdet(dense_map(a), 64, 50, 30, 3);
  EXPECT_NEAR(est, exact, 0.02 * std::abs(exact));
  EXPECT_EQ(est, slq_logdet(dense_map(a), 64, 50, 30, 3));
}

TEST(Slq, IndefiniteThrows) {
  const Eigen::MatrixXd a = Eigen::Vector3d(1.0, -2.0, 3.0).asDiagonal();
  EXPECT_THROW(slq_logdet(dense_map(a), 3, 4, 3, 1), NotPsdError);
}

TEST(RankOneUpdate, ZeroUpdateUnchanged) {
  LowRankRoot root{Eigen::MatrixXd::Identity(2, 2), Eigen::MatrixXd::Identity(2, 2)};
  const auto out = rank_one_root_update(root, Eigen::Vector2d::Zero());
  EXPECT_EQ(out.L, root.L);
  EXPECT_EQ(out.J, root.J);
}

TEST(RankOneUpdate, UnitVector) {
  LowRankRoot root{Eigen::MatrixXd::Identity(2, 2), Eigen::MatrixXd::Identity(2, 2)};
  const auto out = rank_one_root_update(root, Eigen::Vector2d(1.0, 0.0));
  Eigen::Matrix2d expected;
  expected << 2, 0, 0, 1;
  EXPECT_LE((out.gram() - expected).norm(), 1e-14);
  EXPECT_LE((out.pseudo_inverse() - Eigen::Matrix2d(Eigen::Vector2d(0.5, 1.0).asDiagonal())).norm(), 1e-14);
}

TEST(RankOneUpdate, MatchesRecomputedRoot) {
  const Eigen::MatrixXd a = random_spd(32, 61);
  const auto root = root_decomposition(a, 32);
  const Eigen::VectorXd w = random_vector(32, 62);
  const auto updated = rank_one_root_update(root, w);
  const Eigen::MatrixXd target = a + w * w.transpose();
  const Eigen::MatrixXd chol = target.llt().matrixL();
  EXPECT_LE((updated.gram() - chol * chol.transpose()).cwiseAbs().maxCoeff() / target.cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LE((updated.J.transpose() * updated.L - Eigen::MatrixXd::Identity(32, 32)).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_LE(rel_frob(updated.pseudo_inverse(), target.inverse()), 1e-8);
}

TEST(RankOneUpdate, OrderInsensitiveGram) {
  const auto root = root_decomposition(random_spd(16, 71), 16);
  const Eigen::VectorXd w1 = random_vector(16, 72);
  const Eigen::VectorXd w2 = random_vector(16, 73);
  const auto a = rank_one_root_update(rank_one_root_update(root, w1), w2);
  const auto b = rank_one_root_update(rank_one_root_update(root, w2), w1);
  EXPECT_LE((a.gram() - b.gram()).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(RankOneUpdate, LongStreamKeepsPseudoInverse) {
  auto root = scaled_identity_root(12, 1e-6);
  Eigen::MatrixXd gram = 1e-6 * Eigen::MatrixXd::Identity(12, 12);
  for (int t = 0; t < 500; ++t) {
    Eigen::VectorXd w = Eigen::VectorXd::Zero(12);
    const int j = t % 9;
    w.segment(j, 4) = Eigen::Vector4d(-0.0625, 0.5625, 0.5625, -0.0625);
    rank_one_root_update_inplace(root, w);
    gram += w * w.transpose();
  }
  EXPECT_LE(rel_frob(root.gram(), gram), 1e-6);
  EXPECT_LE((root.J.transpose() * root.L - Eigen::MatrixXd::Identity(12, 12)).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(RankUpdate, BlockMatchesSequential) {
  const auto root = root_decomposition(random_spd(20, 81), 20);
  const Eigen::MatrixXd w = random_matrix(20, 3, 82);
  const auto block = rank_update(root, w);
  auto seq = root;
  for (int k = 0; k < 3; ++k) rank_one_root_update_inplace(seq, w.col(k));
  EXPECT_LE((block.gram() - seq.gram()).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LE(rel_frob(block.pseudo_inverse(), seq.pseudo_inverse()), 1e-8);
  EXPECT_THROW(rank_one_root_update(root, Eigen::VectorXd::Ones(3)), DimensionError);
}
