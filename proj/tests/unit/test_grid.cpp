#include <gtest/gtest.h>

#include "test_util.hpp"
#include "wiski/error.hpp"
#include "wiski/grid.hpp"

using namespace wiski;
using wiski::testing::random_uniform;
using wiski::testing::random_vector;

TEST(BuildGrid, SpacingOneTenth) {
  const Grid g = Grid::build({{-1.2, 1.2}}, {25});
  EXPECT_NEAR(g.spacing(0), 0.1, 1e-15);
  EXPECT_EQ(g.size(), 25);
}

TEST(BuildGrid, ThirtyByThirty) {
  const Grid g = Grid::uniform(2, 30);
  EXPECT_EQ(g.size(), 900);
}

TEST(BuildGrid, Linspace) {
  const Grid g = Grid::build({{0.0, 3.0}}, {4});
  for (int i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(g.node(0, i), static_cast<double>(i));
}

TEST(BuildGrid, RowMajorFlatIndex) {
  const Grid g = Grid::build({{0.0, 3.0}, {0.0, 4.0}}, {4, 5});
  // flat = i0 * 5 + i1
  const Eigen::VectorXd x = g.node_point(2 * 5 + 3);
  EXPECT_DOUBLE_EQ(x[0], 2.0);
  EXPECT_DOUBLE_EQ(x[1], 3.0);
  EXPECT_EQ(g.nodes().rows(), 20);
}

TEST(BuildGrid, RejectsBadInput) {
  EXPECT_THROW(Grid::build({{0.0, 1.0}}, {3}), InvalidArgument);
  EXPECT_THROW(Grid::build({{1.0, 1.0}}, {8}), InvalidArgument);
  EXPECT_THROW(Grid::build({{0.0, std::numeric_limits<double>::infinity()}}, {8}), InvalidArgument);
  EXPECT_THROW(Grid::build({{0.0, 1.0}}, {8, 8}), InvalidArgument);
}

TEST(InterpWeights, NodeIsOneHot) {
  const Grid g = Grid::build({{-1.2, 1.2}}, {25});
  const SparseWeights w = interp_weights(g, Eigen::VectorXd::Constant(1, g.node(0, 12)));
  const Eigen::VectorXd dense = w.to_dense(g.size());
  EXPECT_NEAR(dense[12], 1.0, 1e-15);
  EXPECT_NEAR(dense.cwiseAbs().sum(), 1.0, 1e-15);
}

TEST(InterpWeights, MidpointWeights1d) {
  const Grid g = Grid::build({{0.0, 9.0}}, {10});
  const SparseWeights w = interp_weights(g, Eigen::VectorXd::Constant(1, 4.5));
  ASSERT_EQ(w.nnz(), 4u);
  const Eigen::VectorXd dense = w.to_dense(10);
  EXPECT_NEAR(dense[3], -1.0 / 16.0, 1e-15);
  EXPECT_NEAR(dense[4], 9.0 / 16.0, 1e-15);
  EXPECT_NEAR(dense[5], 9.0 / 16.0, 1e-15);
  EXPECT_NEAR(dense[6], -1.0 / 16.0, 1e-15);
}

TEST(InterpWeights, MidpointWeights2d) {
  const Grid g = Grid::build({{0.0, 9.0}, {0.0, 9.0}}, {10, 10});
  const SparseWeights w = interp_weights(g, Eigen::Vector2d(4.5, 4.5));
  ASSERT_EQ(w.nnz(), 16u);
  EXPECT_NEAR(w.sum(), 1.0, 1e-12);
  const Eigen::Vector4d q(-1.0 / 16.0, 9.0 / 16.0, 9.0 / 16.0, -1.0 / 16.0);
  const Eigen::VectorXd dense = w.to_dense(100);
  for (int a = 0; a < 4; ++a) {
    for (int b = 0; b < 4; ++b) EXPECT_NEAR(dense[(3 + a) * 10 + (3 + b)], q[a] * q[b], 1e-15);
  }
}

TEST(InterpWeights, PartitionOfUnityEverywhere) {
  const Grid g = Grid::build({{-1.0, 1.0}, {-2.0, 0.5}, {0.0, 1.0}}, {6, 7, 4});
  const Eigen::MatrixXd pts(random_uniform(300, 3, 0.0, 1.0, 5));
  for (Eigen::Index i = 0; i < pts.rows(); ++i) {
    Eigen::Vector3d x(-1.0 + 2.0 * pts(i, 0), -2.0 + 2.5 * pts(i, 1), pts(i, 2));
    const SparseWeights w = interp_weights(g, x);
    EXPECT_NEAR(w.sum(), 1.0, 1e-12);
    for (auto idx : w.indices) {
      EXPECT_GE(idx, 0);
      EXPECT_LT(idx, g.size());
    }
  }
}

TEST(InterpWeights, InteriorHasFullSupport) {
  const Grid g = Grid::uniform(2, 12);
  const SparseWeights w = interp_weights(g, Eigen::Vector2d(0.13, -0.41));
  EXPECT_EQ(w.nnz(), 16u);
}

TEST(InterpWeights, EdgeCellsMirrorAndReproduceLinear) {
  const Grid g = Grid::build({{0.0, 7.0}}, {8});
  for (double x : {0.0, 0.3, 0.5, 6.5, 6.9, 7.0}) {
    const SparseWeights w = interp_weights(g, Eigen::VectorXd::Constant(1, x));
    EXPECT_NEAR(w.sum(), 1.0, 1e-12) << x;
    EXPECT_LE(w.nnz(), 4u);
  }
  const SparseWeights at_end = interp_weights(g, Eigen::VectorXd::Constant(1, 7.0));
  EXPECT_NEAR(at_end.to_dense(8)[7], 1.0, 1e-15);
}

TEST(InterpWeights, ClampsOutOfRange) {
  const Grid g = Grid::uniform(1, 10, -1.0, 1.0);
  const std::size_t before = clamped_input_count();
  const SparseWeights w = interp_weights(g, Eigen::VectorXd::Constant(1, 3.0));
  EXPECT_EQ(clamped_input_count(), before + 1);
  EXPECT_NEAR(w.to_dense(10)[9], 1.0, 1e-15);
}

TEST(InterpWeights, RejectsNonFinite) {
  const Grid g = Grid::uniform(1, 10);
  EXPECT_THROW(interp_weights(g, Eigen::VectorXd::Constant(1, std::nan(""))), InvalidArgument);
  EXPECT_THROW(interp_weights(g, Eigen::Vector2d(0.0, 0.0)), DimensionError);
}

TEST(WeightsDot, OneHotPicksEntry) {
  const Grid g = Grid::uniform(1, 10);
  const Eigen::VectorXd v = random_vector(10, 3);
  const SparseWeights w = interp_weights(g, Eigen::VectorXd::Constant(1, g.node(0, 4)));
  EXPECT_NEAR(weights_dot(w, v), v[4], 1e-15);
}

TEST(WeightsDot, OnesGivesOne) {
  const Grid g = Grid::uniform(2, 9);
  const SparseWeights w = interp_weights(g, Eigen::Vector2d(0.37, -0.88));
  EXPECT_NEAR(weights_dot(w, Eigen::VectorXd::Ones(g.size())), 1.0, 1e-12);
}

TEST(WeightsDot, MatchesDense) {
  const Grid g = Grid::uniform(2, 9);
  const Eigen::VectorXd v = random_vector(g.size(), 4);
  const SparseWeights w = interp_weights(g, Eigen::Vector2d(0.1, 0.2));
  EXPECT_NEAR(weights_dot(w, v), w.to_dense(g.size()).dot(v), 1e-14);
  SparseWeights bad{{200}, {1.0}};
  EXPECT_THROW(weights_dot(bad, v), std::out_of_range);
}

TEST(ScatterAdd, ZeroScaleNoOp) {
  const Grid g = Grid::uniform(1, 10);
  Eigen::VectorXd t = random_vector(10, 5);
  const Eigen::VectorXd before = t;
  scatter_add(t, interp_weights(g, Eigen::VectorXd::Constant(1, 0.3)), 0.0);
  EXPECT_EQ(t, before);
}

TEST(ScatterAdd, OneHot) {
  const Grid g = Grid::uniform(1, 10);
  Eigen::VectorXd t = Eigen::VectorXd::Zero(10);
  scatter_add(t, interp_weights(g, Eigen::VectorXd::Constant(1, g.node(0, 6))), 2.5);
  EXPECT_NEAR(t[6], 2.5, 1e-15);
  EXPECT_NEAR(t.sum(), 2.5, 1e-15);
}

TEST(ScatterAdd, StreamingMatchesDenseWty) {
  const Grid g = Grid::uniform(2, 8);
  const Eigen::MatrixXd X = random_uniform(150, 2, -1.0, 1.0, 6);
  const Eigen::VectorXd y = random_vector(150, 7);
  Eigen::VectorXd wty = Eigen::VectorXd::Zero(g.size());
  Eigen::MatrixXd wtw = Eigen::MatrixXd::Zero(g.size(), g.size());
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const SparseWeights w = interp_weights(g, X.row(i).transpose());
    scatter_add(wty, w, y[i]);
    scatter_outer_add(wtw, w, 1.0);
  }
  const Eigen::MatrixXd W = interp_matrix(g, X);
  EXPECT_LE((wty - W.transpose() * y).norm(), 1e-10);
  EXPECT_LE((wtw - W.transpose() * W).norm(), 1e-10);
}
