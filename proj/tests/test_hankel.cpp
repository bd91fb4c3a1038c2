#include "deepc/hankel.hpp"
#include "deepc/plant.hpp"

#include <gtest/gtest.h>

#include "test_support.hpp"

using namespace deepc;
using deepc::testing::scalar_signal;
using deepc::testing::vec;

TEST(BuildHankel, ScalarDepthTwo) {
  const Matrix h = build_hankel(scalar_signal({1, 2, 3, 4, 5}), 2);
  Matrix expected(2, 4);
  expected << 1, 2, 3, 4, 2, 3, 4, 5;
  EXPECT_EQ(h, expected);
}

TEST(BuildHankel, FullDepthIsSingleColumn) {
  const Matrix h = build_hankel(scalar_signal({1, 2, 3}), 3);
  ASSERT_EQ(h.cols(), 1);
  EXPECT_EQ(h.col(0), vec({1, 2, 3}));
}

TEST(BuildHankel, VectorSignalsInterleaveChannels) {
  const Signal w = {vec({1, 10}), vec({2, 20}), vec({3, 30})};
  const Matrix h = build_hankel(w, 2);
  Matrix expected(4, 2);
  expected << 1, 2, 10, 20, 2, 3, 20, 30;
  EXPECT_EQ(h, expected);
}

TEST(BuildHankel, Errors) {
  EXPECT_THROW(build_hankel(scalar_signal({1, 2}), 3), Error);
  try {
    build_hankel(scalar_signal({1, 2}), 3);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::invalid_window);
  }
  try {
    build_hankel(Signal{}, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::invalid_input);
  }
}

TEST(BuildHankel, ShiftStructure) {
  std::mt19937_64 rng(3);
  const Signal w = deepc::testing::white_signal(rng, 3, 40);
  const Eigen::Index d = 3, L = 7;
  const Matrix h = build_hankel(w, L);
  for (Eigen::Index i = 1; i < L; ++i)
    for (Eigen::Index j = 0; j + 1 < h.cols(); ++j)
      for (Eigen::Index r = 0; r < d; ++r) EXPECT_EQ(h(i * d + r, j), h((i - 1) * d + r, j + 1));
}

TEST(Partition, Shapes) {
  std::mt19937_64 rng(1);
  const TrajectoryData data(deepc::testing::white_signal(rng, 1, 10), deepc::testing::white_signal(rng, 1, 10));
  const auto part = partition(data, 2, 3);
  EXPECT_EQ(part.U_p.rows(), 2);
  EXPECT_EQ(part.U_f.rows(), 3);
  EXPECT_EQ(part.Y_p.rows(), 2);
  EXPECT_EQ(part.Y_f.rows(), 3);
  EXPECT_EQ(part.columns(), 6);
  // stacking reproduces the full-depth Hankel matrix
  Matrix stacked(5, 6);
  stacked << part.U_p, part.U_f;
  EXPECT_EQ(stacked, build_hankel(data.u, 5));
}

TEST(Partition, ConverterScaleShapes) {
  std::mt19937_64 rng(2);
  const TrajectoryData data(deepc::testing::white_signal(rng, 3, 500), deepc::testing::white_signal(rng, 3, 500));
  const auto part = partition(data, 6, 12);
  EXPECT_EQ(part.U_p.rows(), 18);
  EXPECT_EQ(part.U_p.cols(), 483);
  EXPECT_EQ(part.U_f.rows(), 36);
  EXPECT_EQ(part.columns(), 483);
}

TEST(Partition, ZeroDataGivesZeroBlocks) {
  const Signal z(12, Vector::Zero(2));
  const auto part = partition(TrajectoryData(z, z), 2, 3);
  EXPECT_TRUE(part.U_p.isZero());
  EXPECT_TRUE(part.Y_f.isZero());
  EXPECT_EQ(part.U_f.rows(), 6);
  EXPECT_EQ(part.columns(), 8);
}

TEST(Partition, InsufficientData) {
  const Signal z(4, Vector::Zero(1));
  try {
    partition(TrajectoryData(z, z), 2, 3);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::insufficient_data);
  }
}

TEST(TrajectoryData, RejectsMismatchedLengths) {
  EXPECT_THROW(TrajectoryData(Signal(3, Vector::Zero(1)), Signal(2, Vector::Zero(1))), Error);
  EXPECT_THROW(TrajectoryData(Signal{vec({1}), vec({1, 2})}, Signal(2, Vector::Zero(1))), Error);
}

namespace {

StateSpaceModel scalar_model() {
  return StateSpaceModel(Matrix::Constant(1, 1, 0.5), Matrix::Constant(1, 1, 1.0), Matrix::Constant(1, 1, 1.0),
                         Matrix::Zero(1, 1));
}

}  // namespace

TEST(RankCondition, ScalarSystemWhiteNoise) {
  std::mt19937_64 rng(11);
  const auto model = scalar_model();
  const Signal u = deepc::testing::white_signal(rng, 1, 50);
  const auto sim = simulate(model, Vector::Zero(1), u);
  const auto rep = rank_condition(TrajectoryData(u, sim.y), 5, 1);
  EXPECT_TRUE(rep.satisfied) << rep.diagnostic;
  EXPECT_EQ(rep.rank, 6);
}

TEST(RankCondition, ZeroData) {
  const Signal z(50, Vector::Zero(1));
  const auto rep = rank_condition(TrajectoryData(z, z), 5, 1);
  EXPECT_FALSE(rep.satisfied);
  EXPECT_EQ(rep.rank, 0);
}

TEST(RankCondition, ConstantInputIsNotEnough) {
  const auto model = scalar_model();
  const Signal u(50, Vector::Ones(1));
  const auto sim = simulate(model, Vector::Zero(1), u);
  const auto rep = rank_condition(TrajectoryData(u, sim.y), 5, 1);
  EXPECT_FALSE(rep.satisfied);
  EXPECT_LT(rep.rank, 6);
}

TEST(RankCondition, TooFewColumns) {
  std::mt19937_64 rng(5);
  const Signal u = deepc::testing::white_signal(rng, 1, 8);
  const auto rep = rank_condition(TrajectoryData(u, u), 5, 1);
  EXPECT_FALSE(rep.satisfied);
  EXPECT_NE(rep.diagnostic.find("too few columns"), std::string::npos);
}

TEST(RankCondition, MonotoneInData) {
  std::mt19937_64 rng(21);
  const auto model = deepc::testing::random_model(rng, 3, 1, 1);
  const Signal u = deepc::testing::white_signal(rng, 1, 60);
  const auto y = simulate(model, Vector::Zero(3), u).y;
  Eigen::Index prev = 0;
  for (std::size_t T = 8; T <= u.size(); T += 4) {
    const TrajectoryData d(Signal(u.begin(), u.begin() + T), Signal(y.begin(), y.begin() + T));
    const auto rep = rank_condition(d, 6, 3);
    EXPECT_GE(rep.rank, prev);
    prev = rep.rank;
  }
  EXPECT_EQ(prev, 6 + 3);
}

TEST(PeOrder, Cases) {
  std::mt19937_64 rng(8);
  EXPECT_TRUE(pe_order(deepc::testing::white_signal(rng, 1, 40), 10));
  EXPECT_FALSE(pe_order(Signal(40, Vector::Zero(1)), 10));
  EXPECT_FALSE(pe_order(deepc::testing::white_signal(rng, 1, 10), 8));
}

// Trajectories of the plant lie in the Hankel column span and vice versa.
TEST(FundamentalLemma, ImageAndConverse) {
  std::mt19937_64 rng(31);
  const Eigen::Index n = 3, m = 2, p = 2, L = 8, T = 120;
  const auto model = deepc::testing::random_model(rng, n, m, p, 0.8, true);
  const Signal u = deepc::testing::white_signal(rng, m, T);
  const auto y = simulate(model, Vector::Zero(n), u).y;
  const TrajectoryData data(u, y);
  ASSERT_TRUE(rank_condition(data, L, n).satisfied);

  Matrix H(L * (m + p), T - L + 1);
  H << build_hankel(u, L), build_hankel(y, L);

  // image: a fresh trajectory with random initial state
  std::normal_distribution<double> nd;
  Vector x0(n);
  for (Eigen::Index i = 0; i < n; ++i) x0(i) = nd(rng);
  const Signal u_new = deepc::testing::white_signal(rng, m, L);
  const auto y_new = simulate(model, x0, u_new).y;
  Vector w(L * (m + p));
  w << stack(u_new), stack(y_new);
  const Vector g = min_norm_solve(H, w);
  EXPECT_LT((H * g - w).norm(), 1e-8);

  // converse: a random column-span element is a trajectory
  Vector gr(H.cols());
  for (Eigen::Index i = 0; i < gr.size(); ++i) gr(i) = nd(rng) / 10.0;
  const Vector wr = H * gr;
  const Signal ur = unstack(wr.head(L * m), m);
  const Vector yr = wr.tail(L * p);
  // y = O x0 + Tu u; recover x0 by least squares, then re-simulate
  Matrix O(L * p, n);
  Matrix Ak = Matrix::Identity(n, n);
  for (Eigen::Index k = 0; k < L; ++k) {
    O.middleRows(k * p, p) = model.C * Ak;
    Ak = Ak * model.A;
  }
  const Vector forced = stack(simulate(model, Vector::Zero(n), ur).y);
  const Vector x0r = min_norm_solve(O, yr - forced);
  const Vector ysim = stack(simulate(model, x0r, ur).y);
  EXPECT_LT((ysim - yr).lpNorm<Eigen::Infinity>(), 1e-8);
}
