#include "deepc/instances.hpp"
#include "deepc/robustness.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace deepc;

namespace {

AssembledProblem ridge_example() {
  Vector b(2);
  b << 1.0, 0.0;
  return make_problem(Matrix::Identity(2, 2), b, ConstraintSet::none(2));
}

}  // namespace

TEST(WorstCase, ZeroGIsUnaffected) {
  const AssembledProblem p = ridge_example();
  const Matrix d = worst_case_disturbance(Vector::Zero(2), p.A, p.b, 3.0);
  EXPECT_EQ(d.norm(), 0.0);
  EXPECT_DOUBLE_EQ(((p.A + d) * Vector::Zero(2) - p.b).norm(), 1.0);
}

TEST(WorstCase, RidgeExampleAttainsRobustObjective) {
  const AssembledProblem p = ridge_example();
  Vector g(2);
  g << 0.5, 0.0;
  const Matrix d = worst_case_disturbance(g, p.A, p.b, 1.0);
  EXPECT_NEAR(d.norm(), 1.0, 1e-15);
  EXPECT_NEAR(((p.A + d) * g - p.b).norm(), 1.0, 1e-12);
  EXPECT_NEAR(robust_objective(g, p.A, p.b, 1.0), 1.0, 1e-15);
}

TEST(WorstCase, ZeroResidualUsesFirstBasisVector) {
  const Matrix A = Matrix::Identity(3, 2);
  Vector g(2);
  g << 3.0, 4.0;
  const Vector b = A * g;
  const Matrix d = worst_case_disturbance(g, A, b, 2.0);
  EXPECT_NEAR(d.norm(), 2.0, 1e-14);
  EXPECT_NEAR(d.row(1).norm() + d.row(2).norm(), 0.0, 0.0);
  EXPECT_NEAR(((A + d) * g - b).norm(), 10.0, 1e-12);
}

TEST(WorstCase, MonteCarloDominance) {
  const AssembledProblem p = random_instance(41, {12, 18, 0, 0});
  const Solution s = solve_qp(p, 1.0);
  const Matrix d = worst_case_disturbance(s.g, p.A, p.b, s.beta);
  const double attained = ((p.A + d) * s.g - p.b).norm();
  EXPECT_NEAR(attained, robust_objective(s.g, p.A, p.b, s.beta), 1e-9);
  std::mt19937_64 rng(9);
  std::normal_distribution<double> nd;
  for (int k = 0; k < 1000; ++k) {
    Matrix r(p.A.rows(), p.A.cols());
    for (Eigen::Index i = 0; i < r.size(); ++i) r.data()[i] = nd(rng);
    r *= s.beta / r.norm();
    EXPECT_LE(((p.A + r) * s.g - p.b).norm(), attained + 1e-9);
  }
}

TEST(Eq14Oracle, ExactlyDeterminedWithoutRegularizer) {
  Matrix A(3, 3);
  A << 2, 1, 0, 0, 3, 1, 1, 0, 4;
  Vector b(3);
  b << 1, -2, 0.5;
  const OracleResult r = minimize_eq14_oracle(A, b, 0.0, ConstraintSet::none(3), 1e-10);
  EXPECT_NEAR(r.value, 0.0, 1e-8);
  EXPECT_LT((r.g - A.lu().solve(b)).norm(), 1e-6);
}

TEST(Eq14Oracle, RidgeExampleValue) {
  const AssembledProblem p = ridge_example();
  const OracleResult r = minimize_eq14_oracle(p.A, p.b, 1.0, p.constraints, 1e-10);
  EXPECT_NEAR(r.value, 1.0, 1e-9);
  EXPECT_NEAR(robust_objective(solve_qp(p, 1.0).g, p.A, p.b, 1.0), r.value, 1e-9);
}

TEST(Eq14Oracle, NotBelowValueAtSolverMinimizerPlusTol) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const AssembledProblem p = random_instance(100 + seed, {15, 20, 1, 6});
    const Solution s = solve_qp(p, 1.0);
    const OracleResult r = minimize_eq14_oracle(p.A, p.b, s.beta, p.constraints, 1e-9);
    EXPECT_LE(r.value, robust_objective(s.g, p.A, p.b, s.beta) + 1e-9 * std::max(1.0, r.value));
    EXPECT_LE(r.gap_bound, 1e-9 * std::max(1.0, r.value));
    EXPECT_TRUE(((p.constraints.G * r.g - p.constraints.q).array() < 0.0).all());
    EXPECT_LT((p.constraints.E * r.g - p.constraints.f).norm(), 1e-9);
  }
}

TEST(Eq14Oracle, EmptyFeasibleSetFails) {
  ConstraintSet cs = ConstraintSet::none(1);
  cs.G.resize(2, 1);
  cs.G << 1.0, -1.0;
  cs.q.resize(2);
  cs.q << -1.0, -1.0;
  EXPECT_THROW(minimize_eq14_oracle(Matrix::Identity(1, 1), Vector::Ones(1), 1.0, cs), Error);
}

TEST(VerifyTheorem1, RidgeExamplePasses) {
  const RobustnessReport r = verify_theorem1(ridge_example(), 1.0);
  EXPECT_TRUE(r.pass);
  EXPECT_NEAR(r.beta, 1.0, 1e-12);
  EXPECT_NEAR(r.eq14_value_at_gstar, 1.0, 1e-12);
  EXPECT_NEAR(r.eq14_oracle_value, 1.0, 1e-8);
}

TEST(VerifyTheorem1, ZeroTargetPasses) {
  const AssembledProblem p = make_problem(Matrix::Identity(2, 2), Vector::Zero(2), ConstraintSet::none(2));
  const RobustnessReport r = verify_theorem1(p, 1.0);
  EXPECT_TRUE(r.pass);
  EXPECT_EQ(r.beta, 0.0);
  EXPECT_NEAR(r.eq14_value_at_gstar, 0.0, 0.0);
  EXPECT_NEAR(r.eq14_oracle_value, 0.0, 1e-8);
}

TEST(VerifyTheorem1, RandomBoxedInstances) {
  int passed = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const Eigen::Index H = 5 + static_cast<Eigen::Index>(seed % 26);
    const AssembledProblem p = random_instance(seed, {H, H + 8, 0, H / 2});
    VerifyOptions opt;
    opt.samples = 100;
    const RobustnessReport r = verify_theorem1(p, 1.0, opt);
    EXPECT_TRUE(r.pass) << "seed " << seed << ": " << (r.failures.empty() ? "" : r.failures.front());
    passed += r.pass;
  }
  EXPECT_EQ(passed, 50);
}

TEST(VerifyTheorem1, WrongBetaIsCaught) {
  VerifyOptions opt;
  opt.beta_scale = 0.5;
  const RobustnessReport r = verify_theorem1(random_instance(3, {10, 14, 0, 0}), 1.0, opt);
  EXPECT_FALSE(r.pass);
}

TEST(VerifyCorollary1, AugmentedIdentityAndDominance) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const RobustnessReport r = verify_corollary1(random_instance(200 + seed, {12, 16, 1, 4}), 0.5);
    EXPECT_TRUE(r.pass) << "seed " << seed;
    EXPECT_NEAR(r.beta_augmented, r.beta_prime, 1e-12 * r.beta_prime);
    EXPECT_GE(r.beta_prime, r.beta);
    EXPECT_LE(r.monte_carlo_max_excess, 1e-9);
  }
}

TEST(BetaSweep, StrictlyIncreasingAndShrinking) {
  const AssembledProblem p = random_instance(77, {20, 30, 0, 0});
  const RobustnessReport r = beta_sweep(p, {1e-3, 1e-2, 1e-1, 1, 10, 100, 1e3});
  ASSERT_EQ(r.monotonicity_table.size(), 7u);
  EXPECT_TRUE(r.pass);
  for (std::size_t i = 1; i < 7; ++i) {
    EXPECT_GT(r.monotonicity_table[i].beta, r.monotonicity_table[i - 1].beta);
    EXPECT_LE(r.monotonicity_table[i].g_norm, r.monotonicity_table[i - 1].g_norm);
  }
}

TEST(BetaSweep, ZeroTargetSkipsCheck) {
  const AssembledProblem p = make_problem(Matrix::Identity(3, 3), Vector::Zero(3), ConstraintSet::none(3));
  const RobustnessReport r = beta_sweep(p, {0.1, 1, 10});
  EXPECT_TRUE(r.pass);
  for (const auto& row : r.monotonicity_table) {
    EXPECT_EQ(row.beta, 0.0);
    EXPECT_EQ(row.g_norm, 0.0);
  }
}

TEST(BetaSweep, RejectsUnsortedGrid) {
  EXPECT_THROW(beta_sweep(ridge_example(), {1.0, 0.5}), Error);
  EXPECT_THROW(beta_sweep(ridge_example(), {0.0, 1.0}), Error);
}
