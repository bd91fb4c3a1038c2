#include "deepc/qp.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace deepc;

namespace {

// Enumerates every active set of a small QP and returns the KKT point that
// is primal feasible with nonnegative multipliers (unique for PD P).
std::optional<Vector> enumerate_active_sets(const QpProblem& qp) {
  const Eigen::Index n = qp.P.rows(), mi = qp.G.rows(), me = qp.E.rows();
  for (unsigned mask = 0; mask < (1u << mi); ++mask) {
    std::vector<Eigen::Index> act;
    for (Eigen::Index i = 0; i < mi; ++i)
      if (mask & (1u << i)) act.push_back(i);
    const Eigen::Index k = me + static_cast<Eigen::Index>(act.size());
    if (k > n) continue;
    Matrix K = Matrix::Zero(n + k, n + k);
    Vector rhs(n + k);
    K.topLeftCorner(n, n) = qp.P;
    rhs.head(n) = -qp.c;
    for (Eigen::Index r = 0; r < me; ++r) {
      K.block(n + r, 0, 1, n) = qp.E.row(r);
      K.block(0, n + r, n, 1) = qp.E.row(r).transpose();
      rhs(n + r) = qp.f(r);
    }
    for (std::size_t j = 0; j < act.size(); ++j) {
      const Eigen::Index r = me + static_cast<Eigen::Index>(j);
      K.block(n + r, 0, 1, n) = qp.G.row(act[j]);
      K.block(0, n + r, n, 1) = qp.G.row(act[j]).transpose();
      rhs(n + r) = qp.h(act[j]);
    }
    Eigen::FullPivLU<Matrix> lu(K);
    if (!lu.isInvertible()) continue;
    const Vector sol = lu.solve(rhs);
    const Vector x = sol.head(n);
    bool ok = true;
    for (std::size_t j = 0; j < act.size(); ++j) ok = ok && sol(n + me + static_cast<Eigen::Index>(j)) >= -1e-10;
    if (mi > 0) ok = ok && ((qp.G * x - qp.h).array() <= 1e-10).all();
    if (ok) return x;
  }
  return std::nullopt;
}

QpProblem random_qp(std::mt19937_64& rng, Eigen::Index n, Eigen::Index me, Eigen::Index mi) {
  std::normal_distribution<double> nd;
  QpProblem qp;
  Matrix X(n + 2, n);
  for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = nd(rng);
  qp.P = X.transpose() * X + 0.1 * Matrix::Identity(n, n);
  qp.c.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) qp.c(i) = 3.0 * nd(rng);
  // feasible by construction around x0
  Vector x0(n);
  for (Eigen::Index i = 0; i < n; ++i) x0(i) = nd(rng);
  qp.E.resize(me, n);
  for (Eigen::Index i = 0; i < qp.E.size(); ++i) qp.E.data()[i] = nd(rng);
  qp.f = qp.E * x0;
  qp.G.resize(mi, n);
  for (Eigen::Index i = 0; i < qp.G.size(); ++i) qp.G.data()[i] = nd(rng);
  qp.h = qp.G * x0 + Vector::Constant(mi, 0.1);
  return qp;
}

}  // namespace

TEST(DualActiveSetQp, MatchesActiveSetEnumeration) {
  std::mt19937_64 rng(2024);
  int checked = 0;
  for (int trial = 0; trial < 300; ++trial) {
    const Eigen::Index n = 2 + trial % 4;
    const Eigen::Index me = trial % 2;
    const Eigen::Index mi = 1 + trial % 7;
    const QpProblem qp = random_qp(rng, n, me, mi);
    const auto ref = enumerate_active_sets(qp);
    ASSERT_TRUE(ref.has_value());
    const QpResult res = solve_dense_qp(qp);
    ASSERT_EQ(res.status, SolveStatus::solved) << "trial " << trial;
    EXPECT_LT((res.x - *ref).lpNorm<Eigen::Infinity>(), 1e-8) << "trial " << trial;
    EXPECT_LT(kkt_residual(qp, res.x, res.eq_dual, res.ineq_dual).max(), 1e-9) << "trial " << trial;
    ++checked;
  }
  EXPECT_EQ(checked, 300);
}

TEST(DualActiveSetQp, UnconstrainedIsNewtonStep) {
  QpProblem qp;
  qp.P = Matrix::Identity(2, 2) * 4.0;
  qp.c = Vector(2);
  qp.c << -2.0, 0.0;
  const QpResult res = solve_dense_qp(qp);
  ASSERT_EQ(res.status, SolveStatus::solved);
  EXPECT_NEAR(res.x(0), 0.5, 1e-15);
  EXPECT_NEAR(res.x(1), 0.0, 1e-15);
}

TEST(DualActiveSetQp, DetectsInfeasibleBoxes) {
  QpProblem qp;
  qp.P = Matrix::Identity(1, 1);
  qp.c = Vector::Zero(1);
  qp.G.resize(2, 1);
  qp.G << 1.0, -1.0;
  qp.h.resize(2);
  qp.h << -1.0, -1.0;  // x <= -1 and x >= 1
  EXPECT_EQ(solve_dense_qp(qp).status, SolveStatus::infeasible);
}

TEST(DualActiveSetQp, DetectsInconsistentEqualities) {
  QpProblem qp;
  qp.P = Matrix::Identity(2, 2);
  qp.c = Vector::Zero(2);
  qp.E.resize(2, 2);
  qp.E << 1.0, 1.0, 2.0, 2.0;
  qp.f.resize(2);
  qp.f << 1.0, 3.0;
  EXPECT_EQ(solve_dense_qp(qp).status, SolveStatus::infeasible);
}

TEST(DualActiveSetQp, DependentEqualitiesAreTolerated) {
  QpProblem qp;
  qp.P = Matrix::Identity(2, 2);
  qp.c = Vector::Zero(2);
  qp.E.resize(2, 2);
  qp.E << 1.0, 1.0, 2.0, 2.0;
  qp.f.resize(2);
  qp.f << 1.0, 2.0;
  const QpResult res = solve_dense_qp(qp);
  ASSERT_EQ(res.status, SolveStatus::solved);
  EXPECT_NEAR(res.x(0), 0.5, 1e-12);
  EXPECT_NEAR(res.x(1), 0.5, 1e-12);
}

TEST(DualActiveSetQp, RejectsIndefiniteHessian) {
  QpProblem qp;
  qp.P = -Matrix::Identity(2, 2);
  qp.c = Vector::Zero(2);
  EXPECT_THROW(DualActiveSetQp{qp}, Error);
}

TEST(DualActiveSetQp, Deterministic) {
  std::mt19937_64 rng(5);
  const QpProblem qp = random_qp(rng, 20, 3, 40);
  const QpResult a = solve_dense_qp(qp);
  const QpResult b = solve_dense_qp(qp);
  ASSERT_EQ(a.status, SolveStatus::solved);
  EXPECT_EQ(a.x, b.x);
  EXPECT_EQ(a.ineq_dual, b.ineq_dual);
}
