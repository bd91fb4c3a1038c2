#pragma once

#include "deepc/common.hpp"
#include "deepc/hankel.hpp"
#include "deepc/qp.hpp"

#include <limits>
#include <optional>
#include <sstream>

namespace deepc {

struct DeePCWeights {
  Matrix R;  // mN x mN, positive definite
  Matrix Q;  // pN x pN, positive semidefinite
  double lambda_y = 1.0;
  double lambda_g = 0.0;
  Vector r;  // pN reference

  void validate(Eigen::Index mN, Eigen::Index pN) const {
    if (R.rows() != mN || R.cols() != mN) throw Error(ErrorCode::invalid_weights, "R must be mN x mN");
    if (Q.rows() != pN || Q.cols() != pN) throw Error(ErrorCode::invalid_weights, "Q must be pN x pN");
    if (r.size() != pN) throw Error(ErrorCode::invalid_weights, "reference must have length pN");
    if (!(lambda_y > 0.0)) throw Error(ErrorCode::invalid_weights, "lambda_y must be positive");
    if (!(lambda_g >= 0.0)) throw Error(ErrorCode::invalid_weights, "lambda_g must be nonnegative");
    const double rscale = std::max(1.0, R.cwiseAbs().maxCoeff());
    if ((R - R.transpose()).norm() > 1e-12 * rscale) throw Error(ErrorCode::invalid_weights, "R is not symmetric");
    if (min_eigenvalue(R) <= 1e-12 * rscale) throw Error(ErrorCode::invalid_weights, "R is not positive definite");
    const double qscale = std::max(1.0, Q.cwiseAbs().maxCoeff());
    if ((Q - Q.transpose()).norm() > 1e-12 * qscale) throw Error(ErrorCode::invalid_weights, "Q is not symmetric");
    if (min_eigenvalue(Q) < -1e-10 * qscale) throw Error(ErrorCode::invalid_weights, "Q is not positive semidefinite");
  }
};

/// Inequality rows G g <= q and equality rows E g = f.
struct ConstraintSet {
  Matrix G;
  Vector q;
  Matrix E;
  Vector f;

  static ConstraintSet none(Eigen::Index cols) {
    ConstraintSet c;
    c.G.resize(0, cols);
    c.q.resize(0);
    c.E.resize(0, cols);
    c.f.resize(0);
    return c;
  }

  void validate(Eigen::Index cols) const {
    if (G.rows() != q.size() || E.rows() != f.size()) throw Error(ErrorCode::invalid_input, "constraint row counts disagree");
    if ((G.rows() > 0 && G.cols() != cols) || (E.rows() > 0 && E.cols() != cols)) {
      throw Error(ErrorCode::invalid_input, "constraint column count differs from H");
    }
  }
};

/// Per-channel bounds, replicated over every step of the horizon.
/// Infinite entries produce no rows.
struct BoxBounds {
  Vector lower;
  Vector upper;
};

struct AssembledProblem {
  Matrix A;
  Vector b;
  ConstraintSet constraints;
  // Links back to the data; empty for generic (A, b) instances.
  Matrix U_f;
  Matrix Y_f;
  Eigen::Index m = 0;
  Eigen::Index p = 0;

  Eigen::Index columns() const { return A.cols(); }
};

/// Wraps a plain least-squares instance ||A g - b||^2 over a constraint set.
inline AssembledProblem make_problem(Matrix A, Vector b, ConstraintSet constraints) {
  if (A.rows() != b.size()) throw Error(ErrorCode::invalid_input, "A and b disagree in row count");
  constraints.validate(A.cols());
  if (constraints.G.rows() == 0) constraints.G.resize(0, A.cols()), constraints.q.resize(0);
  if (constraints.E.rows() == 0) constraints.E.resize(0, A.cols()), constraints.f.resize(0);
  AssembledProblem prob;
  prob.A = std::move(A);
  prob.b = std::move(b);
  prob.constraints = std::move(constraints);
  return prob;
}

namespace detail {

inline void append_box_rows(const Matrix& block, const BoxBounds& box, Eigen::Index width,
                            std::vector<Vector>& rows, std::vector<double>& rhs) {
  if (box.lower.size() != width || box.upper.size() != width) {
    throw Error(ErrorCode::invalid_input, "box bounds must have one entry per channel");
  }
  const Eigen::Index steps = block.rows() / width;
  for (Eigen::Index t = 0; t < steps; ++t) {
    for (Eigen::Index ch = 0; ch < width; ++ch) {
      const Eigen::Index row = t * width + ch;
      if (std::isfinite(box.upper(ch))) {
        rows.emplace_back(block.row(row).transpose());
        rhs.push_back(box.upper(ch));
      }
      if (std::isfinite(box.lower(ch))) {
        rows.emplace_back(-block.row(row).transpose());
        rhs.push_back(-box.lower(ch));
      }
    }
  }
}

}  // namespace detail

/// Builds A = [sqrt(lambda_y) Y_p; R^{1/2} U_f; Q^{1/2} Y_f] and
/// b = [sqrt(lambda_y) y_ini; 0; Q^{1/2} r] with symmetric square roots,
/// plus the equality block U_p g = u_ini and any box rows.
inline AssembledProblem assemble(const HankelPartition& part, const DeePCWeights& weights, const Vector& u_ini,
                                 const Vector& y_ini, const std::optional<BoxBounds>& box_u = std::nullopt,
                                 const std::optional<BoxBounds>& box_y = std::nullopt) {
  const Eigen::Index m = part.m(), p = part.p(), H = part.columns();
  const Eigen::Index mN = m * part.horizon, pN = p * part.horizon;
  weights.validate(mN, pN);
  if (u_ini.size() != part.U_p.rows()) throw Error(ErrorCode::invalid_input, "u_ini has wrong length");
  if (y_ini.size() != part.Y_p.rows()) throw Error(ErrorCode::invalid_input, "y_ini has wrong length");

  const double sy = std::sqrt(weights.lambda_y);
  const Matrix fr = psd_sqrt(weights.R);
  const Matrix fq = psd_sqrt(weights.Q);
  const Eigen::Index rows = part.Y_p.rows() + mN + pN;

  AssembledProblem prob;
  prob.A.resize(rows, H);
  prob.A << sy * part.Y_p, fr * part.U_f, fq * part.Y_f;
  prob.b.resize(rows);
  prob.b << sy * y_ini, Vector::Zero(mN), fq * weights.r;

  prob.constraints.E = part.U_p;
  prob.constraints.f = u_ini;
  std::vector<Vector> g_rows;
  std::vector<double> q_rhs;
  if (box_u) detail::append_box_rows(part.U_f, *box_u, m, g_rows, q_rhs);
  if (box_y) detail::append_box_rows(part.Y_f, *box_y, p, g_rows, q_rhs);
  prob.constraints.G.resize(static_cast<Eigen::Index>(g_rows.size()), H);
  prob.constraints.q.resize(static_cast<Eigen::Index>(q_rhs.size()));
  for (std::size_t i = 0; i < g_rows.size(); ++i) {
    prob.constraints.G.row(static_cast<Eigen::Index>(i)) = g_rows[i].transpose();
    prob.constraints.q(static_cast<Eigen::Index>(i)) = q_rhs[i];
  }
  prob.U_f = part.U_f;
  prob.Y_f = part.Y_f;
  prob.m = m;
  prob.p = p;
  return prob;
}

struct Solution {
  Vector g;
  Vector u_plan;
  Vector y_plan;
  double objective = 0.0;
  double lambda_g = 0.0;
  double beta = 0.0;
  double beta_prime = 0.0;
  Vector ineq_dual;
  Vector eq_dual;
  SolveStatus status = SolveStatus::infeasible;
  KktResidual kkt;
};

/// Radius of the Frobenius ball on A certified by g*:
/// lambda_g ||g|| / ||A g - b||, or lambda_g ||g|| when the residual vanishes.
inline double compute_beta(const Vector& g, const Matrix& A, const Vector& b, double lambda_g, double tol = 1e-12) {
  const double res = (A * g - b).norm();
  const double num = lambda_g * g.norm();
  return res > tol ? num / res : num;
}

/// Radius of the Frobenius ball on [A b].
inline double compute_beta_prime(const Vector& g, const Matrix& A, const Vector& b, double lambda_g,
                                 double tol = 1e-12) {
  const double res = (A * g - b).norm();
  const double num = lambda_g * std::sqrt(g.squaredNorm() + 1.0);
  return res > tol ? num / res : num;
}

/// ||A g - b|| + beta ||g||.
inline double robust_objective(const Vector& g, const Matrix& A, const Vector& b, double beta) {
  return (A * g - b).norm() + beta * g.norm();
}

inline double regularized_objective(const Vector& g, const Matrix& A, const Vector& b, double lambda_g) {
  return (A * g - b).squaredNorm() + lambda_g * g.squaredNorm();
}

/// The QP data for ||A g - b||^2 + lambda_g ||g||^2 over the constraint set.
inline QpProblem to_qp(const AssembledProblem& prob, double lambda_g) {
  const Eigen::Index H = prob.columns();
  QpProblem qp;
  qp.P = 2.0 * (prob.A.transpose() * prob.A);
  qp.P.diagonal().array() += 2.0 * lambda_g;
  qp.c = -2.0 * prob.A.transpose() * prob.b;
  qp.E = prob.constraints.E.rows() > 0 ? prob.constraints.E : Matrix(0, H);
  qp.f = prob.constraints.f;
  qp.G = prob.constraints.G.rows() > 0 ? prob.constraints.G : Matrix(0, H);
  qp.h = prob.constraints.q;
  return qp;
}

/// Scaled KKT residuals of the regularized problem, evaluated with
/// matrix-vector products only. Same scaling as the generic QP version.
inline KktResidual kkt_residual(const AssembledProblem& prob, double lambda_g, const Vector& g, const Vector& nu,
                                const Vector& mu) {
  KktResidual r;
  const Vector pg = 2.0 * (prob.A.transpose() * (prob.A * g)) + 2.0 * lambda_g * g;
  const Vector c = -2.0 * (prob.A.transpose() * prob.b);
  Vector grad = pg + c;
  const auto& cs = prob.constraints;
  if (cs.E.rows() > 0) grad += cs.E.transpose() * nu;
  if (cs.G.rows() > 0) grad += cs.G.transpose() * mu;
  const double scale = std::max({1.0, pg.lpNorm<Eigen::Infinity>(), c.lpNorm<Eigen::Infinity>()});
  r.stationarity = grad.lpNorm<Eigen::Infinity>() / scale;
  if (cs.E.rows() > 0) {
    r.equality = (cs.E * g - cs.f).lpNorm<Eigen::Infinity>() / std::max(1.0, cs.f.lpNorm<Eigen::Infinity>());
  }
  if (cs.G.rows() > 0) {
    const Vector slack = cs.G * g - cs.q;
    const double s = std::max(1.0, cs.q.lpNorm<Eigen::Infinity>());
    r.inequality = std::max(0.0, slack.maxCoeff()) / s;
    r.complementarity =
        (mu.array() * slack.array()).abs().maxCoeff() / (s * std::max(1.0, mu.lpNorm<Eigen::Infinity>()));
    r.dual = std::max(0.0, -mu.minCoeff());
  }
  return r;
}

namespace detail {

inline void finish_solution(const AssembledProblem& prob, double lambda_g, Solution& sol) {
  sol.lambda_g = lambda_g;
  const double branch_tol = 1e-12 * std::max(1.0, prob.b.norm());
  sol.objective = regularized_objective(sol.g, prob.A, prob.b, lambda_g);
  sol.beta = compute_beta(sol.g, prob.A, prob.b, lambda_g, branch_tol);
  sol.beta_prime = compute_beta_prime(sol.g, prob.A, prob.b, lambda_g, branch_tol);
  if (prob.U_f.size() > 0) sol.u_plan = prob.U_f * sol.g;
  if (prob.Y_f.size() > 0) sol.y_plan = prob.Y_f * sol.g;
  sol.kkt = kkt_residual(prob, lambda_g, sol.g, sol.eq_dual, sol.ineq_dual);
}

/// Minimum-norm minimizer of ||A g - b|| subject to E g = f (lambda_g = 0,
/// no inequalities).
inline Vector min_norm_equality_ls(const Matrix& A, const Vector& b, const Matrix& E, const Vector& f) {
  const Eigen::Index H = A.cols();
  if (E.rows() == 0) return min_norm_solve(A, b, 1e-12);
  // g = g_p + Z z with g_p in row(E), Z an orthonormal basis of null(E)
  Eigen::BDCSVD<Matrix> svd(E, Eigen::ComputeFullV);
  const Vector& s = svd.singularValues();
  Eigen::Index rank = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s(i) > 1e-12 * s(0)) ++rank;
  }
  const Vector gp = min_norm_solve(E, f, 1e-12);
  const Matrix Z = svd.matrixV().rightCols(H - rank);
  if (Z.cols() == 0) return gp;
  const Vector z = min_norm_solve(A * Z, b - A * gp, 1e-12);
  return gp + Z * z;
}

}  // namespace detail

/// Minimizes ||A g - b||^2 + lambda_g ||g||^2 over the constraint set.
///
/// lambda_g = 0 is accepted: without inequality rows the minimum-norm
/// minimizer is returned; with inequality rows a 1e-12 relative Tikhonov
/// term keeps the Hessian definite.
inline Solution solve_qp(const AssembledProblem& prob, double lambda_g, double tol = 1e-8) {
  if (!(lambda_g >= 0.0)) throw Error(ErrorCode::invalid_weights, "lambda_g must be nonnegative");
  prob.constraints.validate(prob.columns());
  Solution sol;
  const Eigen::Index H = prob.columns();
  const Eigen::Index n_ineq = prob.constraints.G.rows();
  const Eigen::Index n_eq = prob.constraints.E.rows();

  if (lambda_g == 0.0 && n_ineq == 0) {
    sol.g = detail::min_norm_equality_ls(prob.A, prob.b, prob.constraints.E, prob.constraints.f);
    const double s = std::max(1.0, prob.constraints.f.size() > 0 ? prob.constraints.f.lpNorm<Eigen::Infinity>() : 0.0);
    if (n_eq > 0 && (prob.constraints.E * sol.g - prob.constraints.f).lpNorm<Eigen::Infinity>() > 1e-8 * s) {
      sol.status = SolveStatus::infeasible;
      sol.eq_dual = Vector::Zero(n_eq);
      sol.ineq_dual = Vector::Zero(0);
      detail::finish_solution(prob, lambda_g, sol);
      return sol;
    }
    // equality multipliers from stationarity: E' nu = -(P g + c)
    const QpProblem qp = to_qp(prob, 0.0);
    sol.eq_dual = n_eq > 0 ? min_norm_solve(prob.constraints.E.transpose(), -(qp.P * sol.g + qp.c), 1e-12)
                           : Vector(Vector::Zero(0));
    sol.ineq_dual = Vector::Zero(0);
    sol.status = SolveStatus::solved;
    detail::finish_solution(prob, lambda_g, sol);
    return sol;
  }

  QpProblem qp = to_qp(prob, lambda_g);
  if (lambda_g == 0.0) {
    const double shift = 1e-12 * std::max(1.0, qp.P.diagonal().maxCoeff());
    qp.P.diagonal().array() += shift;
  }
  DualActiveSetQp engine(qp, std::min(tol, 1e-10));
  const QpResult res = engine.solve();
  sol.g = res.x.size() == H ? res.x : Vector(Vector::Zero(H));
  sol.eq_dual = res.eq_dual;
  sol.ineq_dual = res.ineq_dual;
  sol.status = res.status;
  detail::finish_solution(prob, lambda_g, sol);
  return sol;
}

/// Precomputed closed-form map g* = M [2 A'b; f] for a fixed A, equality
/// block and lambda_g > 0. M and Mbar are the top and bottom blocks of
/// the inverse of [2(A'A + lambda_g I), E'; E, 0].
class ClosedFormGain {
 public:
  ClosedFormGain(const Matrix& A, const Matrix& E, double lambda_g) : lambda_g_(lambda_g) {
    if (!(lambda_g > 0.0)) throw Error(ErrorCode::invalid_weights, "closed form requires lambda_g > 0");
    const Eigen::Index H = A.cols();
    if (E.rows() > 0 && E.cols() != H) throw Error(ErrorCode::invalid_input, "equality block width differs from H");
    Matrix hs = 2.0 * (A.transpose() * A);
    hs.diagonal().array() += 2.0 * lambda_g;
    Eigen::LLT<Matrix> hchol(hs);
    if (hchol.info() != Eigen::Success) throw Error(ErrorCode::singular_system, "regularized Gram matrix is not definite");
    const Matrix hinv = hchol.solve(Matrix::Identity(H, H));
    const Eigen::Index neq = E.rows();
    M_.resize(H, H + neq);
    Mbar_.resize(neq, H + neq);
    if (neq == 0) {
      M_ = hinv;
      rcond_ = hchol.rcond();
      return;
    }
    const Matrix hinv_et = hinv * E.transpose();
    Eigen::LLT<Matrix> schur(E * hinv_et);
    rcond_ = schur.info() == Eigen::Success ? schur.rcond() : 0.0;
    if (schur.info() != Eigen::Success || rcond_ < 1e-14) {
      std::ostringstream os;
      os << "KKT matrix is singular (Schur complement condition estimate "
         << (rcond_ > 0.0 ? 1.0 / rcond_ : std::numeric_limits<double>::infinity()) << ")";
      throw Error(ErrorCode::singular_system, os.str());
    }
    const Matrix sinv = schur.solve(Matrix::Identity(neq, neq));
    const Matrix k = hinv_et * sinv;  // H x neq
    M_.leftCols(H) = hinv - k * hinv_et.transpose();
    M_.rightCols(neq) = k;
    Mbar_.leftCols(H) = k.transpose();
    Mbar_.rightCols(neq) = -sinv;
  }

  const Matrix& M() const { return M_; }
  const Matrix& Mbar() const { return Mbar_; }
  double lambda_g() const { return lambda_g_; }
  /// Reciprocal condition estimate of the factor that decides singularity.
  double rcond() const { return rcond_; }

  Vector apply(const Matrix& A, const Vector& b, const Vector& f) const {
    return M_ * stacked_rhs(A, b, f);
  }

  Vector equality_dual(const Matrix& A, const Vector& b, const Vector& f) const {
    return Mbar_ * stacked_rhs(A, b, f);
  }

 private:
  Vector stacked_rhs(const Matrix& A, const Vector& b, const Vector& f) const {
    Vector rhs(M_.cols());
    rhs.head(A.cols()) = 2.0 * A.transpose() * b;
    rhs.tail(M_.cols() - A.cols()) = f;
    return rhs;
  }

  Matrix M_;
  Matrix Mbar_;
  double lambda_g_;
  double rcond_ = 0.0;
};

/// Closed-form minimizer for problems whose inequality rows are absent or
/// inactive at the result. Throws if an inequality row is violated.
inline Solution closed_form(const AssembledProblem& prob, double lambda_g, const ClosedFormGain* cached = nullptr) {
  prob.constraints.validate(prob.columns());
  std::optional<ClosedFormGain> local;
  if (cached == nullptr) {
    local.emplace(prob.A, prob.constraints.E, lambda_g);
    cached = &*local;
  }
  Solution sol;
  sol.g = cached->apply(prob.A, prob.b, prob.constraints.f);
  sol.eq_dual = cached->equality_dual(prob.A, prob.b, prob.constraints.f);
  sol.ineq_dual = Vector::Zero(prob.constraints.G.rows());
  if (prob.constraints.G.rows() > 0) {
    const Vector slack = prob.constraints.G * sol.g - prob.constraints.q;
    const double s = std::max(1.0, prob.constraints.q.lpNorm<Eigen::Infinity>());
    if (slack.maxCoeff() > 1e-8 * s) {
      throw Error(ErrorCode::invalid_input, "inequality constraints are active at the closed-form solution");
    }
  }
  sol.status = SolveStatus::solved;
  detail::finish_solution(prob, lambda_g, sol);
  return sol;
}

}  // namespace deepc
