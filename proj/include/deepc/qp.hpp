#pragma once

#include "deepc/common.hpp"

#include <limits>

namespace deepc {

enum class SolveStatus { solved, infeasible, max_iterations };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::solved: return "solved";
    case SolveStatus::infeasible: return "infeasible";
    case SolveStatus::max_iterations: return "max-iterations";
  }
  return "unknown";
}

/// min 1/2 x'Px + c'x  s.t.  E x = f,  G x <= h.
struct QpProblem {
  Matrix P;
  Vector c;
  Matrix E;
  Vector f;
  Matrix G;
  Vector h;
};

struct QpResult {
  Vector x;
  Vector eq_dual;    // multipliers of E x = f, sign convention + nu'(Ex - f)
  Vector ineq_dual;  // multipliers of G x <= h, nonnegative
  SolveStatus status = SolveStatus::infeasible;
  int iterations = 0;
};

struct KktResidual {
  double stationarity = 0.0;
  double equality = 0.0;
  double inequality = 0.0;
  double complementarity = 0.0;
  double dual = 0.0;

  double max() const { return std::max({stationarity, equality, inequality, complementarity, dual}); }
};

/// Scaled KKT residuals. Each entry is divided by the magnitude of the
/// quantities it balances (floored at 1), so the same tolerance applies to
/// small test problems and to full-size controller instances.
inline KktResidual kkt_residual(const QpProblem& qp, const Vector& x, const Vector& nu, const Vector& mu) {
  KktResidual r;
  const Vector px = qp.P * x;
  Vector grad = px + qp.c;
  double scale = std::max({1.0, px.lpNorm<Eigen::Infinity>(), qp.c.lpNorm<Eigen::Infinity>()});
  if (qp.E.rows() > 0) grad += qp.E.transpose() * nu;
  if (qp.G.rows() > 0) grad += qp.G.transpose() * mu;
  r.stationarity = grad.lpNorm<Eigen::Infinity>() / scale;
  if (qp.E.rows() > 0) {
    const double s = std::max(1.0, qp.f.lpNorm<Eigen::Infinity>());
    r.equality = (qp.E * x - qp.f).lpNorm<Eigen::Infinity>() / s;
  }
  if (qp.G.rows() > 0) {
    const Vector slack = qp.G * x - qp.h;
    const double s = std::max(1.0, qp.h.lpNorm<Eigen::Infinity>());
    r.inequality = std::max(0.0, slack.maxCoeff()) / s;
    r.complementarity = (mu.array() * slack.array()).abs().maxCoeff() / (s * std::max(1.0, mu.lpNorm<Eigen::Infinity>()));
    r.dual = std::max(0.0, -mu.minCoeff());
  }
  return r;
}

/// Dual active-set method for strictly convex QPs (Goldfarb-Idnani family).
///
/// Starts from the equality-constrained minimizer and repeatedly adds the
/// most violated inequality, dropping active constraints whose multiplier
/// would turn negative. Every active-set change is followed by an exact
/// re-solve of the reduced KKT system, so the final iterate carries no
/// accumulated step error. Deterministic for identical inputs.
class DualActiveSetQp {
 public:
  explicit DualActiveSetQp(const QpProblem& qp, double tol = 1e-10) : qp_(qp), tol_(tol) {
    const Eigen::Index n = qp_.P.rows();
    if (qp_.P.cols() != n || qp_.c.size() != n) throw Error(ErrorCode::invalid_input, "P/c dimension mismatch");
    if (qp_.E.rows() > 0 && (qp_.E.cols() != n || qp_.f.size() != qp_.E.rows())) {
      throw Error(ErrorCode::invalid_input, "E/f dimension mismatch");
    }
    if (qp_.G.rows() > 0 && (qp_.G.cols() != n || qp_.h.size() != qp_.G.rows())) {
      throw Error(ErrorCode::invalid_input, "G/h dimension mismatch");
    }
    if (qp_.E.rows() == 0) qp_.E.resize(0, n), qp_.f.resize(0);
    if (qp_.G.rows() == 0) qp_.G.resize(0, n), qp_.h.resize(0);
    chol_.compute(qp_.P);
    if (chol_.info() != Eigen::Success) throw Error(ErrorCode::invalid_input, "QP Hessian is not positive definite");
  }

  QpResult solve(int max_iterations = -1) {
    const Eigen::Index n = qp_.P.rows();
    const Eigen::Index n_ineq = qp_.G.rows();
    if (max_iterations < 0) max_iterations = static_cast<int>(10 * (n + n_ineq) + 100);

    QpResult res;
    res.eq_dual = Vector::Zero(qp_.E.rows());
    res.ineq_dual = Vector::Zero(n_ineq);

    if (!select_equalities()) {
      res.status = SolveStatus::infeasible;
      res.x = Vector::Zero(n);
      return res;
    }
    active_ineq_.clear();
    refactor();
    Vector w;  // multipliers of the active rows, equalities first
    Vector x = reduced_solve(w);
    if (!equalities_consistent(x)) {
      res.status = SolveStatus::infeasible;
      res.x = x;
      return res;
    }

    int iter = 0;
    while (true) {
      // most violated inactive inequality
      Eigen::Index p = -1;
      double worst = 0.0;
      for (Eigen::Index i = 0; i < n_ineq; ++i) {
        if (is_active(i)) continue;
        const double s = qp_.G.row(i).dot(x) - qp_.h(i);
        const double thresh = tol_ * std::max(1.0, std::abs(qp_.h(i)));
        if (s > thresh && s > worst) {
          worst = s;
          p = i;
        }
      }
      if (p < 0) {
        res.status = SolveStatus::solved;
        break;
      }
      if (iter >= max_iterations) {
        res.status = SolveStatus::max_iterations;
        break;
      }

      const Vector np = qp_.G.row(p).transpose();
      bool added = false;
      while (!added) {
        if (++iter > max_iterations) break;
        Vector dw;
        const Vector dx = step_direction(np, dw);
        const double curvature = np.dot(dx);  // <= 0
        const double ref = np.dot(chol_.solve(np));
        const bool primal_step = dx.norm() > 1e-12 * std::max(1.0, chol_.solve(np).norm()) && -curvature > 1e-14 * ref;

        const double sp = np.dot(x) - qp_.h(p);
        double t1 = std::numeric_limits<double>::infinity();
        if (primal_step) t1 = sp / -curvature;

        double t2 = std::numeric_limits<double>::infinity();
        Eigen::Index block = -1;
        const Eigen::Index neq = static_cast<Eigen::Index>(eq_rows_.size());
        for (Eigen::Index k = 0; k < static_cast<Eigen::Index>(active_ineq_.size()); ++k) {
          const double d = dw(neq + k);
          if (d < 0.0) {
            const double t = -w(neq + k) / d;
            if (t < t2) {
              t2 = t;
              block = k;
            }
          }
        }

        if (!std::isfinite(t1) && !std::isfinite(t2)) {
          res.status = SolveStatus::infeasible;
          res.x = x;
          scatter_duals(w, res);
          res.iterations = iter;
          return res;
        }

        if (t1 <= t2) {
          x += t1 * dx;
          w += t1 * dw;
          active_ineq_.push_back(p);
          refactor();
          added = true;
        } else {
          if (primal_step) x += t2 * dx;
          w += t2 * dw;
          // drop the blocking constraint; its multiplier hit zero
          const Eigen::Index pos = neq + block;
          active_ineq_.erase(active_ineq_.begin() + block);
          Vector w_new(w.size() - 1);
          w_new << w.head(pos), w.tail(w.size() - pos - 1);
          w = std::move(w_new);
          refactor();
        }
      }
      if (!added) {
        res.status = SolveStatus::max_iterations;
        break;
      }
      // exact re-solve on the new working set
      x = reduced_solve(w);
      // any active inequality whose multiplier went negative through
      // round-off is released and the loop continues
      bool released = true;
      while (released) {
        released = false;
        const Eigen::Index neq = static_cast<Eigen::Index>(eq_rows_.size());
        for (Eigen::Index k = 0; k < static_cast<Eigen::Index>(active_ineq_.size()); ++k) {
          if (w(neq + k) < -tol_) {
            active_ineq_.erase(active_ineq_.begin() + k);
            refactor();
            x = reduced_solve(w);
            released = true;
            break;
          }
        }
      }
    }

    res.x = x;
    res.iterations = iter;
    scatter_duals(w, res);
    return res;
  }

 private:
  bool is_active(Eigen::Index i) const {
    return std::find(active_ineq_.begin(), active_ineq_.end(), i) != active_ineq_.end();
  }

  /// Picks a linearly independent subset of the equality rows.
  bool select_equalities() {
    eq_rows_.clear();
    const Eigen::Index neq = qp_.E.rows();
    if (neq == 0) return true;
    Eigen::ColPivHouseholderQR<Matrix> qr(qp_.E.transpose());
    qr.setThreshold(1e-12);
    const Eigen::Index r = qr.rank();
    for (Eigen::Index k = 0; k < r; ++k) eq_rows_.push_back(qr.colsPermutation().indices()(k));
    std::sort(eq_rows_.begin(), eq_rows_.end());
    return true;
  }

  bool equalities_consistent(const Vector& x) const {
    if (qp_.E.rows() == 0) return true;
    const double s = std::max(1.0, qp_.f.lpNorm<Eigen::Infinity>());
    return (qp_.E * x - qp_.f).lpNorm<Eigen::Infinity>() <= 1e-8 * s;
  }

  Matrix active_normals() const {
    const Eigen::Index n = qp_.P.rows();
    Matrix N(static_cast<Eigen::Index>(eq_rows_.size() + active_ineq_.size()), n);
    Eigen::Index r = 0;
    for (auto i : eq_rows_) N.row(r++) = qp_.E.row(i);
    for (auto i : active_ineq_) N.row(r++) = qp_.G.row(i);
    return N;
  }

  Vector active_rhs() const {
    Vector d(static_cast<Eigen::Index>(eq_rows_.size() + active_ineq_.size()));
    Eigen::Index r = 0;
    for (auto i : eq_rows_) d(r++) = qp_.f(i);
    for (auto i : active_ineq_) d(r++) = qp_.h(i);
    return d;
  }

  void refactor() {
    N_ = active_normals();
    if (N_.rows() == 0) return;
    PinvNt_ = chol_.solve(N_.transpose());
    schur_.compute(N_ * PinvNt_);
  }

  /// Minimizer of 1/2 x'Px + c'x with the active rows held at equality;
  /// `w` receives their multipliers.
  Vector reduced_solve(Vector& w) const {
    const Vector x0 = -chol_.solve(qp_.c);
    if (N_.rows() == 0) {
      w.resize(0);
      return x0;
    }
    // N x = d with x = x0 - P^{-1} N' w  =>  (N P^{-1} N') w = N x0 - d
    w = schur_.solve(N_ * x0 - active_rhs());
    // one step of iterative refinement
    Vector x = x0 - PinvNt_ * w;
    const Vector corr = schur_.solve(N_ * x - active_rhs());
    w += corr;
    x -= PinvNt_ * corr;
    return x;
  }

  /// Primal/dual directions for raising the multiplier of row `np`.
  Vector step_direction(const Vector& np, Vector& dw) const {
    const Vector pinv_np = chol_.solve(np);
    if (N_.rows() == 0) {
      dw.resize(0);
      return -pinv_np;
    }
    dw = -schur_.solve(N_ * pinv_np);
    return -(pinv_np + PinvNt_ * dw);
  }

  void scatter_duals(const Vector& w, QpResult& res) const {
    Eigen::Index r = 0;
    for (auto i : eq_rows_) res.eq_dual(i) = w(r++);
    for (auto i : active_ineq_) res.ineq_dual(i) = std::max(0.0, w(r++));
  }

  QpProblem qp_;
  double tol_;
  Eigen::LLT<Matrix> chol_;
  std::vector<Eigen::Index> eq_rows_;
  std::vector<Eigen::Index> active_ineq_;
  Matrix N_;
  Matrix PinvNt_;
  Eigen::LDLT<Matrix> schur_;
};

inline QpResult solve_dense_qp(const QpProblem& qp, double tol = 1e-10) {
  return DualActiveSetQp(qp, tol).solve();
}

}  // namespace deepc
