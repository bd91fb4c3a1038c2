#pragma once

#include "deepc/common.hpp"
#include "deepc/solver.hpp"

#include <cstdint>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace deepc {

/// Maximizer of ||(A + D) g - b|| over ||D||_F <= beta.
///
/// D* = beta (Ag - b) g' / (||Ag - b|| ||g||). When Ag = b the direction
/// is the first standard basis vector; when g = 0 the disturbance has no
/// effect and D* = 0.
inline Matrix worst_case_disturbance(const Vector& g, const Matrix& A, const Vector& b, double beta) {
  Matrix out = Matrix::Zero(A.rows(), A.cols());
  const double gn = g.norm();
  if (gn == 0.0 || beta == 0.0) return out;
  Vector dir = A * g - b;
  const double rn = dir.norm();
  if (rn > 0.0) {
    dir /= rn;
  } else {
    dir = Vector::Zero(A.rows());
    dir(0) = 1.0;
  }
  out = beta * dir * g.transpose() / gn;
  return out;
}

struct OracleResult {
  Vector g;
  double value = 0.0;
  double gap_bound = 0.0;  // certified: value - optimum <= gap_bound
  int newton_steps = 0;
};

namespace detail {

/// Interior-point solver for
///   min t1 + beta t2  s.t.  ||A g - b|| <= t1,  ||g|| <= t2,  G g <= q,  E g = f
/// with the standard log barriers for second-order and linear cones.
class RobustLsBarrier {
 public:
  RobustLsBarrier(const Matrix& A, const Vector& b, double beta, const ConstraintSet& cs)
      : A_(A), b_(b), beta_(beta), cs_(cs), H_(A.cols()), use_t2_(beta > 0.0) {
    // g = g_part + N w with the columns of N spanning null(E)
    if (cs.E.rows() == 0) {
      g_part_ = Vector::Zero(H_);
      N_ = Matrix::Identity(H_, H_);
      return;
    }
    Eigen::JacobiSVD<Matrix> svd(cs.E, Eigen::ComputeFullV);
    const auto& sv = svd.singularValues();
    Eigen::Index rank = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i) rank += sv(i) > 1e-12 * sv(0);
    g_part_ = min_norm_solve(cs.E, cs.f, 1e-12);
    const double scale = std::max(1.0, cs.f.lpNorm<Eigen::Infinity>());
    if ((cs.E * g_part_ - cs.f).lpNorm<Eigen::Infinity>() > 1e-9 * scale) {
      throw Error(ErrorCode::oracle_failure, "equality constraints are inconsistent");
    }
    N_ = svd.matrixV().rightCols(H_ - rank);
  }

  OracleResult solve(double tol, int max_newton = 20000) {
    OracleResult out;
    Vector g = strictly_feasible_start();
    const double r0 = (A_ * g - b_).norm();
    Vector z(dim());
    z.head(H_) = g;
    z(H_) = r0 + std::max(1.0, r0);
    if (use_t2_) z(H_ + 1) = g.norm() + std::max(1.0, g.norm());

    const double nu = 2.0 + (use_t2_ ? 2.0 : 0.0) + static_cast<double>(cs_.G.rows());
    double tau = 1.0;
    constexpr double growth = 8.0;
    while (true) {
      center(z, tau, max_newton, out.newton_steps);
      const double value = objective(z);
      const double gap = nu / tau;
      if (gap <= tol * std::max(1.0, std::abs(value))) {
        out.g = z.head(H_);
        out.value = robust_objective(out.g, A_, b_, beta_);
        out.gap_bound = gap + (objective(z) - out.value);
        return out;
      }
      tau *= growth;
    }
  }

 private:
  Eigen::Index dim() const { return H_ + 1 + (use_t2_ ? 1 : 0); }

  double objective(const Vector& z) const { return z(H_) + (use_t2_ ? beta_ * z(H_ + 1) : 0.0); }

  /// Barrier value; +inf outside the domain.
  double barrier(const Vector& z) const {
    const Vector g = z.head(H_);
    const double t1 = z(H_);
    const double s1 = t1 * t1 - (A_ * g - b_).squaredNorm();
    if (t1 <= 0.0 || s1 <= 0.0) return std::numeric_limits<double>::infinity();
    double phi = -std::log(s1);
    if (use_t2_) {
      const double t2 = z(H_ + 1);
      const double s2 = t2 * t2 - g.squaredNorm();
      if (t2 <= 0.0 || s2 <= 0.0) return std::numeric_limits<double>::infinity();
      phi -= std::log(s2);
    }
    if (cs_.G.rows() > 0) {
      const Vector slack = cs_.q - cs_.G * g;
      if ((slack.array() <= 0.0).any()) return std::numeric_limits<double>::infinity();
      phi -= slack.array().log().sum();
    }
    return phi;
  }

  void derivatives(const Vector& z, double tau, Vector& grad, Matrix& hess) const {
    const Eigen::Index n = dim();
    grad = Vector::Zero(n);
    hess = Matrix::Zero(n, n);
    grad(H_) = tau;
    if (use_t2_) grad(H_ + 1) = tau * beta_;
    const Vector g = z.head(H_);

    // cone 1: (t1, A g - b)
    {
      const double t = z(H_);
      const Vector x = A_ * g - b_;
      const double s = t * t - x.squaredNorm();
      const Vector atx = A_.transpose() * x;
      grad(H_) += -2.0 * t / s;
      grad.head(H_) += 2.0 * atx / s;
      hess(H_, H_) += -2.0 / s + 4.0 * t * t / (s * s);
      hess.block(0, H_, H_, 1) += -4.0 * t * atx / (s * s);
      hess.block(H_, 0, 1, H_) += (-4.0 * t * atx / (s * s)).transpose();
      hess.topLeftCorner(H_, H_) += 2.0 * (A_.transpose() * A_) / s + 4.0 * atx * atx.transpose() / (s * s);
    }
    // cone 2: (t2, g)
    if (use_t2_) {
      const double t = z(H_ + 1);
      const double s = t * t - g.squaredNorm();
      grad(H_ + 1) += -2.0 * t / s;
      grad.head(H_) += 2.0 * g / s;
      hess(H_ + 1, H_ + 1) += -2.0 / s + 4.0 * t * t / (s * s);
      hess.block(0, H_ + 1, H_, 1) += -4.0 * t * g / (s * s);
      hess.block(H_ + 1, 0, 1, H_) += (-4.0 * t * g / (s * s)).transpose();
      hess.topLeftCorner(H_, H_).diagonal().array() += 2.0 / s;
      hess.topLeftCorner(H_, H_) += 4.0 * g * g.transpose() / (s * s);
    }
    if (cs_.G.rows() > 0) {
      const Vector slack = cs_.q - cs_.G * g;
      const Vector inv = slack.cwiseInverse();
      grad.head(H_) += cs_.G.transpose() * inv;
      hess.topLeftCorner(H_, H_) += cs_.G.transpose() * inv.cwiseAbs2().asDiagonal() * cs_.G;
    }
  }

  /// Newton centering from a feasible z, in null-space coordinates.
  void center(Vector& z, double tau, int max_newton, int& steps) const {
    const Eigen::Index nt = dim() - H_;
    const Eigen::Index k = N_.cols();
    Matrix T = Matrix::Zero(dim(), k + nt);
    T.topLeftCorner(H_, k) = N_;
    T.bottomRightCorner(nt, nt).setIdentity();
    for (int it = 0; it < 200; ++it) {
      if (++steps > max_newton) throw Error(ErrorCode::oracle_failure, "Newton budget exhausted");
      Vector grad;
      Matrix hess;
      derivatives(z, tau, grad, hess);
      const Vector gr = T.transpose() * grad;
      const Vector dr = newton_direction(T.transpose() * hess * T, gr);
      const Vector dz = T * dr;
      const double decrement = -gr.dot(dr);
      if (!(decrement / 2.0 > 1e-12)) return;

      const double f0 = tau * objective(z) + barrier(z);
      double step = 1.0;
      while (true) {
        const Vector trial = z + step * dz;
        const double f1 = tau * objective(trial) + barrier(trial);
        if (std::isfinite(f1) && f1 <= f0 - 0.01 * step * decrement) {
          z = trial;
          break;
        }
        step *= 0.5;
        if (step < 1e-16) return;  // no further progress at this tau
      }
    }
  }

  static Vector newton_direction(const Matrix& hess, const Vector& grad) {
    Eigen::LDLT<Matrix> ldlt(hess);
    Vector d = ldlt.solve(-grad);
    if (ldlt.info() != Eigen::Success || !d.allFinite()) {
      Matrix reg = hess;
      reg.diagonal().array() += 1e-12 * std::max(1.0, hess.diagonal().cwiseAbs().maxCoeff());
      d = reg.ldlt().solve(-grad);
    }
    if (!d.allFinite()) throw Error(ErrorCode::oracle_failure, "singular Newton system");
    return d;
  }

  /// Phase I: min s  s.t.  G g - q <= s, stopped once s < 0.
  Vector strictly_feasible_start() const {
    if (cs_.G.rows() == 0) return g_part_;
    const Eigen::Index mi = cs_.G.rows(), k = N_.cols();
    const Matrix GN = cs_.G * N_;
    const Vector q0 = cs_.q - cs_.G * g_part_;  // G N w <= q0
    Vector z = Vector::Zero(k + 1);
    z(k) = (-q0).maxCoeff() + 1.0;
    auto slack = [&](const Vector& v) -> Vector { return Vector::Constant(mi, v(k)) - GN * v.head(k) + q0; };
    auto phase1_barrier = [&](const Vector& v) {
      const Vector sl = slack(v);
      if ((sl.array() <= 0.0).any()) return std::numeric_limits<double>::infinity();
      return -sl.array().log().sum();
    };
    auto done = [&](const Vector& v) -> bool {
      if (v(k) >= 0.0) return false;
      const Vector g = g_part_ + N_ * v.head(k);
      return ((cs_.q - cs_.G * g).array() > 0.0).all();
    };
    Matrix J(mi, k + 1);  // d slack / d z
    J.leftCols(k) = -GN;
    J.col(k).setOnes();
    double tau = 1.0;
    for (int outer = 0; outer < 60; ++outer) {
      for (int it = 0; it < 100; ++it) {
        if (done(z)) return g_part_ + N_ * z.head(k);
        const Vector inv = slack(z).cwiseInverse();
        Vector grad = -J.transpose() * inv;
        grad(k) += tau;
        const Matrix hess = J.transpose() * inv.cwiseAbs2().asDiagonal() * J;
        const Vector dz = newton_direction(hess, grad);
        const double dec = -grad.dot(dz);
        if (!(dec / 2.0 > 1e-10)) break;
        const double f0 = tau * z(k) + phase1_barrier(z);
        double step = 1.0;
        while (step > 1e-16) {
          const Vector trial = z + step * dz;
          const double f1 = tau * trial(k) + phase1_barrier(trial);
          if (std::isfinite(f1) && f1 <= f0 - 0.01 * step * dec) {
            z = trial;
            break;
          }
          step *= 0.5;
        }
      }
      if (done(z)) return g_part_ + N_ * z.head(k);
      if (static_cast<double>(mi) / tau < 1e-12) break;
      tau *= 8.0;
    }
    throw Error(ErrorCode::oracle_failure, "no strictly feasible point found (constraint set empty or thin)");
  }

  const Matrix& A_;
  const Vector& b_;
  double beta_;
  const ConstraintSet& cs_;
  Eigen::Index H_;
  bool use_t2_;
  Vector g_part_;
  Matrix N_;
};

}  // namespace detail

/// Minimizes ||A g - b|| + beta ||g|| over the constraint set with an
/// interior-point method on the second-order-cone form. Independent of
/// `solve_qp`; the returned value exceeds the optimum by at most
/// `gap_bound` <= tol * max(1, value).
inline OracleResult minimize_eq14_oracle(const Matrix& A, const Vector& b, double beta, const ConstraintSet& cs,
                                         double tol = 1e-10) {
  if (!(beta >= 0.0)) throw Error(ErrorCode::invalid_input, "beta must be nonnegative");
  cs.validate(A.cols());
  return detail::RobustLsBarrier(A, b, beta, cs).solve(tol);
}

struct MonotonicityRow {
  double lambda_g = 0.0;
  double beta = 0.0;
  double g_norm = 0.0;
};

struct RobustnessReport {
  std::string kind;  // "theorem1", "corollary1" or "sweep"
  std::uint64_t instance_seed = 0;
  double lambda_g = 0.0;
  double beta = 0.0;
  double beta_prime = 0.0;
  double beta_augmented = 0.0;
  double eq14_value_at_gstar = 0.0;
  double eq14_oracle_value = 0.0;
  double minimizer_gap = 0.0;
  double worstcase_attainment_gap = 0.0;
  double monte_carlo_max_excess = 0.0;
  std::vector<MonotonicityRow> monotonicity_table;
  bool pass = false;
  std::vector<std::string> failures;
};

struct VerifyOptions {
  double tol = 1e-6;            // value-equivalence tolerance (relative, floored at 1)
  double attainment_tol = 1e-9; // worst-case construction / dominance (relative, floored at 1)
  int samples = 1000;
  std::uint64_t seed = 0;
  double beta_scale = 1.0;      // != 1 deliberately corrupts beta (test hook)
};

namespace detail {

/// Random matrix with Frobenius norm at most `radius`; a third of the
/// draws sit on the sphere, a third near `anchor` (when given).
inline Matrix sample_ball(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double radius, int k,
                          const Matrix* anchor) {
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  Matrix d(rows, cols);
  for (Eigen::Index i = 0; i < d.size(); ++i) d.data()[i] = nd(rng);
  if (anchor != nullptr && k % 3 == 2) d = *anchor + 1e-3 * radius * d / std::max(d.norm(), 1e-300);
  const double n = d.norm();
  if (n == 0.0) return d;
  const double r = (k % 3 == 0) ? radius : radius * std::pow(ud(rng), 1.0 / static_cast<double>(d.size()));
  return (anchor != nullptr && k % 3 == 2) ? Matrix(d * std::min(1.0, radius / n)) : Matrix(d * (r / n));
}

inline double rel_gap(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

}  // namespace detail

/// Checks that the squared-regularized minimizer g* also minimizes the
/// robust form at its certified beta, and that the inner maximum is
/// attained by `worst_case_disturbance`.
inline RobustnessReport verify_theorem1(const AssembledProblem& prob, double lambda_g, const VerifyOptions& opt = {}) {
  RobustnessReport rep;
  rep.kind = "theorem1";
  rep.lambda_g = lambda_g;
  const Solution sol = solve_qp(prob, lambda_g);
  if (sol.status != SolveStatus::solved) {
    rep.failures.push_back(std::string("solver status ") + to_string(sol.status));
    return rep;
  }
  rep.beta = sol.beta * opt.beta_scale;
  rep.beta_prime = sol.beta_prime;
  rep.eq14_value_at_gstar = robust_objective(sol.g, prob.A, prob.b, rep.beta);
  const OracleResult oracle = minimize_eq14_oracle(prob.A, prob.b, rep.beta, prob.constraints, 1e-3 * opt.tol);
  rep.eq14_oracle_value = oracle.value;
  rep.minimizer_gap = (sol.g - oracle.g).norm();
  if (detail::rel_gap(rep.eq14_value_at_gstar, rep.eq14_oracle_value) > opt.tol) {
    std::ostringstream os;
    os << "value at g* " << rep.eq14_value_at_gstar << " vs oracle minimum " << rep.eq14_oracle_value;
    rep.failures.push_back(os.str());
  }

  const Matrix worst = worst_case_disturbance(sol.g, prob.A, prob.b, rep.beta);
  const double attained = ((prob.A + worst) * sol.g - prob.b).norm();
  rep.worstcase_attainment_gap = detail::rel_gap(attained, rep.eq14_value_at_gstar);
  if (rep.worstcase_attainment_gap > opt.attainment_tol) rep.failures.push_back("worst-case disturbance not attained");
  std::mt19937_64 rng(opt.seed);
  double excess = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < opt.samples; ++k) {
    const Matrix d = detail::sample_ball(rng, prob.A.rows(), prob.A.cols(), rep.beta, k, &worst);
    const double v = ((prob.A + d) * sol.g - prob.b).norm();
    excess = std::max(excess, (v - attained) / std::max(1.0, attained));
  }
  rep.monte_carlo_max_excess = opt.samples > 0 ? excess : 0.0;
  if (rep.monte_carlo_max_excess > opt.attainment_tol) rep.failures.push_back("sampled disturbance exceeds worst case");
  rep.pass = rep.failures.empty();
  return rep;
}

/// Checks beta' = beta of the augmented system [A b] with g = (g*, -1),
/// beta' >= beta, and Monte-Carlo dominance over [D xi] in the beta' ball.
inline RobustnessReport verify_corollary1(const AssembledProblem& prob, double lambda_g, const VerifyOptions& opt = {}) {
  RobustnessReport rep;
  rep.kind = "corollary1";
  rep.lambda_g = lambda_g;
  const Solution sol = solve_qp(prob, lambda_g);
  if (sol.status != SolveStatus::solved) {
    rep.failures.push_back(std::string("solver status ") + to_string(sol.status));
    return rep;
  }
  const Eigen::Index H = prob.columns();
  rep.beta = sol.beta;
  rep.beta_prime = compute_beta_prime(sol.g, prob.A, prob.b, lambda_g) * opt.beta_scale;
  Matrix aug(prob.A.rows(), H + 1);
  aug << prob.A, prob.b;
  Vector g_aug(H + 1);
  g_aug << sol.g, -1.0;
  rep.beta_augmented = compute_beta(g_aug, aug, Vector::Zero(prob.A.rows()), lambda_g);
  if (std::abs(rep.beta_augmented - rep.beta_prime) > 1e-12 * std::max(1.0, rep.beta_prime)) {
    rep.failures.push_back("augmented beta differs from beta'");
  }
  if (rep.beta_prime < rep.beta) rep.failures.push_back("beta' < beta");

  const double residual = (prob.A * sol.g - prob.b).norm();
  const double bound = residual + rep.beta_prime * g_aug.norm();
  rep.eq14_value_at_gstar = bound;
  const Matrix worst = worst_case_disturbance(g_aug, aug, Vector::Zero(prob.A.rows()), rep.beta_prime);
  const double attained = ((aug + worst) * g_aug).norm();
  rep.worstcase_attainment_gap = detail::rel_gap(attained, bound);
  if (rep.worstcase_attainment_gap > opt.attainment_tol) rep.failures.push_back("worst-case [D xi] not attained");
  std::mt19937_64 rng(opt.seed);
  double excess = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < opt.samples; ++k) {
    const Matrix d = detail::sample_ball(rng, aug.rows(), aug.cols(), rep.beta_prime, k, &worst);
    const Vector lhs = (prob.A + d.leftCols(H)) * sol.g - (prob.b + d.col(H));
    excess = std::max(excess, (lhs.norm() - bound) / std::max(1.0, bound));
  }
  rep.monte_carlo_max_excess = opt.samples > 0 ? excess : 0.0;
  if (rep.monte_carlo_max_excess > opt.attainment_tol) rep.failures.push_back("sampled [D xi] exceeds bound");
  rep.pass = rep.failures.empty();
  return rep;
}

/// (lambda_g, beta, ||g*||) over a strictly increasing grid. Flags a
/// violation if beta fails to increase strictly or ||g*|| grows, while
/// g* != 0.
inline RobustnessReport beta_sweep(const AssembledProblem& prob, const std::vector<double>& grid) {
  RobustnessReport rep;
  rep.kind = "sweep";
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (!(grid[i] > grid[i - 1])) throw Error(ErrorCode::invalid_input, "lambda grid must be strictly increasing");
  }
  for (double lg : grid) {
    if (!(lg > 0.0)) throw Error(ErrorCode::invalid_input, "lambda grid must be positive");
    const Solution sol = solve_qp(prob, lg);
    rep.monotonicity_table.push_back({lg, sol.beta, sol.g.norm()});
  }
  const double zero_tol = 1e-12;
  for (std::size_t i = 1; i < rep.monotonicity_table.size(); ++i) {
    const auto& a = rep.monotonicity_table[i - 1];
    const auto& b = rep.monotonicity_table[i];
    if (a.g_norm <= zero_tol || b.g_norm <= zero_tol) continue;
    if (!(b.beta > a.beta)) {
      std::ostringstream os;
      os << "beta not increasing between lambda_g " << a.lambda_g << " and " << b.lambda_g;
      rep.failures.push_back(os.str());
    }
    if (b.g_norm > a.g_norm * (1.0 + 1e-10)) {
      std::ostringstream os;
      os << "||g*|| grows between lambda_g " << a.lambda_g << " and " << b.lambda_g;
      rep.failures.push_back(os.str());
    }
  }
  rep.pass = rep.failures.empty();
  return rep;
}

}  // namespace deepc
