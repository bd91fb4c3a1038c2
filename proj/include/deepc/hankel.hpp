#pragma once

#include "deepc/common.hpp"

#include <sstream>

namespace deepc {

/// Recorded input/output sequences of one experiment.
struct TrajectoryData {
  Signal u;
  Signal y;

  TrajectoryData() = default;
  TrajectoryData(Signal u_data, Signal y_data) : u(std::move(u_data)), y(std::move(y_data)) { validate(); }

  Eigen::Index m() const { return u.empty() ? 0 : u.front().size(); }
  Eigen::Index p() const { return y.empty() ? 0 : y.front().size(); }
  Eigen::Index length() const { return static_cast<Eigen::Index>(u.size()); }

  void validate() const {
    if (u.size() != y.size()) throw Error(ErrorCode::invalid_input, "input and output sequences differ in length");
    if (u.empty()) throw Error(ErrorCode::invalid_input, "empty trajectory");
    for (const auto& v : u) {
      if (v.size() != m() || v.size() == 0) throw Error(ErrorCode::invalid_input, "inconsistent input width");
    }
    for (const auto& v : y) {
      if (v.size() != p() || v.size() == 0) throw Error(ErrorCode::invalid_input, "inconsistent output width");
    }
  }
};

/// Depth-L block Hankel matrix; column j is col(w_j, ..., w_{j+L-1}).
inline Matrix build_hankel(const Signal& w, Eigen::Index depth) {
  if (w.empty()) throw Error(ErrorCode::invalid_input, "empty sequence");
  const auto T = static_cast<Eigen::Index>(w.size());
  if (depth < 1 || depth > T) {
    std::ostringstream os;
    os << "depth " << depth << " outside [1, " << T << "]";
    throw Error(ErrorCode::invalid_window, os.str());
  }
  const Eigen::Index d = w.front().size();
  const Eigen::Index cols = T - depth + 1;
  Matrix h(d * depth, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < depth; ++i) {
      const Vector& v = w[static_cast<std::size_t>(i + j)];
      if (v.size() != d) throw Error(ErrorCode::invalid_input, "inconsistent vector width");
      h.block(i * d, j, d, 1) = v;
    }
  }
  return h;
}

/// Past/future split of the depth-(T_ini + N) Hankel matrices.
struct HankelPartition {
  Matrix U_p, Y_p, U_f, Y_f;
  Eigen::Index t_ini = 0;
  Eigen::Index horizon = 0;

  Eigen::Index m() const { return t_ini > 0 ? U_p.rows() / t_ini : 0; }
  Eigen::Index p() const { return t_ini > 0 ? Y_p.rows() / t_ini : 0; }
  Eigen::Index columns() const { return U_p.cols(); }
};

inline HankelPartition partition(const TrajectoryData& data, Eigen::Index t_ini, Eigen::Index horizon) {
  data.validate();
  if (t_ini < 1 || horizon < 1) throw Error(ErrorCode::invalid_input, "T_ini and N must be positive");
  if (data.length() < t_ini + horizon) {
    std::ostringstream os;
    os << "T = " << data.length() << " < T_ini + N = " << t_ini + horizon;
    throw Error(ErrorCode::insufficient_data, os.str());
  }
  const Eigen::Index depth = t_ini + horizon;
  const Matrix hu = build_hankel(data.u, depth);
  const Matrix hy = build_hankel(data.y, depth);
  const Eigen::Index m = data.m(), p = data.p();

  HankelPartition part;
  part.t_ini = t_ini;
  part.horizon = horizon;
  part.U_p = hu.topRows(m * t_ini);
  part.U_f = hu.bottomRows(m * horizon);
  part.Y_p = hy.topRows(p * t_ini);
  part.Y_f = hy.bottomRows(p * horizon);
  return part;
}

struct RankReport {
  bool satisfied = false;
  Eigen::Index rank = 0;
  Eigen::Index target = 0;
  std::string diagnostic;
};

/// Checks rank(H_L(u, y)) == m L + n at relative tolerance `tol`.
inline RankReport rank_condition(const TrajectoryData& data, Eigen::Index depth, Eigen::Index order,
                                 double tol = 1e-9) {
  data.validate();
  RankReport rep;
  rep.target = data.m() * depth + order;
  const Matrix hu = build_hankel(data.u, depth);
  const Matrix hy = build_hankel(data.y, depth);
  Matrix h(hu.rows() + hy.rows(), hu.cols());
  h << hu, hy;
  rep.rank = numerical_rank(h, tol);
  if (rep.target > h.cols()) {
    std::ostringstream os;
    os << "too few columns: " << h.cols() << " < target rank " << rep.target;
    rep.diagnostic = os.str();
    rep.satisfied = false;
    return rep;
  }
  rep.satisfied = rep.rank == rep.target;
  std::ostringstream os;
  os << "rank " << rep.rank << (rep.satisfied ? " == " : " != ") << "target " << rep.target;
  rep.diagnostic = os.str();
  return rep;
}

/// Persistency of excitation: the depth-L input Hankel matrix has full row rank.
inline bool pe_order(const Signal& u, Eigen::Index depth, double tol = 1e-9) {
  const Matrix h = build_hankel(u, depth);
  if (h.cols() < h.rows()) return false;
  return numerical_rank(h, tol) == h.rows();
}

}  // namespace deepc
