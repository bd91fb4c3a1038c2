#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace deepc {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Signal = std::vector<Vector>;  // one vector per time step

enum class ErrorCode {
  invalid_input,
  invalid_window,
  insufficient_data,
  unobservable_model,
  excitation_failure,
  invalid_weights,
  singular_system,
  oracle_failure,
  data_insufficiency,
  ambiguous_initialization,
  schema,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_input: return "invalid-input";
    case ErrorCode::invalid_window: return "invalid-window";
    case ErrorCode::insufficient_data: return "insufficient-data";
    case ErrorCode::unobservable_model: return "unobservable-model";
    case ErrorCode::excitation_failure: return "excitation-failure";
    case ErrorCode::invalid_weights: return "invalid-weights";
    case ErrorCode::singular_system: return "singular-system";
    case ErrorCode::oracle_failure: return "oracle-failure";
    case ErrorCode::data_insufficiency: return "data-insufficiency";
    case ErrorCode::ambiguous_initialization: return "ambiguous-initialization";
    case ErrorCode::schema: return "schema";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Numerical rank with a relative singular-value threshold: counts
/// sigma_i > tol * sigma_max.
inline Eigen::Index numerical_rank(const Matrix& m, double tol = 1e-9) {
  if (m.size() == 0) return 0;
  Eigen::BDCSVD<Matrix> svd(m);
  const Vector& s = svd.singularValues();
  if (s.size() == 0 || s(0) == 0.0) return 0;
  const double cutoff = tol * s(0);
  Eigen::Index r = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s(i) > cutoff) ++r;
  }
  return r;
}

/// Symmetric PSD square root. Negative eigenvalues within `tol` of zero
/// (relative to the largest) are clamped; anything below that throws.
inline Matrix psd_sqrt(const Matrix& m, double tol = 1e-10) {
  if (m.rows() != m.cols()) throw Error(ErrorCode::invalid_weights, "weight matrix is not square");
  if ((m - m.transpose()).norm() > 1e-12 * std::max(1.0, m.norm())) {
    throw Error(ErrorCode::invalid_weights, "weight matrix is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (m + m.transpose()));
  Vector ev = es.eigenvalues();
  const double scale = std::max(1.0, ev.cwiseAbs().maxCoeff());
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev(i) < -tol * scale) throw Error(ErrorCode::invalid_weights, "weight matrix is not PSD");
    ev(i) = std::sqrt(std::max(ev(i), 0.0));
  }
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

inline double min_eigenvalue(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

/// Minimum-norm least-squares solution with the same relative cutoff as
/// `numerical_rank`.
inline Vector min_norm_solve(const Matrix& m, const Vector& rhs, double tol = 1e-9) {
  if (m.cols() == 0) return Vector(0);
  Eigen::BDCSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& s = svd.singularValues();
  Vector coeff = svd.matrixU().transpose() * rhs;
  const double cutoff = s.size() > 0 ? tol * s(0) : 0.0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    coeff(i) = s(i) > cutoff ? coeff(i) / s(i) : 0.0;
  }
  return svd.matrixV() * coeff;
}

/// Stacks a signal into col(w_0, ..., w_{K-1}).
inline Vector stack(const Signal& w) {
  Eigen::Index total = 0;
  for (const auto& v : w) total += v.size();
  Vector out(total);
  Eigen::Index off = 0;
  for (const auto& v : w) {
    out.segment(off, v.size()) = v;
    off += v.size();
  }
  return out;
}

/// Inverse of `stack` for fixed channel width.
inline Signal unstack(const Vector& v, Eigen::Index width) {
  if (width <= 0 || v.size() % width != 0) {
    throw Error(ErrorCode::invalid_input, "stacked vector length is not a multiple of the channel count");
  }
  Signal out;
  out.reserve(static_cast<std::size_t>(v.size() / width));
  for (Eigen::Index i = 0; i < v.size(); i += width) out.emplace_back(v.segment(i, width));
  return out;
}

}  // namespace deepc
