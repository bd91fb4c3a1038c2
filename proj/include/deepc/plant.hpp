#pragma once

#include "deepc/common.hpp"
#include "deepc/hankel.hpp"

#include <cstdint>
#include <optional>
#include <random>
#include <sstream>

namespace deepc {

/// Discrete-time LTI model x+ = A x + B u, y = C x + D u.
///
/// Only the simulation and verification side uses this type; the
/// controller never sees it.
struct StateSpaceModel {
  Matrix A, B, C, D;

  StateSpaceModel() = default;
  StateSpaceModel(Matrix a, Matrix b, Matrix c, Matrix d)
      : A(std::move(a)), B(std::move(b)), C(std::move(c)), D(std::move(d)) {
    validate();
  }

  Eigen::Index n() const { return A.rows(); }
  Eigen::Index m() const { return B.cols(); }
  Eigen::Index p() const { return C.rows(); }

  void validate() const {
    const auto n_ = A.rows();
    if (n_ < 1 || A.cols() != n_) throw Error(ErrorCode::invalid_input, "A must be square and non-empty");
    if (B.rows() != n_ || B.cols() < 1) throw Error(ErrorCode::invalid_input, "B has wrong row count");
    if (C.cols() != n_ || C.rows() < 1) throw Error(ErrorCode::invalid_input, "C has wrong column count");
    if (D.rows() != C.rows() || D.cols() != B.cols()) throw Error(ErrorCode::invalid_input, "D is not p x m");
  }

  double spectral_radius() const { return A.eigenvalues().cwiseAbs().maxCoeff(); }
  bool is_stable() const { return spectral_radius() < 1.0; }

  /// C (I - A)^{-1} B + D.
  Matrix dc_gain() const {
    return C * (Matrix::Identity(n(), n()) - A).partialPivLu().solve(B) + D;
  }
};

/// White-noise configuration. Powers are per-sample variances.
struct NoiseSpec {
  std::uint64_t seed = 0;
  double output_noise_power = 0.0;
  double input_dither_power = 0.0;

  void validate() const {
    if (!(output_noise_power >= 0.0) || !(input_dither_power >= 0.0)) {
      throw Error(ErrorCode::invalid_input, "noise powers must be nonnegative");
    }
  }
};

/// Seeded Gaussian source. Streams are split by a stream id so that the
/// same seed drives independent excitation and measurement-noise draws.
class WhiteNoise {
 public:
  WhiteNoise(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream)};
    engine_.seed(seq);
  }

  Vector draw(Eigen::Index dim, double variance) {
    Vector v(dim);
    const double sd = std::sqrt(variance);
    for (Eigen::Index i = 0; i < dim; ++i) v(i) = sd * normal_(engine_);
    return v;
  }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

namespace stream {
inline constexpr std::uint64_t excitation = 1;
inline constexpr std::uint64_t measurement = 2;
inline constexpr std::uint64_t closed_loop = 3;
}  // namespace stream

struct SimulationResult {
  Signal y;
  Vector final_state;
};

inline SimulationResult simulate(const StateSpaceModel& model, const Vector& x0, const Signal& u,
                                 const NoiseSpec& noise = {}) {
  model.validate();
  noise.validate();
  if (x0.size() != model.n()) throw Error(ErrorCode::invalid_input, "x0 has wrong dimension");
  WhiteNoise gen(noise.seed, stream::measurement);
  SimulationResult out;
  out.y.reserve(u.size());
  Vector x = x0;
  for (const auto& ut : u) {
    if (ut.size() != model.m()) throw Error(ErrorCode::invalid_input, "input has wrong dimension");
    Vector yt = model.C * x + model.D * ut;
    if (noise.output_noise_power > 0.0) yt += gen.draw(model.p(), noise.output_noise_power);
    out.y.push_back(std::move(yt));
    x = model.A * x + model.B * ut;
  }
  out.final_state = std::move(x);
  return out;
}

/// Smallest l with rank col(C, CA, ..., CA^{l-1}) = n.
inline Eigen::Index lag(const StateSpaceModel& model, double tol = 1e-9) {
  model.validate();
  const Eigen::Index n = model.n(), p = model.p();
  Matrix obs(0, n);
  Matrix block = model.C;
  for (Eigen::Index l = 1; l <= n; ++l) {
    obs.conservativeResize(l * p, n);
    obs.bottomRows(p) = block;
    if (numerical_rank(obs, tol) == n) return l;
    block = block * model.A;
  }
  throw Error(ErrorCode::unobservable_model, "observability matrix never reaches rank n");
}

/// base + seeded white noise of variance `spec.input_dither_power`.
///
/// When `pe_depth` is given the result must be persistently exciting of
/// that order; on failure the draw is repeated with a fresh seed (at most
/// 10 retries).
inline Signal generate_excitation(const NoiseSpec& spec, Eigen::Index m, Eigen::Index length, const Signal& base,
                                  std::optional<Eigen::Index> pe_depth = std::nullopt) {
  spec.validate();
  if (length < 1 || m < 1) throw Error(ErrorCode::invalid_input, "excitation length and width must be positive");
  if (static_cast<Eigen::Index>(base.size()) != length) {
    throw Error(ErrorCode::invalid_input, "base signal length differs from T");
  }
  for (const auto& v : base) {
    if (v.size() != m) throw Error(ErrorCode::invalid_input, "base signal has wrong width");
  }
  constexpr int max_retries = 10;
  for (int attempt = 0; attempt <= max_retries; ++attempt) {
    Signal out = base;
    if (spec.input_dither_power > 0.0) {
      WhiteNoise gen(spec.seed + static_cast<std::uint64_t>(attempt), stream::excitation);
      for (auto& v : out) v += gen.draw(m, spec.input_dither_power);
    }
    if (!pe_depth || pe_order(out, *pe_depth)) return out;
    if (spec.input_dither_power == 0.0) break;
  }
  std::ostringstream os;
  os << "input is not persistently exciting of order " << pe_depth.value_or(0) << " after " << max_retries
     << " retries";
  throw Error(ErrorCode::excitation_failure, os.str());
}

/// Fixed linear stand-in for a grid-following converter under current
/// control, sampled at 1 ms.
///
/// Inputs:  (d_omega, I_d_ref, I_q_ref).  Outputs: (V_q, P_E, Q_E).
/// States:  d/q current, phase deviation, d/q filter states.
/// The model is stable (spectral radius 0.97), has lag 2 and a DC gain of
/// about 3 from I_d_ref to P_E.
inline StateSpaceModel converter_surrogate() {
  Matrix A(5, 5), B(5, 3), C(3, 5);
  // clang-format off
  A <<  0.90, 0.00, 0.00, 0.05, 0.00,
        0.00, 0.90, 0.00, 0.00, 0.05,
        0.00, 0.00, 0.97, 0.00, 0.00,
       -0.08, 0.00, 0.02, 0.85, 0.00,
        0.00,-0.08, 0.03, 0.00, 0.85;
  B <<  0.00, 0.40, 0.00,
        0.00, 0.00, 0.40,
        0.08, 0.00, 0.00,
        0.00, 0.08, 0.00,
        0.00, 0.00, 0.08;
  C <<  0.10,-0.05, 1.00, 0.00, 0.20,
        1.00, 0.10, 0.20, 0.30, 0.00,
        0.05,-1.00, 0.10, 0.00, 0.30;
  // clang-format on
  return StateSpaceModel(A, B, C, Matrix::Zero(3, 3));
}

}  // namespace deepc
