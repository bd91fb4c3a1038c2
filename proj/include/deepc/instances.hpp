#pragma once

#include "deepc/solver.hpp"

#include <cstdint>
#include <random>

namespace deepc {

struct InstanceShape {
  Eigen::Index columns = 20;   // H
  Eigen::Index rows = 30;      // rows of A
  Eigen::Index equalities = 0;
  Eigen::Index box_rows = 0;   // each box row yields an upper and a lower bound
};

/// Random regularized least-squares instance with a nonempty feasible set.
///
/// Box rows are centred on a random feasible point with random half-widths,
/// so a fair share of them binds at the optimum. b is drawn independently
/// of the feasible point, which keeps g* away from zero.
inline AssembledProblem random_instance(std::uint64_t seed, const InstanceShape& shape) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::uniform_real_distribution<double> width(0.05, 0.5);
  const Eigen::Index H = shape.columns;
  auto randn = [&](Eigen::Index r, Eigen::Index c) {
    Matrix out(r, c);
    for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] = nd(rng);
    return out;
  };
  Matrix A = randn(shape.rows, H);
  Vector b = 3.0 * randn(shape.rows, 1).col(0);
  const Vector g0 = 0.2 * randn(H, 1).col(0);

  ConstraintSet cs = ConstraintSet::none(H);
  if (shape.equalities > 0) {
    cs.E = randn(shape.equalities, H);
    cs.f = cs.E * g0;
  }
  if (shape.box_rows > 0) {
    const Matrix rows = randn(shape.box_rows, H);
    cs.G.resize(2 * shape.box_rows, H);
    cs.q.resize(2 * shape.box_rows);
    for (Eigen::Index i = 0; i < shape.box_rows; ++i) {
      const double centre = rows.row(i).dot(g0);
      const double half = width(rng);
      cs.G.row(2 * i) = rows.row(i);
      cs.q(2 * i) = centre + half;
      cs.G.row(2 * i + 1) = -rows.row(i);
      cs.q(2 * i + 1) = -(centre - half);
    }
  }
  return make_problem(std::move(A), std::move(b), std::move(cs));
}

}  // namespace deepc
