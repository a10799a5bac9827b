#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "lowrank/dynamics.hpp"
#include "lowrank/problem.hpp"

namespace lowrank::testing {

inline Matrix gaussian(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng,
                       double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = g(rng);
  }
  return m;
}

/// Random symmetric positive definite matrix with eigenvalues in [lo, hi].
inline Matrix random_spd(Eigen::Index d, double lo, double hi, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(lo, hi);
  const Matrix Q = linalg::haar_orthogonal(d, rng);
  Vector ev(d);
  for (Eigen::Index i = 0; i < d; ++i) ev(i) = u(rng);
  const Matrix S = Q * ev.asDiagonal() * Q.transpose();
  return 0.5 * (S + S.transpose());
}

inline ProblemInstance diagonal_instance(int m, int n, std::vector<double> sv) {
  const int d = static_cast<int>(sv.size());
  return make_instance(m, n, d, std::move(sv));
}

inline FactorState random_state(const ProblemInstance& inst, std::mt19937_64& rng,
                                double scale = 0.5) {
  const Matrix U = gaussian(inst.m, inst.d, rng, scale);
  const Matrix V = gaussian(inst.n, inst.d, rng, scale);
  return FactorState::from_full(U, V, inst.d);
}

/// f(U, V) = 1/2 ||Sigma - U V^T||_F^2, written out independently of the library.
inline double loss_of(const Matrix& U, const Matrix& V, const Matrix& sigma) {
  return 0.5 * (sigma - U * V.transpose()).squaredNorm();
}

}  // namespace lowrank::testing
