#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lowrank/linalg.hpp"

namespace lowrank {

/// Name of the pseudo-random generator behind every seeded routine. Recorded
/// in run metadata; outputs are reproducible within one build.
inline constexpr const char* kGeneratorName = "std::mt19937_64";

/// Default random-matrix constant. See verify_init_bounds.
inline constexpr double kDefaultRandomMatrixConstant = 300.0;

/// Singular values at or below this fraction of sigma_1 do not count toward
/// the numerical rank in reduce_to_diagonal.
inline constexpr double kRankTolerance = 1e-10;

/// Target matrix Sigma = Phi * diag(sigma) * Psi^T of rank d.
struct ProblemInstance {
  int m = 0;
  int n = 0;
  int d = 0;
  std::vector<double> singular_values;
  std::optional<Matrix> left_unitary;   // Phi, m x m
  std::optional<Matrix> right_unitary;  // Psi, n x n

  double sigma_1() const { return singular_values.front(); }
  double sigma_d() const { return singular_values.back(); }
  double kappa() const { return sigma_1() / sigma_d(); }
  bool is_diagonal() const { return !left_unitary && !right_unitary; }

  /// d x d diagonal principal block diag(sigma_1, ..., sigma_d).
  Matrix principal_sigma() const;
  /// sum of sigma_i^2, i.e. ||Sigma||_F^2.
  double frobenius_sq() const;
};

/// Gaussian initialization scale, seed and random-matrix constant c.
struct InitSpec {
  double epsilon = 0.0;
  std::uint64_t seed = 0;
  double c = kDefaultRandomMatrixConstant;
};

/// A pair of full factors: U is m x d, V is n x d.
struct FactorPair {
  Matrix U;
  Matrix V;
};

/// Validates (m, n, d, singular values) and builds an instance. With a seed,
/// Phi and Psi are Haar orthogonal matrices drawn from that seed.
ProblemInstance make_instance(int m, int n, int d,
                              std::vector<double> singular_values,
                              std::optional<std::uint64_t> unitary_seed = std::nullopt);

/// Throws ValidationError unless the instance satisfies its invariants.
void validate(const ProblemInstance& instance);

Matrix assemble_full_sigma(const ProblemInstance& instance);

struct Reduction {
  ProblemInstance instance;  // diagonal instance
  Matrix left;               // Phi, so that Sigma = Phi Sigma' Psi^T
  Matrix right;              // Psi
  Matrix U0;                 // Phi^T U0
  Matrix V0;                 // Psi^T V0
};

/// SVD-based change of frame to a diagonal target. The rank is d = U0.cols().
/// Throws RankDeficiencyError when sigma_d(sigma_full) <= kRankTolerance * sigma_1.
Reduction reduce_to_diagonal(const Matrix& sigma_full, const Matrix& U0,
                             const Matrix& V0);

/// i.i.d. N(0, epsilon^2) entries; a pure function of its arguments.
FactorPair init_factors(int m, int n, int d, const InitSpec& spec);

/// epsilon = k_eps * sigma_d / (sqrt(d^3 sigma_1) (m + n)).
double theory_epsilon(const ProblemInstance& instance, double k_eps = 1.0);

/// eta = k_eta * sigma_d epsilon^2 / (d sigma_1^3).
double theory_eta(const ProblemInstance& instance, double epsilon,
                  double k_eta = 1.0);

struct BoundCheck {
  std::string name;
  double measured = 0.0;
  double bound = 0.0;
  bool is_lower_bound = false;  // measured >= bound when true
  bool holds = false;
  /// measured / bound.
  double ratio = 0.0;
};

struct InitBoundsReport {
  std::vector<BoundCheck> checks;
  bool all_hold() const;
};

/// Random-matrix bounds on the block partition of the initial factors:
/// sigma_d(A) >= eps/(c sqrt d), sigma_1(A) <= c eps sqrt d, ||B||_F <= c d eps,
/// ||J||_op <= c eps sqrt(max(m', d)), ||K||_op <= c eps sqrt(max(n', d)).
InitBoundsReport verify_init_bounds(const Matrix& U0, const Matrix& V0, int d,
                                    double epsilon, double c);

}  // namespace lowrank
