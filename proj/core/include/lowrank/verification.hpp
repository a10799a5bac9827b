#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lowrank/dynamics.hpp"
#include "lowrank/linalg.hpp"
#include "lowrank/problem.hpp"

namespace lowrank {

/// Parameters shared by the S- and P-step lemmas. sigma_1 and sigma_d bound
/// the spectrum of Sigma from above and below.
struct LemmaParams {
  double beta = 0.5;
  double eta = 0.0;
  double sigma_1 = 1.0;
  double sigma_d = 1.0;
};

/// Roundoff allowance for the lemma checks, as a multiple of sigma_1.
inline constexpr double kLemmaRoundoff = 1e-12;

struct LemmaCheck {
  bool hypotheses_met = false;
  std::string skip_reason;  // set when hypotheses_met is false
  double lhs = 0.0;         // s' or p'
  double rhs = 0.0;         // lower bound
  double slack = 0.0;       // lhs - rhs
  bool holds = false;       // slack >= -kLemmaRoundoff * sigma_1
};

/// (8 + 6 beta) / (1 - beta). Throws ValidationError unless 0 < beta < 1.
double lemma_constant(double beta);

/// s' = sigma_d(S') for S' = (I + eta(Sigma - S)) S (I + eta(Sigma - S)) against
/// (1 + eta(sigma_d - s))^2 s - ((8+6b)/(1-b)) sigma_1^3 eta^2.
LemmaCheck check_lemma_S(const Matrix& S, const Matrix& sigma, const LemmaParams& params);

/// p' = lambda_d(P') for P' = (I - eta(Sigma - P)) P (I - eta(Sigma - P)) against
/// (1 - eta sigma_d)^2 p - ((8+6b)/(1-b)) sigma_1^3 eta^2 if p < 0, and 0 otherwise.
LemmaCheck check_lemma_P(const Matrix& P, const Matrix& sigma, const LemmaParams& params);

struct LemmaSweepOptions {
  long samples = 1000;  // hypothesis-satisfying samples per lemma and beta
  int d_min = 1;
  int d_max = 6;
  std::vector<double> betas{0.25, 0.5, 0.75};
  long identity_samples = 100;
  std::uint64_t seed = 0;
};

struct LemmaTally {
  std::string lemma;
  double beta = 0.0;  // 0 for the identity
  long checked = 0;
  long skipped = 0;
  long violations = 0;
  double worst_slack = 0.0;  // min slack / sigma_1 over checked samples
};

struct LemmaSweepReport {
  std::vector<LemmaTally> tallies;
  long total_violations() const;
};

/// Randomized sweep over the S-step and P-step bounds (per beta) and the commuting-E identity.
/// Sample i of each family draws from std::mt19937_64(seed + i).
LemmaSweepReport run_lemma_sweep(const LemmaSweepOptions& options);

/// One random sample for the commuting-E identity: Sigma diagonal (sometimes with
/// repeated entries), E block-diagonal SPD on Sigma's eigenspaces, S + P = Sigma.
struct IdentitySample {
  Matrix sigma;
  Matrix S;
  Matrix P;
  Matrix E;
};
IdentitySample draw_identity_sample(int d, std::uint64_t seed);

/// A per-record slack sequence. slack >= 0 exactly when the condition holds.
struct ConditionSeries {
  std::string name;
  std::vector<long> t;
  std::vector<double> slack;
  std::optional<long> first_violation;

  void add(long time, double s);
  bool holds() const { return !first_violation.has_value(); }
};

struct ConditionReport {
  std::string stage;
  std::vector<ConditionSeries> series;
  std::map<std::string, double> scalars;

  bool all_hold() const;
  const ConditionSeries* find(const std::string& name) const;
};

struct Stage1Options {
  double epsilon = 0.0;
  double c = kDefaultRandomMatrixConstant;
  double e_b = 2.0 * kDefaultRandomMatrixConstant;
  std::optional<long> T0;
  /// Constant of the lambda_d(P) envelope lambda_d(P_t) >= -k e_b^2 eps^2 (m+n) d kappa.
  double envelope_k = 1.0;
};

/// The five warm-up conditions on records with t <= T0, the complement-block
/// monotonicity (only when eta <= 1/(3 sigma_1)) and the lambda_d(P) envelope.
/// Scalars: fitted envelope constant "P_envelope_k" and "E_residual_k".
ConditionReport check_stage1_conditions(const Trajectory& trajectory,
                                        const ProblemInstance& instance,
                                        const Stage1Options& options);

struct Stage2Options {
  long T0 = 0;
  double epsilon = 0.0;
  double c = kDefaultRandomMatrixConstant;
  /// Constant in ||B||_F <= b_const * sigma_d / sqrt(sigma_1).
  double b_const = 1.0;
};

/// Local-convergence conditions on records with t >= T0. Throws
/// InsufficientDataError when no record reaches T0.
ConditionReport check_stage2_conditions(const Trajectory& trajectory,
                                        const ProblemInstance& instance,
                                        const Stage2Options& options);

/// Exact one-step change of ||B||_F^2 in terms of the time-t quantities.
double b_norm_change_exact(const FactorState& state, const Matrix& sigma, double eta);
/// The upper bound -2 eta lambda_d(P)||B||^2 + eta ||B^T A|| ||K^TK - J^TJ|| + eta^2 ||G||^2.
double b_norm_change_bound(const FactorState& state, const Matrix& sigma, double eta);

/// Checks the exact identity (relative 1e-9) and the inequality on consecutive
/// snapshot pairs with t >= from_t. Scalars: "max_growth_factor" and
/// "cumulative_growth" (max ||B_t||^2 / ||B_from||^2).
ConditionReport check_B_recursion(std::span<const FactorState> snapshots,
                                  const ProblemInstance& instance, double eta, long from_t = 0);

}  // namespace lowrank
