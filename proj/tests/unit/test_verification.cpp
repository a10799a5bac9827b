#include <gtest/gtest.h>

#include <cmath>

#include "lowrank/errors.hpp"
#include "lowrank/phases.hpp"
#include "lowrank/verification.hpp"
#include "test_support.hpp"

using namespace lowrank;
using lowrank::testing::diagonal_instance;
using lowrank::testing::gaussian;
using lowrank::testing::random_spd;
using lowrank::testing::random_state;

namespace {

Matrix diag_of(const Vector& v) { return Matrix(v.asDiagonal()); }

LemmaParams params(double beta, double eta, const Vector& s) {
  return LemmaParams{beta, eta, s.maxCoeff(), s.minCoeff()};
}

}  // namespace

TEST(LemmaConstant, ValuesAndDomain) {
  EXPECT_DOUBLE_EQ(lemma_constant(0.5), 22.0);
  EXPECT_DOUBLE_EQ(lemma_constant(0.25), 9.5 / 0.75);
  EXPECT_THROW(lemma_constant(0.0), ValidationError);
  EXPECT_THROW(lemma_constant(1.0), ValidationError);
  EXPECT_THROW(lemma_constant(-0.5), ValidationError);
  EXPECT_THROW(lemma_constant(1.5), ValidationError);
}

TEST(LemmaS, FixedPoint) {
  const Vector s = Vector::LinSpaced(3, 3.0, 1.0);
  const Matrix sigma = diag_of(s);
  const LemmaCheck c = check_lemma_S(sigma, sigma, params(0.5, 0.5 / (8 * 3.0), s));
  ASSERT_TRUE(c.hypotheses_met);
  EXPECT_NEAR(c.lhs, 1.0, 1e-14);
  EXPECT_LT(c.rhs, c.lhs);
  EXPECT_TRUE(c.holds);
}

TEST(LemmaS, ZeroStepHasZeroSlack) {
  std::mt19937_64 rng(1);
  const Vector s = Vector::LinSpaced(4, 2.0, 1.0);
  const Matrix S = random_spd(4, 0.1, 1.5, rng);
  const LemmaCheck c = check_lemma_S(S, diag_of(s), params(0.5, 0.0, s));
  ASSERT_TRUE(c.hypotheses_met);
  EXPECT_EQ(c.slack, 0.0);
  EXPECT_TRUE(c.holds);
}

TEST(LemmaS, LhsMatchesDirectEvaluation) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    std::mt19937_64 rng(seed);
    const int d = 1 + static_cast<int>(seed % 6);
    const Vector s = Vector::LinSpaced(d + 1, 2.0, 0.5).head(d);
    const Matrix sigma = diag_of(s);
    const Matrix S = random_spd(d, 0.01, 3.5, rng);
    const double eta = 0.5 / (8 * 2.0);
    const double s1 = s.maxCoeff(), sd = s.minCoeff();
    const LemmaCheck c = check_lemma_S(S, sigma, params(0.5, eta, s));
    ASSERT_TRUE(c.hypotheses_met);
    const Matrix W = Matrix::Identity(d, d) + eta * (sigma - S);
    const Matrix next = W * S * W;
    Eigen::SelfAdjointEigenSolver<Matrix> e(S), en(0.5 * (next + next.transpose()));
    const double expected_rhs =
        std::pow(1 + eta * (sd - e.eigenvalues()(0)), 2) * e.eigenvalues()(0) -
        22.0 * s1 * s1 * s1 * eta * eta;
    EXPECT_NEAR(c.lhs, en.eigenvalues()(0), 1e-13);
    EXPECT_NEAR(c.rhs, expected_rhs, 1e-13);
    EXPECT_TRUE(c.holds);
  }
}

TEST(LemmaS, HypothesisViolationsAreSkipped) {
  const Vector s = Vector::LinSpaced(2, 2.0, 1.0);
  const Matrix sigma = diag_of(s);
  // Step too large for beta.
  const LemmaCheck big = check_lemma_S(sigma, sigma, params(0.5, 1.0, s));
  EXPECT_FALSE(big.hypotheses_met);
  EXPECT_FALSE(big.skip_reason.empty());
  // sigma_1(S) above 2 sigma_1.
  const LemmaCheck large = check_lemma_S(5.0 * sigma, sigma, params(0.5, 0.01, s));
  EXPECT_FALSE(large.hypotheses_met);
}

TEST(LemmaS, RhsDecreasesWithBeta) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    const Vector s = Vector::LinSpaced(3, 2.0, 1.0);
    const Matrix S = random_spd(3, 0.1, 3.0, rng);
    const double eta = 0.25 / (8 * 2.0);
    const LemmaCheck lo = check_lemma_S(S, diag_of(s), params(0.25, eta, s));
    const LemmaCheck hi = check_lemma_S(S, diag_of(s), params(0.75, eta, s));
    ASSERT_TRUE(lo.hypotheses_met && hi.hypotheses_met);
    EXPECT_GE(lo.rhs, hi.rhs);
  }
}

TEST(LemmaP, PositiveSemidefiniteStaysNonNegative) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    const Vector s = Vector::LinSpaced(3, 2.0, 1.0);
    const Matrix P = random_spd(3, 0.0, 2.0, rng);
    const LemmaCheck c = check_lemma_P(P, diag_of(s), params(0.5, 0.5 / 16.0, s));
    ASSERT_TRUE(c.hypotheses_met);
    EXPECT_GE(c.lhs, -1e-14);
    EXPECT_EQ(c.rhs, 0.0);
    EXPECT_TRUE(c.holds);
  }
}

TEST(LemmaP, ZeroMatrix) {
  const Vector s = Vector::LinSpaced(2, 2.0, 1.0);
  const LemmaCheck c =
      check_lemma_P(Matrix::Zero(2, 2), diag_of(s), params(0.5, 0.5 / 16.0, s));
  ASSERT_TRUE(c.hypotheses_met);
  EXPECT_EQ(c.lhs, 0.0);
  EXPECT_EQ(c.rhs, 0.0);
  EXPECT_TRUE(c.holds);
}

TEST(LemmaP, IndefiniteSamplesHold) {
  long checked = 0;
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    std::mt19937_64 rng(seed);
    const int d = 1 + static_cast<int>(seed % 6);
    const Vector s = Vector::LinSpaced(d, 3.0, 1.0);
    Matrix P = gaussian(d, d, rng, 0.8);
    P = (0.5 * (P + P.transpose())).eval();
    const LemmaCheck c = check_lemma_P(P, diag_of(s), params(0.5, 0.5 / 24.0, s));
    if (!c.hypotheses_met) continue;
    ++checked;
    EXPECT_TRUE(c.holds) << "seed " << seed << " slack " << c.slack;
  }
  EXPECT_GT(checked, 250);
}

TEST(LemmaSweep, ThousandSamplesPerLemmaWithoutViolations) {
  LemmaSweepOptions o;
  o.samples = 1000;
  o.seed = 2024;
  const LemmaSweepReport r = run_lemma_sweep(o);
  ASSERT_EQ(r.tallies.size(), 7u);
  for (const auto& t : r.tallies) {
    EXPECT_EQ(t.violations, 0) << t.lemma << " beta " << t.beta;
    if (t.lemma == "commuting_identity") {
      EXPECT_EQ(t.checked, 100);
    } else {
      EXPECT_EQ(t.checked, 1000) << t.lemma;
    }
  }
  EXPECT_EQ(r.total_violations(), 0);
}

TEST(LemmaSweep, ZeroSamplesGivesEmptyTallies) {
  LemmaSweepOptions o;
  o.samples = 0;
  o.identity_samples = 0;
  const LemmaSweepReport r = run_lemma_sweep(o);
  for (const auto& t : r.tallies) EXPECT_EQ(t.checked, 0);
  EXPECT_EQ(r.total_violations(), 0);
}

TEST(LemmaSweep, RejectsBadOptions) {
  LemmaSweepOptions o;
  o.betas = {1.2};
  EXPECT_THROW(run_lemma_sweep(o), ValidationError);
  o.betas = {0.5};
  o.d_min = 4;
  o.d_max = 2;
  EXPECT_THROW(run_lemma_sweep(o), ValidationError);
}

TEST(LemmaSweep, Deterministic) {
  LemmaSweepOptions o;
  o.samples = 50;
  o.seed = 3;
  const auto a = run_lemma_sweep(o), b = run_lemma_sweep(o);
  ASSERT_EQ(a.tallies.size(), b.tallies.size());
  for (std::size_t i = 0; i < a.tallies.size(); ++i) {
    EXPECT_EQ(a.tallies[i].worst_slack, b.tallies[i].worst_slack);
  }
}

TEST(Stage1Conditions, SymmetricBalancedStartKeepsFullAsymmetrySlack) {
  const auto inst = diagonal_instance(6, 5, {2.0, 1.0});
  const double eps = 0.01, c = 3.0;
  FactorPair init{Matrix::Zero(6, 2), Matrix::Zero(5, 2)};
  init.U.topRows(2) = eps * Matrix::Identity(2, 2);
  init.V.topRows(2) = eps * Matrix::Identity(2, 2);
  TrajectoryOptions o;
  o.T_max = 3000;
  o.stop_loss = 1e-10;
  const Trajectory tr = run_trajectory(inst, init, 0.05, o);
  Stage1Options s1;
  s1.epsilon = eps;
  s1.c = c;
  s1.e_b = 2 * c;
  s1.T0 = detect_phases(tr, inst, 1e-10).T0;
  const ConditionReport r = check_stage1_conditions(tr, inst, s1);
  const ConditionSeries* b = r.find("B_fro");
  ASSERT_NE(b, nullptr);
  ASSERT_FALSE(b->slack.empty());
  for (double v : b->slack) EXPECT_DOUBLE_EQ(v, 2 * c * 2 * eps);
}

TEST(Stage1Conditions, DeterministicAndSlackSignMatches) {
  const auto inst = diagonal_instance(20, 20, {2.0, 1.0});
  const double eps = theory_epsilon(inst);
  const FactorPair init = init_factors(20, 20, 2, InitSpec{eps, 4, kDefaultRandomMatrixConstant});
  TrajectoryOptions o;
  o.T_max = 5000;
  o.stop_loss = 1e-10;
  const Trajectory tr = run_trajectory(inst, init, 0.005, o);
  Stage1Options s1;
  s1.epsilon = eps;
  s1.T0 = detect_phases(tr, inst, 1e-10).T0;
  const ConditionReport a = check_stage1_conditions(tr, inst, s1);
  const ConditionReport b = check_stage1_conditions(tr, inst, s1);
  ASSERT_EQ(a.series.size(), b.series.size());
  for (std::size_t i = 0; i < a.series.size(); ++i) {
    EXPECT_EQ(a.series[i].slack, b.series[i].slack);
    const auto& s = a.series[i];
    const bool any_negative = std::any_of(s.slack.begin(), s.slack.end(),
                                          [](double v) { return v < 0.0; });
    EXPECT_EQ(any_negative, !s.holds()) << s.name;
  }
  EXPECT_TRUE(a.all_hold());
  EXPECT_EQ(a.scalars.at("T0_detected"), 1.0);
  EXPECT_EQ(a.scalars.at("monotone_regime"), 1.0);
}

TEST(Stage1Conditions, EnvelopeConstantIsTheWorstRatio) {
  const auto inst = diagonal_instance(20, 20, {2.0, 1.0});
  const double eps = theory_epsilon(inst);
  const FactorPair init = init_factors(20, 20, 2, InitSpec{eps, 5, kDefaultRandomMatrixConstant});
  TrajectoryOptions o;
  o.T_max = 5000;
  o.stop_loss = 1e-10;
  const Trajectory tr = run_trajectory(inst, init, 0.005, o);
  Stage1Options s1;
  s1.epsilon = eps;
  s1.e_b = 300.0;
  s1.T0 = detect_phases(tr, inst, 1e-10).T0;
  const ConditionReport r = check_stage1_conditions(tr, inst, s1);
  const double unit = 300.0 * 300.0 * eps * eps * 40.0 * 2 * 2.0;
  const double runit = 0.005 * 300.0 * 300.0 * eps * eps * 40.0 * 2 * 2.0;
  double k = 0.0, ke = 0.0;
  for (const auto& rec : tr.records) {
    if (rec.t > *s1.T0) break;
    k = std::max(k, -rec.lambda_min_P / unit);
    if (rec.E_residual_op) ke = std::max(ke, *rec.E_residual_op / runit);
  }
  EXPECT_DOUBLE_EQ(r.scalars.at("P_envelope_k"), k);
  EXPECT_DOUBLE_EQ(r.scalars.at("E_residual_k"), ke);
  std::printf("fitted envelope constants: lambda_d(P) k = %.3e, E residual k = %.3e\n", k, ke);
}

TEST(Stage2Conditions, ExactFactorizationHoldsEverywhere) {
  const auto inst = diagonal_instance(5, 4, {4.0, 1.0});
  FactorPair init{Matrix::Zero(5, 2), Matrix::Zero(4, 2)};
  init.U(0, 0) = init.V(0, 0) = 2.0;
  init.U(1, 1) = init.V(1, 1) = 1.0;
  TrajectoryOptions o;
  o.T_max = 10;
  const Trajectory tr = run_trajectory(inst, init, 0.05, o);
  Stage2Options s2;
  s2.T0 = 0;
  s2.epsilon = 0.01;
  const ConditionReport r = check_stage2_conditions(tr, inst, s2);
  EXPECT_TRUE(r.all_hold());
  const ConditionSeries* delta = r.find("Delta");
  ASSERT_NE(delta, nullptr);
  EXPECT_DOUBLE_EQ(delta->slack.front(), 0.4 * 1.0);
}

TEST(Stage2Conditions, ResidualBoundAtEntry) {
  const auto inst = diagonal_instance(20, 20, {3.0, 1.5, 1.0});
  const double eps = theory_epsilon(inst);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const FactorPair init = init_factors(20, 20, 3, InitSpec{eps, seed, kDefaultRandomMatrixConstant});
    TrajectoryOptions o;
    o.T_max = 20000;
    o.stop_loss = 1e-10;
    const Trajectory tr = run_trajectory(inst, init, 0.01 / 3.0, o);
    const PhaseReport ph = detect_phases(tr, inst, 1e-10);
    ASSERT_TRUE(ph.T0.has_value());
    Stage2Options s2;
    s2.T0 = *ph.T0;
    s2.epsilon = eps;
    const ConditionReport r = check_stage2_conditions(tr, inst, s2);
    const ConditionSeries* delta = r.find("Delta");
    ASSERT_NE(delta, nullptr);
    EXPECT_EQ(delta->t.front(), *ph.T0);
    EXPECT_GE(delta->slack.front(), 0.0);
    EXPECT_TRUE(r.all_hold());
  }
}

TEST(Stage2Conditions, NeedsRecordsPastEntry) {
  const auto inst = diagonal_instance(4, 4, {2.0, 1.0});
  TrajectoryOptions o;
  o.T_max = 5;
  const Trajectory tr =
      run_trajectory(inst, init_factors(4, 4, 2, InitSpec{0.01, 1, 3.0}), 0.01, o);
  Stage2Options s2;
  s2.T0 = 100;
  EXPECT_THROW(check_stage2_conditions(tr, inst, s2), InsufficientDataError);
}

TEST(BRecursion, ExactChangeMatchesTheStep) {
  const auto inst = diagonal_instance(7, 6, {2.0, 1.5, 1.0});
  const Matrix sigma = inst.principal_sigma();
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    std::mt19937_64 rng(seed);
    const FactorState s = random_state(inst, rng, 0.6);
    const double eta = 0.02;
    const FactorState next = gd_step_blocks(s, inst, eta);
    const double before = 0.25 * (s.U - s.V).squaredNorm();
    const double after = 0.25 * (next.U - next.V).squaredNorm();
    EXPECT_NEAR(b_norm_change_exact(s, sigma, eta), after - before,
                1e-12 * std::max(before, 1.0));
  }
}

TEST(BRecursion, ZeroAsymmetryWithoutComplement) {
  const auto inst = diagonal_instance(3, 3, {2.0, 1.0, 0.5});
  std::mt19937_64 rng(1);
  const Matrix A = gaussian(3, 3, rng, 0.5);
  FactorState s = FactorState::from_full(A, A, 3);
  EXPECT_EQ(b_norm_change_exact(s, inst.principal_sigma(), 0.05), 0.0);
  EXPECT_EQ(b_norm_change_bound(s, inst.principal_sigma(), 0.05), 0.0);
}

TEST(BRecursion, InequalityWithoutComplement) {
  const auto inst = diagonal_instance(3, 3, {2.0, 1.0, 0.5});
  const Matrix sigma = inst.principal_sigma();
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(seed);
    const FactorState s = random_state(inst, rng, 0.8);
    const double eta = 0.03;
    const FactorState next = gd_step_blocks(s, inst, eta);
    const double change =
        0.25 * (next.U - next.V).squaredNorm() - 0.25 * (s.U - s.V).squaredNorm();
    EXPECT_LE(change, b_norm_change_bound(s, sigma, eta) + 1e-13);
  }
}

TEST(BRecursion, TrajectoryChecksAndBoundedGrowthAfterEntry) {
  const auto inst = diagonal_instance(20, 20, {2.0, 1.0});
  const double eps = theory_epsilon(inst);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const FactorPair init = init_factors(20, 20, 2, InitSpec{eps, seed, kDefaultRandomMatrixConstant});
    TrajectoryOptions o;
    o.T_max = 20000;
    o.stop_loss = 1e-10;
    o.snapshot_every = 1;
    const Trajectory tr = run_trajectory(inst, init, 0.005, o);
    const PhaseReport ph = detect_phases(tr, inst, 1e-10);
    ASSERT_TRUE(ph.T0.has_value());
    const ConditionReport all = check_B_recursion(tr.snapshots, inst, tr.eta);
    EXPECT_TRUE(all.all_hold());
    const ConditionReport late = check_B_recursion(tr.snapshots, inst, tr.eta, *ph.T0);
    EXPECT_TRUE(late.all_hold());
    EXPECT_LE(late.scalars.at("cumulative_growth"), std::exp(8.0 / 5.0) * 1.1);
  }
}
