#include <gtest/gtest.h>

#include <cmath>

#include "lowrank/errors.hpp"
#include "lowrank/flow_oracle.hpp"
#include "lowrank/phases.hpp"
#include "test_support.hpp"

using namespace lowrank;
using lowrank::testing::diagonal_instance;

namespace {

// Records carrying only the fields the phase logic reads.
Trajectory synthetic(long n, double eta, auto&& fill) {
  Trajectory tr;
  tr.eta = eta;
  for (long t = 0; t < n; ++t) {
    DiagnosticsRecord r;
    r.t = t;
    fill(t, r);
    tr.records.push_back(r);
  }
  return tr;
}

}  // namespace

TEST(FitLine, ExactLine) {
  const std::vector<double> x{0, 1, 2, 3}, y{1, 3, 5, 7};
  const LineFit f = fit_line(x, y);
  EXPECT_NEAR(f.slope, 2.0, 1e-14);
  EXPECT_NEAR(f.intercept, 1.0, 1e-14);
  EXPECT_NEAR(f.r2, 1.0, 1e-14);
  EXPECT_EQ(f.used, 4);
  EXPECT_THROW(fit_line(std::vector<double>{1.0}, std::vector<double>{1.0}),
               InsufficientDataError);
}

TEST(FitLogLinear, DropsNonPositiveValues) {
  std::vector<double> x, y;
  for (int i = 0; i < 12; ++i) {
    x.push_back(i);
    y.push_back(std::exp(-0.5 * i));
  }
  y[3] = 0.0;
  y[7] = -1.0;
  const LineFit f = fit_log_linear(x, y);
  EXPECT_NEAR(f.slope, -0.5, 1e-12);
  EXPECT_EQ(f.used, 10);
  EXPECT_EQ(f.dropped, 2);
  y[4] = -2.0;
  EXPECT_THROW(fit_log_linear(x, y), InsufficientDataError);
}

TEST(DetectPhases, ConstructedSignalCrossing) {
  const auto inst = diagonal_instance(3, 3, {2.0, 1.0});
  const double target = std::sqrt(0.5);
  const Trajectory tr = synthetic(20, 0.1, [&](long t, DiagnosticsRecord& r) {
    r.sigma_d_A = t < 7 ? 0.1 * target : target * (1 + 0.01 * t);
    r.sigma_1_P = t < 10 ? 1.0 : 0.1;
    r.loss = std::pow(10.0, -static_cast<double>(t));
    r.Delta = 0.1;
  });
  const PhaseReport p = detect_phases(tr, inst, 1e-15);
  EXPECT_EQ(p.T1, 7);
  EXPECT_EQ(p.T0, 10);
  EXPECT_EQ(p.T2, 3);
  EXPECT_EQ(p.Tf, 15);
}

TEST(DetectPhases, StaticRunDetectsNothing) {
  const auto inst = diagonal_instance(6, 6, {2.0, 1.0});
  const FactorPair init = init_factors(6, 6, 2, InitSpec{0.01, 1, 3.0});
  TrajectoryOptions o;
  o.T_max = 50;
  const Trajectory tr = run_trajectory(inst, init, 0.0, o);
  const PhaseReport p = detect_phases(tr, inst, 1e-10);
  EXPECT_FALSE(p.T1);
  EXPECT_FALSE(p.T0);
  EXPECT_FALSE(p.Tf);
  EXPECT_FALSE(p.T2);
  const LineFit g = fit_growth_rate(tr, inst, TimeWindow{0, 50});
  EXPECT_NEAR(g.slope, 0.0, 1e-15);
}

TEST(DetectPhases, ConvergedRunOrdersThePhases) {
  const auto inst = diagonal_instance(20, 20, {3.0, 1.5, 1.0});
  const double eps = theory_epsilon(inst);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const FactorPair init = init_factors(20, 20, 3, InitSpec{eps, seed, kDefaultRandomMatrixConstant});
    TrajectoryOptions o;
    o.T_max = 20000;
    o.stop_loss = 1e-10;
    const Trajectory tr = run_trajectory(inst, init, 0.01 / 3.0, o);
    const PhaseReport p = detect_phases(tr, inst, 1e-10);
    ASSERT_TRUE(p.T1 && p.T0 && p.Tf);
    EXPECT_LE(*p.T1, *p.T0);
    EXPECT_LE(*p.T0, *p.Tf);
    EXPECT_TRUE(p.growth_rate && *p.growth_rate > 0.0);
    EXPECT_TRUE(p.decay_rate && *p.decay_rate > 0.0);
    EXPECT_TRUE(p.T2_normalized.has_value());
  }
}

TEST(DetectPhases, TimeLabelsOnlyMatterThroughOrder) {
  const auto inst = diagonal_instance(3, 3, {2.0, 1.0});
  auto fill = [&](long t, DiagnosticsRecord& r) {
    r.sigma_d_A = 0.05 * (t + 1);
    r.sigma_1_P = 1.0 / (t + 1);
    r.loss = std::exp(-0.3 * t);
    r.Delta = std::exp(-0.15 * t);
  };
  const Trajectory a = synthetic(60, 0.1, fill);
  Trajectory b = a;
  for (auto& r : b.records) r.t *= 3;
  const PhaseReport pa = detect_phases(a, inst, 1e-6);
  const PhaseReport pb = detect_phases(b, inst, 1e-6);
  ASSERT_TRUE(pa.T1 && pa.T0 && pa.Tf);
  EXPECT_EQ(*pb.T1, 3 * *pa.T1);
  EXPECT_EQ(*pb.T0, 3 * *pa.T0);
  EXPECT_EQ(*pb.Tf, 3 * *pa.Tf);
}

TEST(DetectPhases, ReCrossingIsAWarning) {
  const auto inst = diagonal_instance(3, 3, {2.0, 1.0});
  const Trajectory tr = synthetic(30, 0.1, [&](long t, DiagnosticsRecord& r) {
    r.sigma_d_A = (t >= 5 && t != 12) ? 1.0 : 0.1;
    r.sigma_1_P = 1.0;
    r.loss = 1.0;
    r.Delta = 1.0;
  });
  const PhaseReport p = detect_phases(tr, inst, 1e-10);
  EXPECT_EQ(p.T1, 5);
  EXPECT_FALSE(p.warnings.empty());
}

// s_t from the rank-1 solution sampled at spacing eta: ln(s/(sigma - s)) grows
// like 2 sigma t, i.e. 2 sigma eta per sample.
TEST(FitGrowthRate, RankOneSolutionOracle) {
  const auto inst = diagonal_instance(1, 1, {1.0});
  const double eta = 0.01, a0 = 1e-3;
  const Trajectory tr = synthetic(2000, eta, [&](long t, DiagnosticsRecord& r) {
    r.sigma_d_A = std::sqrt(rank1_solution(1.0, a0, eta * t));
  });
  const LineFit f = fit_growth_rate(tr, inst, TimeWindow{0, 200});
  EXPECT_NEAR(f.slope, 2.0 * eta, 0.1 * 2.0 * eta);
}

TEST(DetectPhases, RankOneCrossingWithinOneSample) {
  const auto inst = diagonal_instance(1, 1, {1.0});
  const double eta = 0.01, a0 = 1e-3, sigma = 1.0;
  const Trajectory tr = synthetic(3000, eta, [&](long t, DiagnosticsRecord& r) {
    const double s = rank1_solution(sigma, a0, eta * t);
    r.sigma_d_A = std::sqrt(s);
    r.sigma_1_P = sigma - s;
    r.loss = 0.5 * (sigma - s) * (sigma - s);
    r.Delta = sigma - s;
  });
  // s_t = sigma/2 when e^{2 sigma t} = sigma/a0^2 - 1.
  const double t_cross = std::log(sigma / (a0 * a0) - 1.0) / (2.0 * sigma);
  const PhaseReport p = detect_phases(tr, inst, 1e-20);
  ASSERT_TRUE(p.T1.has_value());
  EXPECT_LE(std::abs(*p.T1 * eta - t_cross), eta);
}

TEST(FitDecayRate, ExactGeometricSequence) {
  const auto inst = diagonal_instance(2, 2, {2.0, 1.0});
  const double q = 0.97;
  const Trajectory tr = synthetic(100, 0.1, [&](long t, DiagnosticsRecord& r) {
    r.Delta = 0.4 * 1.0 * std::pow(q, static_cast<double>(t));
  });
  const LineFit f = fit_decay_rate(tr, inst, TimeWindow{0, 99});
  EXPECT_NEAR(f.slope, std::log(q), 1e-12);
}

TEST(FitRates, ShortWindowsAreInsufficient) {
  const auto inst = diagonal_instance(2, 2, {2.0, 1.0});
  const Trajectory tr = synthetic(30, 0.1, [&](long t, DiagnosticsRecord& r) {
    r.Delta = std::exp(-0.1 * t);
    r.sigma_d_A = 0.01 * (t + 1);
  });
  EXPECT_THROW(fit_decay_rate(tr, inst, TimeWindow{0, 5}), InsufficientDataError);
  EXPECT_THROW(fit_growth_rate(tr, inst, TimeWindow{0, 5}), InsufficientDataError);
}

TEST(FitRates, DeskRunMeetsTheRateLaws) {
  const auto inst = diagonal_instance(20, 20, {2.0, 1.0});
  const double eps = theory_epsilon(inst);
  const double eta = 0.005;
  const FactorPair init = init_factors(20, 20, 2, InitSpec{eps, 3, kDefaultRandomMatrixConstant});
  TrajectoryOptions o;
  o.T_max = 20000;
  o.stop_loss = 1e-10;
  const Trajectory tr = run_trajectory(inst, init, eta, o);
  const PhaseReport p = detect_phases(tr, inst, 1e-10);
  ASSERT_TRUE(p.growth && p.decay);
  EXPECT_GE(p.growth->slope, 0.9 * std::log(1 + eta * inst.sigma_d()));
  EXPECT_LE(p.decay->slope, 0.9 * std::log(1 - eta * inst.sigma_d() / 2));
  // Loss decays at about twice the rate of Delta; reported only.
  std::vector<double> t, f;
  for (const auto& r : tr.records) {
    if (r.t < *p.T0) continue;
    t.push_back(static_cast<double>(r.t));
    f.push_back(r.loss);
  }
  const LineFit lf = fit_log_linear(t, f);
  std::printf("stage 2: loss slope %.4g, Delta slope %.4g, ratio %.3f\n", lf.slope,
              p.decay->slope, lf.slope / p.decay->slope);
}

TEST(TotalTimeScaling, LinearInLogInverseDelta) {
  std::vector<SweepPoint> pts;
  for (int k = 2; k <= 5; ++k) {
    const double delta = std::pow(10.0, -2.0 * k);
    pts.push_back(SweepPoint{delta, static_cast<long>(std::lround(100 + 50 * std::log(1 / delta))), 50});
  }
  const ScalingFit s = total_time_scaling(pts);
  EXPECT_NEAR(s.fit.slope, 50.0, 0.1);
  EXPECT_GE(s.fit.r2, 0.9999);
  EXPECT_EQ(s.excluded, 0);
}

TEST(TotalTimeScaling, SaturatedAndMissingPointsAreExcluded) {
  std::vector<SweepPoint> pts{{1e-1, 50, 50}, {1e-2, std::nullopt, 50}, {1e-4, 200, 50},
                              {1e-6, 300, 50}, {1e-8, 400, 50},          {1e-10, 500, 50}};
  const ScalingFit s = total_time_scaling(pts);
  EXPECT_EQ(s.excluded, 2);
  EXPECT_EQ(s.fit.used, 4);
  pts.resize(4);
  EXPECT_THROW(total_time_scaling(pts), InsufficientDataError);
}

TEST(TotalTimeScaling, HalvingTheStepDoublesTheSlope) {
  const auto inst = diagonal_instance(20, 20, {1.0, 1.0});
  const double eps = theory_epsilon(inst);
  const FactorPair init = init_factors(20, 20, 2, InitSpec{eps, 0, kDefaultRandomMatrixConstant});
  double slopes[2];
  int i = 0;
  for (double eta : {0.01, 0.005}) {
    std::vector<SweepPoint> pts;
    TrajectoryOptions o;
    o.T_max = 50000;
    o.stop_loss = 1e-10;
    const Trajectory tr = run_trajectory(inst, init, eta, o);
    for (double delta : {1e-4, 1e-6, 1e-8, 1e-10}) {
      const PhaseReport p = detect_phases(tr, inst, delta);
      pts.push_back(SweepPoint{delta, p.Tf, p.T0});
    }
    slopes[i++] = total_time_scaling(pts).fit.slope;
  }
  EXPECT_NEAR(slopes[1] / slopes[0], 2.0, 0.15 * 2.0);
}
