#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lowrank/dynamics.hpp"
#include "lowrank/problem.hpp"

namespace lowrank {

/// Ordinary least squares y = slope * x + intercept.
struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  long used = 0;
  long dropped = 0;  // non-positive values removed before a log fit
};

/// Plain OLS. Throws InsufficientDataError with fewer than `min_points` points.
LineFit fit_line(std::span<const double> x, std::span<const double> y, long min_points = 2);

/// OLS of ln(y) against x after dropping non-positive y. Needs >= 10 points.
LineFit fit_log_linear(std::span<const double> x, std::span<const double> y);

struct TimeWindow {
  long begin = 0;
  long end = 0;  // inclusive
};

struct PhaseReport {
  double delta = 0.0;
  std::optional<long> T1;  // first t with sigma_d(A_t) >= sqrt(sigma_d / 2)
  std::optional<long> T2;  // T0 - T1
  std::optional<long> T0;  // first t >= T1 with sigma_1(P_t) <= sigma_d / 4
  std::optional<long> Tf;  // first t with loss <= delta
  std::optional<LineFit> growth;  // fit of ln(s/(sigma_d - s)) on [0, T1]
  std::optional<LineFit> decay;   // fit of ln Delta on [T0, Tf]
  std::optional<double> growth_rate;  // exp(growth slope), per step
  std::optional<double> decay_rate;   // exp(decay slope), per step
  /// T2 / ((1 / (eta sigma_d)) ln kappa); absent when kappa = 1 or eta = 0.
  std::optional<double> T2_normalized;
  std::vector<std::string> warnings;
};

/// Threshold crossings on the recorded time labels (first index, no hysteresis).
/// Rates are fitted when their windows hold enough points; otherwise a warning
/// is added and the rate is left empty.
PhaseReport detect_phases(const Trajectory& trajectory, const ProblemInstance& instance,
                          double delta);

/// Slope of ln(s_t / (sigma_d - s_t)) against t with s_t = sigma_d(A_t)^2.
/// The default window is [0, T1] from detect_phases.
LineFit fit_growth_rate(const Trajectory& trajectory, const ProblemInstance& instance,
                        std::optional<TimeWindow> window = std::nullopt);

/// Slope of ln Delta_t against t. The default window is [T0, Tf].
LineFit fit_decay_rate(const Trajectory& trajectory, const ProblemInstance& instance,
                       std::optional<TimeWindow> window = std::nullopt, double delta = 0.0);

struct SweepPoint {
  double delta = 0.0;
  std::optional<long> Tf;
  std::optional<long> T0;
};

struct ScalingFit {
  LineFit fit;       // Tf against ln(1/delta)
  long excluded = 0; // undetected or saturated points (Tf <= T0)
};

/// Fits Tf against ln(1/delta). Needs >= 4 usable points.
ScalingFit total_time_scaling(std::span<const SweepPoint> points);

}  // namespace lowrank
