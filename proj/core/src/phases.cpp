#include "lowrank/phases.hpp"

#include <cmath>
#include <sstream>

#include "lowrank/errors.hpp"

namespace lowrank {

LineFit fit_line(std::span<const double> x, std::span<const double> y, long min_points) {
  if (x.size() != y.size()) throw ValidationError("fit_line: x and y differ in length");
  const long n = static_cast<long>(x.size());
  if (n < min_points || n < 2) {
    std::ostringstream msg;
    msg << "fit needs at least " << std::max(min_points, 2L) << " points, got " << n;
    throw InsufficientDataError(msg.str());
  }
  double mx = 0.0, my = 0.0;
  for (long i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (long i = 0; i < n; ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  if (!(sxx > 0.0)) throw InsufficientDataError("fit needs at least two distinct x values");
  LineFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.r2 = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  fit.used = n;
  return fit;
}

LineFit fit_log_linear(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ValidationError("fit_log_linear: x and y differ in length");
  std::vector<double> xs, ys;
  long dropped = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (y[i] > 0.0 && std::isfinite(y[i])) {
      xs.push_back(x[i]);
      ys.push_back(std::log(y[i]));
    } else {
      ++dropped;
    }
  }
  LineFit fit = fit_line(xs, ys, 10);
  fit.dropped = dropped;
  return fit;
}

namespace {

struct Crossings {
  std::optional<long> T1, T0, Tf;
};

Crossings find_crossings(const std::vector<DiagnosticsRecord>& records,
                         const ProblemInstance& instance, double delta) {
  const double signal = std::sqrt(instance.sigma_d() / 2.0);
  const double p_target = instance.sigma_d() / 4.0;
  Crossings c;
  for (const auto& r : records) {
    if (!c.T1 && r.sigma_d_A >= signal) c.T1 = r.t;
    if (c.T1 && !c.T0 && r.sigma_1_P <= p_target) c.T0 = r.t;
    if (!c.Tf && r.loss <= delta) c.Tf = r.t;
  }
  return c;
}

}  // namespace

PhaseReport detect_phases(const Trajectory& trajectory, const ProblemInstance& instance,
                          double delta) {
  PhaseReport report;
  report.delta = delta;
  const double sigma_d = instance.sigma_d();
  const double signal = std::sqrt(sigma_d / 2.0);
  const double p_target = sigma_d / 4.0;

  const Crossings c = find_crossings(trajectory.records, instance, delta);
  report.T1 = c.T1;
  report.T0 = c.T0;
  report.Tf = c.Tf;
  if (report.T0) report.T2 = *report.T0 - *report.T1;

  // Re-crossings are reported, not acted on.
  for (const auto& r : trajectory.records) {
    if (report.T1 && r.t > *report.T1 && r.sigma_d_A < signal) {
      std::ostringstream msg;
      msg << "sigma_d(A) fell back below sqrt(sigma_d/2) at t=" << r.t;
      report.warnings.push_back(msg.str());
      break;
    }
  }
  for (const auto& r : trajectory.records) {
    if (report.T0 && r.t > *report.T0 && r.sigma_1_P > p_target) {
      std::ostringstream msg;
      msg << "sigma_1(P) rose back above sigma_d/4 at t=" << r.t;
      report.warnings.push_back(msg.str());
      break;
    }
  }

  const double eta = trajectory.eta;
  if (report.T2 && eta > 0.0 && instance.kappa() > 1.0) {
    report.T2_normalized = *report.T2 / (std::log(instance.kappa()) / (eta * sigma_d));
  }

  if (report.T1) {
    try {
      report.growth = fit_growth_rate(trajectory, instance, TimeWindow{0, *report.T1});
      report.growth_rate = std::exp(report.growth->slope);
    } catch (const InsufficientDataError& e) {
      report.warnings.push_back(std::string("growth rate not fitted: ") + e.what());
    }
  }
  if (report.T0 && report.Tf) {
    try {
      report.decay = fit_decay_rate(trajectory, instance, TimeWindow{*report.T0, *report.Tf});
      report.decay_rate = std::exp(report.decay->slope);
    } catch (const InsufficientDataError& e) {
      report.warnings.push_back(std::string("decay rate not fitted: ") + e.what());
    }
  }
  return report;
}

LineFit fit_growth_rate(const Trajectory& trajectory, const ProblemInstance& instance,
                        std::optional<TimeWindow> window) {
  if (!window) {
    const Crossings c = find_crossings(trajectory.records, instance, 0.0);
    if (!c.T1) throw InsufficientDataError("growth fit: T1 was not detected");
    window = TimeWindow{0, *c.T1};
  }
  const double sigma_d = instance.sigma_d();
  std::vector<double> x, y;
  for (const auto& r : trajectory.records) {
    if (r.t < window->begin || r.t > window->end) continue;
    const double s = r.sigma_d_A * r.sigma_d_A;
    x.push_back(static_cast<double>(r.t));
    y.push_back(s < sigma_d ? s / (sigma_d - s) : -1.0);
  }
  return fit_log_linear(x, y);
}

LineFit fit_decay_rate(const Trajectory& trajectory, const ProblemInstance& instance,
                       std::optional<TimeWindow> window, double delta) {
  if (!window) {
    const Crossings c = find_crossings(trajectory.records, instance, delta);
    if (!c.T0 || !c.Tf) throw InsufficientDataError("decay fit: T0 or Tf not detected");
    window = TimeWindow{*c.T0, *c.Tf};
  }
  std::vector<double> x, y;
  for (const auto& r : trajectory.records) {
    if (r.t < window->begin || r.t > window->end) continue;
    x.push_back(static_cast<double>(r.t));
    y.push_back(r.Delta);
  }
  return fit_log_linear(x, y);
}

ScalingFit total_time_scaling(std::span<const SweepPoint> points) {
  std::vector<double> x, y;
  ScalingFit out;
  for (const auto& p : points) {
    if (!(p.delta > 0.0)) throw ValidationError("sweep deltas must be positive");
    if (!p.Tf || (p.T0 && *p.Tf <= *p.T0)) {
      ++out.excluded;
      continue;
    }
    x.push_back(std::log(1.0 / p.delta));
    y.push_back(static_cast<double>(*p.Tf));
  }
  out.fit = fit_line(x, y, 4);
  return out;
}

}  // namespace lowrank
