#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lowrank/problem.hpp"

namespace lowrank::lab {

enum class Mode { kTheory, kPractical };

/// Flat key = value configuration. A comma-separated value on a sweepable key
/// (seed, eta, delta, sigma_d) defines a sweep axis.
struct ExperimentConfig {
  // Instance.
  int m = 20;
  int n = 20;
  int d = 2;
  std::vector<double> singular_values;  // explicit spectrum; overrides kappa
  double kappa = 2.0;                   // geometric spectrum from sigma_d to kappa*sigma_d
  std::vector<double> sigma_d{1.0};
  std::optional<std::uint64_t> unitary_seed;

  // Scales.
  Mode mode = Mode::kPractical;
  std::optional<double> epsilon;
  std::vector<double> eta;
  double k_eps = 1.0;
  double k_eta = 1.0;
  bool override_theory = false;
  double c = kDefaultRandomMatrixConstant;
  std::optional<double> e_b;  // defaults to 2c
  double lambda = 0.0;
  double stage2_b_const = 1.0;

  // Trajectory.
  std::vector<std::uint64_t> seed{0};
  long T_max = 100000;
  std::vector<double> delta{1e-10};
  long record_every = 1;
  long snapshot_every = 0;

  // verify-lemmas.
  long samples = 1000;
  int d_min = 1;
  int d_max = 6;
  std::vector<double> beta{0.25, 0.5, 0.75};
  long identity_samples = 100;

  // oracle-compare.
  std::optional<double> t_end;  // defaults to 1/sigma_d
  std::optional<double> dt;     // defaults to 1e-4/sigma_1
  double a0 = 0.1;

  /// Every set key, one "key = value" per line, sorted. Parses back to an
  /// equivalent config.
  std::string canonical_text() const;
  double effective_e_b() const { return e_b.value_or(2.0 * c); }
};

/// Parses config text. Throws ValidationError on unknown keys, malformed values
/// or theory-mode overrides without override_theory. `force_override` acts as
/// override_theory = true.
ExperimentConfig parse_config(const std::string& text, bool force_override = false);
ExperimentConfig load_config(const std::filesystem::path& path, bool force_override = false);

/// FNV-1a 64 of canonical_text(), as 16 hex digits.
std::string config_hash(const ExperimentConfig& config);

/// Spectrum for a given sigma_d: explicit singular values rescaled so the last
/// equals sigma_d, or a geometric ladder with ratio kappa over d values.
std::vector<double> spectrum_for(const ExperimentConfig& config, double sigma_d);

/// One fully resolved grid point.
struct RunPoint {
  std::size_t index = 0;
  ProblemInstance instance;
  double epsilon = 0.0;
  double eta = 0.0;
  double delta = 0.0;
  std::uint64_t seed = 0;
  double sigma_d = 0.0;
};

/// Grid in deterministic order: seed (outermost), eta, sigma_d, delta. Every
/// row uses its seed-axis value, so rows that differ only in eta or delta start
/// from the same initialization.
std::vector<RunPoint> expand_grid(const ExperimentConfig& config);

}  // namespace lowrank::lab
