#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "lowrank/dynamics.hpp"
#include "lowrank/phases.hpp"
#include "lowrank/verification.hpp"
#include "lowrank_lab/artifacts.hpp"
#include "lowrank_lab/config.hpp"

namespace lowrank::lab {

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,  // IO and other unexpected errors
  kExitValidation = 2,
  kExitDivergence = 3,
  kExitViolation = 4,
};

struct CommandOptions {
  std::optional<std::filesystem::path> out_dir;
  bool plots = true;
};

/// Everything produced by one grid point.
struct RunOutcome {
  RunPoint point;
  double lambda = 0.0;
  Trajectory trajectory;
  std::string status;  // converged | max_iter | diverged
  std::string error;
  PhaseReport phases;
  std::optional<ConditionReport> stage1;
  std::optional<ConditionReport> stage2;
  std::optional<ConditionReport> b_recursion;

  bool converged() const { return status == "converged"; }
};

/// Runs one grid point with the config's lambda unless `lambda` is given.
/// Divergence is caught and recorded in `status`.
RunOutcome execute_run(const ExperimentConfig& config, const RunPoint& point,
                       std::optional<double> lambda = std::nullopt);

const std::vector<std::string>& summary_columns();
std::string summary_header();
/// One CSV row; success_rate is supplied by the caller.
std::string summary_row(const RunOutcome& outcome, double success_rate);

/// Base of every metadata file: command, hash, canonical config, generator, versions.
Json base_metadata(const ExperimentConfig& config, const std::string& command);

int cmd_run(const ExperimentConfig& config, const CommandOptions& options, std::ostream& log);
int cmd_sweep(const ExperimentConfig& config, const CommandOptions& options, std::ostream& log);
int cmd_verify_lemmas(const ExperimentConfig& config, const CommandOptions& options,
                      std::ostream& log);
int cmd_oracle_compare(const ExperimentConfig& config, const CommandOptions& options,
                       std::ostream& log);

/// Re-reads a run directory, rejects mismatched config hashes (ValidationError),
/// recomputes phases from the trajectory CSV and writes report.json. With an
/// expected config, its hash must match too.
int cmd_report(const std::filesystem::path& dir, const std::optional<ExperimentConfig>& expected,
               std::ostream& log);

/// Sweep worker count: LOWRANK_LAB_THREADS if set and positive, else the
/// hardware concurrency, never more than `rows`.
unsigned sweep_threads(std::size_t rows);

/// Full command line entry point; returns the exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace lowrank::lab
