#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"
#include "lowrank/dynamics.hpp"
#include "lowrank/flow_oracle.hpp"
#include "lowrank/phases.hpp"
#include "lowrank/verification.hpp"

namespace lowrank::lab {

using Json = nlohmann::json;

/// Column order of trajectory CSVs.
const std::vector<std::string>& trajectory_columns();

/// "# config_hash: <hash>" line, then the header and one row per record.
/// E_residual_op is left empty when absent.
void write_trajectory_csv(std::ostream& out, const std::vector<DiagnosticsRecord>& records,
                          const std::string& hash);

/// Same schema with a leading continuous-time column "time".
void write_flow_csv(std::ostream& out, const std::vector<double>& time,
                    const std::vector<DiagnosticsRecord>& records, const std::string& hash);

struct CsvTrajectory {
  std::string hash;
  std::vector<DiagnosticsRecord> records;
};

/// Reads a trajectory CSV written by write_trajectory_csv.
CsvTrajectory read_trajectory_csv(std::istream& in);

/// Hash from a leading "# config_hash: " line; empty when missing.
std::string read_csv_hash(std::istream& in);

Json to_json(const LineFit& fit);
Json to_json(const PhaseReport& report);
/// Per-series (t, slack) arrays plus holds, first violation and the minimum slack.
Json to_json(const ConditionReport& report);
Json to_json(const LemmaSweepReport& report);

std::string format_double(double v);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

struct PlotSeries {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

/// Standalone SVG line plot with a log10 y axis. Non-positive values are
/// skipped. The hash is embedded as an XML comment.
std::string render_log_plot(const std::string& title, const std::string& x_label,
                            const std::vector<PlotSeries>& series, const std::string& hash);

}  // namespace lowrank::lab
