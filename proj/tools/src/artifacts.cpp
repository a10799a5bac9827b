#include "lowrank_lab/artifacts.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "lowrank/errors.hpp"

namespace lowrank::lab {

namespace {

constexpr const char* kHashPrefix = "# config_hash: ";

void write_record(std::ostream& out, const DiagnosticsRecord& r) {
  out << r.t << ',' << format_double(r.loss) << ',' << format_double(r.rel_loss) << ','
      << format_double(r.sigma_d_A) << ',' << format_double(r.sigma_1_A) << ','
      << format_double(r.B_fro) << ',' << format_double(r.J_op) << ','
      << format_double(r.K_op) << ',' << format_double(r.lambda_min_P) << ','
      << format_double(r.sigma_1_P) << ',' << format_double(r.Delta) << ','
      << format_double(r.balance_gap) << ',';
  if (r.E_residual_op) out << format_double(*r.E_residual_op);
  out << '\n';
}

void write_header(std::ostream& out, bool with_time) {
  if (with_time) out << "time,";
  const auto& cols = trajectory_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << '\n';
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_cell(const std::string& s) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw ValidationError("bad CSV cell '" + s + "'");
    return v;
  } catch (const std::logic_error&) {
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    throw ValidationError("bad CSV cell '" + s + "'");
  }
}

Json optional_long(const std::optional<long>& v) { return v ? Json(*v) : Json(nullptr); }
Json optional_double(const std::optional<double>& v) {
  return v && std::isfinite(*v) ? Json(*v) : Json(nullptr);
}
Json finite_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

}  // namespace

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

const std::vector<std::string>& trajectory_columns() {
  static const std::vector<std::string> cols{
      "t",           "loss",         "rel_loss",  "sigma_d_A", "sigma_1_A",
      "B_fro",       "J_op",         "K_op",      "lambda_min_P", "sigma_1_P",
      "Delta",       "balance_gap",  "E_residual_op"};
  return cols;
}

void write_trajectory_csv(std::ostream& out, const std::vector<DiagnosticsRecord>& records,
                          const std::string& hash) {
  out << kHashPrefix << hash << '\n';
  write_header(out, false);
  for (const auto& r : records) write_record(out, r);
}

void write_flow_csv(std::ostream& out, const std::vector<double>& time,
                    const std::vector<DiagnosticsRecord>& records, const std::string& hash) {
  if (time.size() != records.size()) {
    throw ValidationError("write_flow_csv: time and record counts differ");
  }
  out << kHashPrefix << hash << '\n';
  write_header(out, true);
  for (std::size_t i = 0; i < records.size(); ++i) {
    out << format_double(time[i]) << ',';
    write_record(out, records[i]);
  }
}

std::string read_csv_hash(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) return "";
  const std::string prefix = kHashPrefix;
  if (line.rfind(prefix, 0) != 0) return "";
  return line.substr(prefix.size());
}

CsvTrajectory read_trajectory_csv(std::istream& in) {
  CsvTrajectory out;
  out.hash = read_csv_hash(in);
  if (out.hash.empty()) throw ValidationError("trajectory CSV has no config hash line");
  std::string line;
  if (!std::getline(in, line) || split_csv(line) != trajectory_columns()) {
    throw ValidationError("trajectory CSV header does not match the documented columns");
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != trajectory_columns().size()) {
      throw ValidationError("trajectory CSV row has the wrong number of cells");
    }
    DiagnosticsRecord r;
    r.t = static_cast<long>(parse_cell(cells[0]));
    r.loss = parse_cell(cells[1]);
    r.rel_loss = parse_cell(cells[2]);
    r.sigma_d_A = parse_cell(cells[3]);
    r.sigma_1_A = parse_cell(cells[4]);
    r.B_fro = parse_cell(cells[5]);
    r.J_op = parse_cell(cells[6]);
    r.K_op = parse_cell(cells[7]);
    r.lambda_min_P = parse_cell(cells[8]);
    r.sigma_1_P = parse_cell(cells[9]);
    r.Delta = parse_cell(cells[10]);
    r.balance_gap = parse_cell(cells[11]);
    if (!cells[12].empty()) r.E_residual_op = parse_cell(cells[12]);
    r.loss_decomposed = r.loss;
    out.records.push_back(r);
  }
  return out;
}

Json to_json(const LineFit& fit) {
  return Json{{"slope", finite_or_null(fit.slope)},
              {"intercept", finite_or_null(fit.intercept)},
              {"r2", finite_or_null(fit.r2)},
              {"used", fit.used},
              {"dropped", fit.dropped}};
}

Json to_json(const PhaseReport& report) {
  Json j;
  j["delta"] = report.delta;
  j["T1"] = optional_long(report.T1);
  j["T2"] = optional_long(report.T2);
  j["T0"] = optional_long(report.T0);
  j["Tf"] = optional_long(report.Tf);
  j["growth"] = report.growth ? to_json(*report.growth) : Json(nullptr);
  j["decay"] = report.decay ? to_json(*report.decay) : Json(nullptr);
  j["growth_rate"] = optional_double(report.growth_rate);
  j["decay_rate"] = optional_double(report.decay_rate);
  j["T2_normalized"] = optional_double(report.T2_normalized);
  j["warnings"] = report.warnings;
  return j;
}

Json to_json(const ConditionReport& report) {
  Json j;
  j["stage"] = report.stage;
  j["all_hold"] = report.all_hold();
  Json scalars = Json::object();
  for (const auto& [k, v] : report.scalars) scalars[k] = finite_or_null(v);
  j["scalars"] = scalars;
  Json series = Json::array();
  for (const auto& s : report.series) {
    Json e;
    e["name"] = s.name;
    e["holds"] = s.holds();
    e["first_violation"] = optional_long(s.first_violation);
    e["count"] = s.slack.size();
    if (!s.slack.empty()) {
      const auto it = std::min_element(s.slack.begin(), s.slack.end());
      e["min_slack"] = finite_or_null(*it);
      e["min_slack_t"] = s.t[static_cast<std::size_t>(it - s.slack.begin())];
    } else {
      e["min_slack"] = nullptr;
      e["min_slack_t"] = nullptr;
    }
    Json slack = Json::array();
    for (double v : s.slack) slack.push_back(finite_or_null(v));
    e["t"] = s.t;
    e["slack"] = slack;
    series.push_back(e);
  }
  j["series"] = series;
  return j;
}

Json to_json(const LemmaSweepReport& report) {
  Json tallies = Json::array();
  for (const auto& t : report.tallies) {
    tallies.push_back(Json{{"lemma", t.lemma},
                           {"beta", t.beta},
                           {"checked", t.checked},
                           {"skipped", t.skipped},
                           {"violations", t.violations},
                           {"worst_slack", finite_or_null(t.worst_slack)}});
  }
  return Json{{"total_violations", report.total_violations()}, {"tallies", tallies}};
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw Error("write failed: " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string render_log_plot(const std::string& title, const std::string& x_label,
                            const std::vector<PlotSeries>& series, const std::string& hash) {
  constexpr double W = 640, H = 400, left = 70, right = 20, top = 40, bottom = 50;
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};

  double x_lo = std::numeric_limits<double>::infinity(), x_hi = -x_lo;
  double y_lo = x_lo, y_hi = -x_lo;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (!(s.y[i] > 0.0) || !std::isfinite(s.y[i]) || !std::isfinite(s.x[i])) continue;
      x_lo = std::min(x_lo, s.x[i]);
      x_hi = std::max(x_hi, s.x[i]);
      y_lo = std::min(y_lo, std::log10(s.y[i]));
      y_hi = std::max(y_hi, std::log10(s.y[i]));
    }
  }
  if (!std::isfinite(x_lo)) { x_lo = 0; x_hi = 1; y_lo = 0; y_hi = 1; }
  if (x_hi == x_lo) x_hi = x_lo + 1;
  y_lo = std::floor(y_lo);
  y_hi = std::ceil(y_hi);
  if (y_hi == y_lo) y_hi = y_lo + 1;

  auto px = [&](double x) { return left + (x - x_lo) / (x_hi - x_lo) * (W - left - right); };
  auto py = [&](double ly) { return top + (y_hi - ly) / (y_hi - y_lo) * (H - top - bottom); };

  std::ostringstream o;
  char buf[128];
  o << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
    << "<!-- config_hash: " << hash << " -->\n"
    << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
    << "\" font-family=\"sans-serif\" font-size=\"11\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << title
    << "</text>\n";
  std::snprintf(buf, sizeof buf,
                "<rect x=\"%.1f\" y=\"%.1f\" width=\"%.1f\" height=\"%.1f\" fill=\"none\" "
                "stroke=\"black\"/>\n",
                left, top, W - left - right, H - top - bottom);
  o << buf;
  const int decades = static_cast<int>(y_hi - y_lo);
  const int step = std::max(1, decades / 8);
  for (int k = static_cast<int>(y_lo); k <= static_cast<int>(y_hi); k += step) {
    std::snprintf(buf, sizeof buf,
                  "<line x1=\"%.1f\" x2=\"%.1f\" y1=\"%.1f\" y2=\"%.1f\" stroke=\"#ddd\"/>"
                  "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"end\">1e%d</text>\n",
                  left, W - right, py(k), py(k), left - 5, py(k) + 4, k);
    o << buf;
  }
  for (int k = 0; k <= 4; ++k) {
    const double x = x_lo + (x_hi - x_lo) * k / 4.0;
    std::snprintf(buf, sizeof buf,
                  "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"middle\">%.4g</text>\n", px(x),
                  H - bottom + 15, x);
    o << buf;
  }
  o << "<text x=\"" << W / 2 << "\" y=\"" << H - 10 << "\" text-anchor=\"middle\">" << x_label
    << "</text>\n";

  for (std::size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    const char* color = colors[si % 5];
    o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    // Thin to at most ~2000 vertices.
    const std::size_t count = std::min(s.x.size(), s.y.size());
    const std::size_t stride = std::max<std::size_t>(1, count / 2000);
    for (std::size_t i = 0; i < count; ++i) {
      if (i % stride != 0 && i + 1 != count) continue;
      if (!(s.y[i] > 0.0) || !std::isfinite(s.y[i])) continue;
      std::snprintf(buf, sizeof buf, "%.2f,%.2f ", px(s.x[i]), py(std::log10(s.y[i])));
      o << buf;
    }
    o << "\"/>\n";
    std::snprintf(buf, sizeof buf,
                  "<text x=\"%.1f\" y=\"%.1f\" fill=\"%s\">%s</text>\n", left + 10,
                  top + 15 + 14.0 * static_cast<double>(si), color, s.name.c_str());
    o << buf;
  }
  o << "</svg>\n";
  return o.str();
}

}  // namespace lowrank::lab
