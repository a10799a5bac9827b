#include "lowrank_lab/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <stdexcept>

#include "lowrank/errors.hpp"

namespace lowrank::lab {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<std::string> split_ws(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string item;
  while (in >> item) out.push_back(item);
  return out;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value) {
  throw ValidationError("config: invalid value '" + value + "' for key '" + key + "'");
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto* end = v.data() + v.size();
  const auto res = std::from_chars(v.data(), end, out);
  if (res.ec != std::errc() || res.ptr != end || !std::isfinite(out)) bad_value(key, v);
  return out;
}

long to_long(const std::string& key, const std::string& v) {
  long out = 0;
  const auto* end = v.data() + v.size();
  const auto res = std::from_chars(v.data(), end, out);
  if (res.ec != std::errc() || res.ptr != end) bad_value(key, v);
  return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto* end = v.data() + v.size();
  const auto res = std::from_chars(v.data(), end, out);
  if (res.ec != std::errc() || res.ptr != end) bad_value(key, v);
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad_value(key, v);
}

std::vector<double> to_doubles(const std::string& key, const std::string& v) {
  std::vector<double> out;
  for (const auto& item : split(v, ',')) out.push_back(to_double(key, item));
  if (out.empty()) bad_value(key, v);
  return out;
}

std::string fmt(double v) {
  std::ostringstream s;
  s << std::setprecision(17) << v;
  return s.str();
}

template <typename T>
std::string join(const std::vector<T>& values, const char* sep) {
  std::ostringstream s;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) s << sep;
    if constexpr (std::is_floating_point_v<T>) {
      s << fmt(values[i]);
    } else {
      s << values[i];
    }
  }
  return s.str();
}

void require_single(const std::string& key, const std::string& v) {
  if (v.find(',') != std::string::npos) {
    throw ValidationError("config: key '" + key + "' is not a sweep axis");
  }
}

}  // namespace

ExperimentConfig parse_config(const std::string& text, bool force_override) {
  ExperimentConfig cfg;
  cfg.override_theory = force_override;
  bool explicit_eps = false;
  bool explicit_eta = false;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ValidationError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string v = trim(line.substr(eq + 1));
    if (!seen.insert(key).second) throw ValidationError("config: duplicate key '" + key + "'");

    static const std::set<std::string> sweepable{"seed", "eta", "delta", "sigma_d", "beta"};
    if (!sweepable.count(key)) require_single(key, v);

    if (key == "m") cfg.m = static_cast<int>(to_long(key, v));
    else if (key == "n") cfg.n = static_cast<int>(to_long(key, v));
    else if (key == "d") cfg.d = static_cast<int>(to_long(key, v));
    else if (key == "singular_values") {
      cfg.singular_values.clear();
      for (const auto& item : split_ws(v)) cfg.singular_values.push_back(to_double(key, item));
      if (cfg.singular_values.empty()) bad_value(key, v);
    }
    else if (key == "kappa") cfg.kappa = to_double(key, v);
    else if (key == "sigma_d") cfg.sigma_d = to_doubles(key, v);
    else if (key == "unitary_seed") cfg.unitary_seed = to_u64(key, v);
    else if (key == "mode") {
      if (v == "theory") cfg.mode = Mode::kTheory;
      else if (v == "practical") cfg.mode = Mode::kPractical;
      else bad_value(key, v);
    }
    else if (key == "epsilon") { cfg.epsilon = to_double(key, v); explicit_eps = true; }
    else if (key == "eta") { cfg.eta = to_doubles(key, v); explicit_eta = true; }
    else if (key == "k_eps") cfg.k_eps = to_double(key, v);
    else if (key == "k_eta") cfg.k_eta = to_double(key, v);
    else if (key == "override_theory") cfg.override_theory = force_override || to_bool(key, v);
    else if (key == "c") cfg.c = to_double(key, v);
    else if (key == "e_b") cfg.e_b = to_double(key, v);
    else if (key == "lambda") cfg.lambda = to_double(key, v);
    else if (key == "stage2_b_const") cfg.stage2_b_const = to_double(key, v);
    else if (key == "seed") {
      cfg.seed.clear();
      for (const auto& item : split(v, ',')) cfg.seed.push_back(to_u64(key, item));
      if (cfg.seed.empty()) bad_value(key, v);
    }
    else if (key == "T_max") cfg.T_max = to_long(key, v);
    else if (key == "delta") cfg.delta = to_doubles(key, v);
    else if (key == "record_every") cfg.record_every = to_long(key, v);
    else if (key == "snapshot_every") cfg.snapshot_every = to_long(key, v);
    else if (key == "samples") cfg.samples = to_long(key, v);
    else if (key == "d_min") cfg.d_min = static_cast<int>(to_long(key, v));
    else if (key == "d_max") cfg.d_max = static_cast<int>(to_long(key, v));
    else if (key == "beta") cfg.beta = to_doubles(key, v);
    else if (key == "identity_samples") cfg.identity_samples = to_long(key, v);
    else if (key == "t_end") cfg.t_end = to_double(key, v);
    else if (key == "dt") cfg.dt = to_double(key, v);
    else if (key == "a0") cfg.a0 = to_double(key, v);
    else throw ValidationError("config: unknown key '" + key + "'");
  }

  if (cfg.mode == Mode::kTheory && (explicit_eps || explicit_eta) && !cfg.override_theory) {
    throw ValidationError(
        "config: mode = theory derives epsilon and eta; set override_theory = true "
        "(or pass --override-theory) to supply them explicitly");
  }
  if (cfg.m < 1 || cfg.n < 1 || cfg.d < 1 || cfg.d > std::min(cfg.m, cfg.n)) {
    throw ValidationError("config: need 1 <= d <= min(m, n)");
  }
  if (cfg.c < 1.0) throw ValidationError("config: c must be >= 1");
  if (cfg.epsilon && *cfg.epsilon < 0.0) throw ValidationError("config: epsilon must be >= 0");
  for (double e : cfg.eta) {
    if (e < 0.0) throw ValidationError("config: eta must be >= 0");
  }
  for (double s : cfg.sigma_d) {
    if (!(s > 0.0)) throw ValidationError("config: sigma_d must be positive");
  }
  for (double b : cfg.delta) {
    if (!(b > 0.0)) throw ValidationError("config: delta must be positive");
  }
  if (!(cfg.kappa >= 1.0)) throw ValidationError("config: kappa must be >= 1");
  if (!cfg.singular_values.empty() && cfg.singular_values.size() != static_cast<std::size_t>(cfg.d)) {
    throw ValidationError("config: singular_values must list exactly d values");
  }
  if (cfg.lambda < 0.0) throw ValidationError("config: lambda must be >= 0");
  if (cfg.record_every < 1) throw ValidationError("config: record_every must be >= 1");
  if (cfg.snapshot_every < 0) throw ValidationError("config: snapshot_every must be >= 0");
  if (cfg.T_max < 0) throw ValidationError("config: T_max must be >= 0");
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path, bool force_override) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str(), force_override);
}

std::string ExperimentConfig::canonical_text() const {
  std::map<std::string, std::string> kv;
  kv["m"] = std::to_string(m);
  kv["n"] = std::to_string(n);
  kv["d"] = std::to_string(d);
  if (!singular_values.empty()) kv["singular_values"] = join(singular_values, " ");
  kv["kappa"] = fmt(kappa);
  kv["sigma_d"] = join(sigma_d, ",");
  if (unitary_seed) kv["unitary_seed"] = std::to_string(*unitary_seed);
  kv["mode"] = mode == Mode::kTheory ? "theory" : "practical";
  if (epsilon) kv["epsilon"] = fmt(*epsilon);
  if (!eta.empty()) kv["eta"] = join(eta, ",");
  kv["k_eps"] = fmt(k_eps);
  kv["k_eta"] = fmt(k_eta);
  kv["override_theory"] = override_theory ? "true" : "false";
  kv["c"] = fmt(c);
  if (e_b) kv["e_b"] = fmt(*e_b);
  kv["lambda"] = fmt(lambda);
  kv["stage2_b_const"] = fmt(stage2_b_const);
  kv["seed"] = join(seed, ",");
  kv["T_max"] = std::to_string(T_max);
  kv["delta"] = join(delta, ",");
  kv["record_every"] = std::to_string(record_every);
  kv["snapshot_every"] = std::to_string(snapshot_every);
  kv["samples"] = std::to_string(samples);
  kv["d_min"] = std::to_string(d_min);
  kv["d_max"] = std::to_string(d_max);
  kv["beta"] = join(beta, ",");
  kv["identity_samples"] = std::to_string(identity_samples);
  if (t_end) kv["t_end"] = fmt(*t_end);
  if (dt) kv["dt"] = fmt(*dt);
  kv["a0"] = fmt(a0);
  std::ostringstream out;
  for (const auto& [k, v] : kv) out << k << " = " << v << "\n";
  return out.str();
}

std::string config_hash(const ExperimentConfig& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : config.canonical_text()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << h;
  return out.str();
}

std::vector<double> spectrum_for(const ExperimentConfig& config, double sigma_d) {
  const int d = config.d;
  if (d < 1) throw ValidationError("config: d must be >= 1");
  std::vector<double> s(static_cast<std::size_t>(d));
  if (!config.singular_values.empty()) {
    const double scale = sigma_d / config.singular_values.back();
    for (int i = 0; i < d; ++i) s[i] = config.singular_values[i] * scale;
    return s;
  }
  for (int i = 0; i < d; ++i) {
    const double power = d == 1 ? 0.0 : static_cast<double>(d - 1 - i) / (d - 1);
    s[static_cast<std::size_t>(i)] = sigma_d * std::pow(config.kappa, power);
  }
  return s;
}

std::vector<RunPoint> expand_grid(const ExperimentConfig& config) {
  if (config.mode == Mode::kPractical && (!config.epsilon || config.eta.empty())) {
    throw ValidationError("config: mode = practical requires epsilon and eta");
  }
  std::vector<double> etas = config.eta;
  if (etas.empty()) etas.push_back(-1.0);  // theory placeholder
  std::vector<RunPoint> grid;
  for (std::uint64_t seed : config.seed) {
    for (double eta_value : etas) {
      for (double sd : config.sigma_d) {
        for (double delta : config.delta) {
          RunPoint p;
          p.index = grid.size();
          p.instance = make_instance(config.m, config.n, config.d, spectrum_for(config, sd),
                                     config.unitary_seed);
          p.sigma_d = sd;
          p.epsilon = config.epsilon ? *config.epsilon : theory_epsilon(p.instance, config.k_eps);
          p.eta = eta_value >= 0.0 ? eta_value
                                   : theory_eta(p.instance, p.epsilon, config.k_eta);
          p.delta = delta;
          p.seed = seed;
          grid.push_back(std::move(p));
        }
      }
    }
  }
  return grid;
}

}  // namespace lowrank::lab
