#pragma once

// Experiment configuration: a flat key = value file with [section] headers.
//
//   # comment
//   [physics]
//   nu = 0.1
//   [sweep]
//   tau = 0.02, 0.01, 0.005, 0.0025
//
// Unknown keys produce warnings; malformed lines and missing required keys
// raise ParseError with the offending line.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "nsda/analysis.hpp"
#include "nsda/errors.hpp"
#include "nsda/interpolants.hpp"
#include "nsda/time_schemes.hpp"

namespace nsda::harness {

struct ExperimentConfig {
  // [physics]
  double length = 2.0 * std::numbers::pi;
  int grid_size = 32;
  double nu = 0.1;
  std::string forcing = "kolmogorov";  // kolmogorov | power_law | none
  int kappa = 2;
  double grashof = 5.0;             // sets |f| = G nu^2 lambda_1
  double forcing_slope = 0.5;       // power_law: mode amplitudes ~ |k|^-slope
  double forcing_lambda_max = 0.0;  // power_law support; 0 = full band
  std::uint64_t forcing_seed = 42;
  std::optional<double> beta;       // unset = beta_factor x lower bound
  double beta_factor = 2.0;
  InterpolantKind interpolant = InterpolantKind::fourier_truncation;
  std::optional<double> h;          // unset = sqrt(h_fraction nu / (c0 beta))
  double h_fraction = 0.5;
  std::optional<double> lambda_cut; // unset = full alias-free band

  // [constants]
  AbsoluteConstants constants;  // constants.c0 is filled from c0 at setup
  std::optional<double> c0;  // unset = 1 for Fourier truncation, estimated for volume averages
  int c0_trials = 200;

  // [scheme]
  Scheme scheme = Scheme::semi_implicit;
  double tau = 0.005;
  double t_end = 20.0;
  double burn_in = 5.0;

  // [solver]
  SolverSettings solver;

  // [truth]
  std::string truth = "analytic:kolmogorov";  // nse_integrate | analytic:kolmogorov | analytic:taylor_green | steady
  double truth_tau = 5e-4;
  long truth_store_every = 5;
  double reference_ratio = 50.0;

  // [initial]
  std::string initial = "random";  // random | zero | perturbed_truth
  double initial_fraction = 0.9;   // random: ||v0|| = fraction x M1
  double initial_slope = 1.0;
  double perturbation = 1e-3;

  // [run]
  long steps = 10000;  // soak and contraction length
  long csv_every = 1;
  int workers = 1;

  // [sweep]
  std::vector<double> tau_list;
  std::vector<double> lambda_cut_list;
  std::vector<double> beta_list;
  std::vector<double> h_list;

  // [output]
  std::string out_dir = "out";
  std::uint64_t seed = 1;

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;

  void validate() const {
    if (!(burn_in < t_end)) throw ConfigError("config: burn_in must be < t_end");
    if (!(tau > 0.0)) throw ConfigError("config: tau must be positive");
    if (!(nu > 0.0)) throw ConfigError("config: nu must be positive");
    if (steps < 1 || csv_every < 1 || workers < 1) throw ConfigError("config: steps, csv_every and workers must be >= 1");
    if (forcing != "kolmogorov" && forcing != "power_law" && forcing != "none")
      throw ConfigError("config: unknown forcing '" + forcing + "'");
    if (truth != "nse_integrate" && truth != "analytic:kolmogorov" && truth != "analytic:taylor_green" && truth != "steady")
      throw ConfigError("config: unknown truth source '" + truth + "'");
    if (initial != "random" && initial != "zero" && initial != "perturbed_truth")
      throw ConfigError("config: unknown initial condition '" + initial + "'");
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct Entry {
  std::string value;
  int line;
  bool used = false;
};

class KeyValues {
 public:
  static KeyValues parse(std::istream& is) {
    KeyValues kv;
    std::string raw, section;
    int line = 0;
    while (std::getline(is, raw)) {
      ++line;
      std::string s = raw;
      if (auto hash = s.find('#'); hash != std::string::npos) s = s.substr(0, hash);
      s = trim(s);
      if (s.empty()) continue;
      if (s.front() == '[') {
        if (s.back() != ']' || s.size() < 3) throw ParseError("malformed section header '" + s + "'", line);
        section = trim(s.substr(1, s.size() - 2));
        continue;
      }
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw ParseError("expected key = value, got '" + s + "'", line);
      const std::string key = trim(s.substr(0, eq)), value = trim(s.substr(eq + 1));
      if (key.empty()) throw ParseError("empty key", line);
      if (section.empty()) throw ParseError("key '" + key + "' outside any [section]", line);
      const std::string full = section + "." + key;
      if (kv.entries_.count(full)) throw ParseError("duplicate key '" + full + "'", line);
      kv.entries_[full] = Entry{value, line};
    }
    return kv;
  }

  bool has(const std::string& key) const { return entries_.count(key) != 0; }

  const Entry* find(const std::string& key) {
    auto it = entries_.find(key);
    if (it == entries_.end()) return nullptr;
    it->second.used = true;
    return &it->second;
  }

  const Entry& require(const std::string& key) {
    const Entry* e = find(key);
    if (!e) throw ParseError("missing required key '" + key + "'", 0);
    return *e;
  }

  std::vector<std::string> unused_warnings() const {
    std::vector<std::string> w;
    for (const auto& [k, e] : entries_)
      if (!e.used) w.push_back("line " + std::to_string(e.line) + ": unknown key '" + k + "' ignored");
    return w;
  }

 private:
  std::map<std::string, Entry> entries_;
};

inline double to_double(const Entry& e, const std::string& key) {
  try {
    size_t pos = 0;
    const double v = std::stod(e.value, &pos);
    if (pos != e.value.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ParseError("key '" + key + "': expected a number, got '" + e.value + "'", e.line);
  }
}

inline long long to_integer(const Entry& e, const std::string& key) {
  try {
    size_t pos = 0;
    const long long v = std::stoll(e.value, &pos);
    if (pos != e.value.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ParseError("key '" + key + "': expected an integer, got '" + e.value + "'", e.line);
  }
}

inline std::uint64_t to_u64(const Entry& e, const std::string& key) {
  try {
    size_t pos = 0;
    if (!e.value.empty() && e.value[0] == '-') throw std::invalid_argument("negative");
    const auto v = std::stoull(e.value, &pos);
    if (pos != e.value.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ParseError("key '" + key + "': expected an unsigned integer, got '" + e.value + "'", e.line);
  }
}

inline std::vector<double> to_list(const Entry& e, const std::string& key) {
  std::vector<double> out;
  if (trim(e.value).empty()) return out;
  std::stringstream ss(e.value);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_double(Entry{trim(item), e.line}, key));
  return out;
}

}  // namespace detail

struct LoadedConfig {
  ExperimentConfig config;
  std::vector<std::string> warnings;
};

inline LoadedConfig parse_config(std::istream& is) {
  auto kv = detail::KeyValues::parse(is);
  ExperimentConfig c;
  auto dbl = [&](const std::string& k, double& out) {
    if (auto e = kv.find(k)) out = detail::to_double(*e, k);
  };
  auto integer = [&](const std::string& k, auto& out) {
    if (auto e = kv.find(k)) out = static_cast<std::remove_reference_t<decltype(out)>>(detail::to_integer(*e, k));
  };
  auto u64 = [&](const std::string& k, std::uint64_t& out) {
    if (auto e = kv.find(k)) out = detail::to_u64(*e, k);
  };
  auto str = [&](const std::string& k, std::string& out) {
    if (auto e = kv.find(k)) out = e->value;
  };
  auto opt = [&](const std::string& k, std::optional<double>& out) {
    if (auto e = kv.find(k)) out = e->value == "auto" ? std::nullopt : std::optional<double>(detail::to_double(*e, k));
  };
  auto list = [&](const std::string& k, std::vector<double>& out) {
    if (auto e = kv.find(k)) out = detail::to_list(*e, k);
  };
  auto wrap = [&](const std::string& k, auto&& convert) {
    if (auto e = kv.find(k)) {
      try {
        convert(e->value);
      } catch (const ConfigError& err) {
        throw ParseError(err.what(), e->line);
      }
    }
  };

  c.nu = detail::to_double(kv.require("physics.nu"), "physics.nu");
  c.grid_size = static_cast<int>(detail::to_integer(kv.require("physics.grid_size"), "physics.grid_size"));
  dbl("physics.length", c.length);
  str("physics.forcing", c.forcing);
  integer("physics.kappa", c.kappa);
  dbl("physics.grashof", c.grashof);
  dbl("physics.forcing_slope", c.forcing_slope);
  dbl("physics.forcing_lambda_max", c.forcing_lambda_max);
  u64("physics.forcing_seed", c.forcing_seed);
  opt("physics.beta", c.beta);
  dbl("physics.beta_factor", c.beta_factor);
  wrap("physics.interpolant", [&](const std::string& v) { c.interpolant = interpolant_kind_from_string(v); });
  opt("physics.h", c.h);
  dbl("physics.h_fraction", c.h_fraction);
  opt("physics.lambda_cut", c.lambda_cut);

  dbl("constants.c", c.constants.c);
  dbl("constants.c4", c.constants.c4);
  dbl("constants.c_alpha", c.constants.c_alpha);
  dbl("constants.alpha", c.constants.alpha);
  dbl("constants.c_minus1", c.constants.c_minus1);
  opt("constants.c0", c.c0);
  integer("constants.c0_trials", c.c0_trials);

  wrap("scheme.scheme", [&](const std::string& v) { c.scheme = scheme_from_string(v); });
  c.tau = detail::to_double(kv.require("scheme.tau"), "scheme.tau");
  c.t_end = detail::to_double(kv.require("scheme.t_end"), "scheme.t_end");
  dbl("scheme.burn_in", c.burn_in);

  dbl("solver.linear_tol", c.solver.linear_tol);
  integer("solver.linear_max_iter", c.solver.linear_max_iter);
  integer("solver.restart", c.solver.restart);
  dbl("solver.picard_tol", c.solver.picard_tol);
  integer("solver.picard_max_iter", c.solver.picard_max_iter);
  dbl("solver.residual_tol", c.solver.residual_tol);

  str("truth.source", c.truth);
  dbl("truth.tau", c.truth_tau);
  integer("truth.store_every", c.truth_store_every);
  dbl("truth.reference_ratio", c.reference_ratio);

  str("initial.kind", c.initial);
  dbl("initial.fraction", c.initial_fraction);
  dbl("initial.slope", c.initial_slope);
  dbl("initial.perturbation", c.perturbation);

  integer("run.steps", c.steps);
  integer("run.csv_every", c.csv_every);
  integer("run.workers", c.workers);

  list("sweep.tau", c.tau_list);
  list("sweep.lambda_cut", c.lambda_cut_list);
  list("sweep.beta", c.beta_list);
  list("sweep.h", c.h_list);

  str("output.dir", c.out_dir);
  u64("output.seed", c.seed);

  return {c, kv.unused_warnings()};
}

inline LoadedConfig parse_config(const std::string& text) {
  std::istringstream is(text);
  return parse_config(is);
}

inline LoadedConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file " + path);
  return parse_config(is);
}

inline std::string write_config(const ExperimentConfig& c) {
  using detail::format_double;
  std::ostringstream os;
  auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string("auto"); };
  auto list = [](const std::vector<double>& v) {
    std::string s;
    for (size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + format_double(v[i]);
    return s;
  };
  os << "[physics]\n"
     << "length = " << format_double(c.length) << "\n"
     << "grid_size = " << c.grid_size << "\n"
     << "nu = " << format_double(c.nu) << "\n"
     << "forcing = " << c.forcing << "\n"
     << "kappa = " << c.kappa << "\n"
     << "grashof = " << format_double(c.grashof) << "\n"
     << "forcing_slope = " << format_double(c.forcing_slope) << "\n"
     << "forcing_lambda_max = " << format_double(c.forcing_lambda_max) << "\n"
     << "forcing_seed = " << c.forcing_seed << "\n"
     << "beta = " << opt(c.beta) << "\n"
     << "beta_factor = " << format_double(c.beta_factor) << "\n"
     << "interpolant = " << to_string(c.interpolant) << "\n"
     << "h = " << opt(c.h) << "\n"
     << "h_fraction = " << format_double(c.h_fraction) << "\n"
     << "lambda_cut = " << opt(c.lambda_cut) << "\n\n"
     << "[constants]\n"
     << "c = " << format_double(c.constants.c) << "\n"
     << "c4 = " << format_double(c.constants.c4) << "\n"
     << "c_alpha = " << format_double(c.constants.c_alpha) << "\n"
     << "alpha = " << format_double(c.constants.alpha) << "\n"
     << "c_minus1 = " << format_double(c.constants.c_minus1) << "\n"
     << "c0 = " << opt(c.c0) << "\n"
     << "c0_trials = " << c.c0_trials << "\n\n"
     << "[scheme]\n"
     << "scheme = " << to_string(c.scheme) << "\n"
     << "tau = " << format_double(c.tau) << "\n"
     << "t_end = " << format_double(c.t_end) << "\n"
     << "burn_in = " << format_double(c.burn_in) << "\n\n"
     << "[solver]\n"
     << "linear_tol = " << format_double(c.solver.linear_tol) << "\n"
     << "linear_max_iter = " << c.solver.linear_max_iter << "\n"
     << "restart = " << c.solver.restart << "\n"
     << "picard_tol = " << format_double(c.solver.picard_tol) << "\n"
     << "picard_max_iter = " << c.solver.picard_max_iter << "\n"
     << "residual_tol = " << format_double(c.solver.residual_tol) << "\n\n"
     << "[truth]\n"
     << "source = " << c.truth << "\n"
     << "tau = " << format_double(c.truth_tau) << "\n"
     << "store_every = " << c.truth_store_every << "\n"
     << "reference_ratio = " << format_double(c.reference_ratio) << "\n\n"
     << "[initial]\n"
     << "kind = " << c.initial << "\n"
     << "fraction = " << format_double(c.initial_fraction) << "\n"
     << "slope = " << format_double(c.initial_slope) << "\n"
     << "perturbation = " << format_double(c.perturbation) << "\n\n"
     << "[run]\n"
     << "steps = " << c.steps << "\n"
     << "csv_every = " << c.csv_every << "\n"
     << "workers = " << c.workers << "\n\n"
     << "[sweep]\n"
     << "tau = " << list(c.tau_list) << "\n"
     << "lambda_cut = " << list(c.lambda_cut_list) << "\n"
     << "beta = " << list(c.beta_list) << "\n"
     << "h = " << list(c.h_list) << "\n\n"
     << "[output]\n"
     << "dir = " << c.out_dir << "\n"
     << "seed = " << c.seed << "\n";
  return os.str();
}

}  // namespace nsda::harness
