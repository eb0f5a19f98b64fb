#pragma once

// Experiment outputs: a key = value report grouped in [blocks], per-step CSV
// series, all written atomically (temporary file, then rename).

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "nsda/analysis.hpp"
#include "nsda/harness/config.hpp"

namespace nsda::harness {

inline constexpr const char* kCsvHeader = "step,time,norm_H,norm_V,norm_DA,err_H,err_V,envelope_H,envelope_V";

struct SeriesRow {
  long step = 0;
  double time = 0.0;
  double norm_H = NAN, norm_V = NAN, norm_DA = NAN;
  double err_H = NAN, err_V = NAN;
  double envelope_H = NAN, envelope_V = NAN;
};

inline SeriesRow norms_row(long step, double time, const SpectralField& v) {
  SeriesRow r;
  r.step = step;
  r.time = time;
  r.norm_H = norm_H(v);
  r.norm_V = norm_V(v);
  r.norm_DA = norm_DA(v);
  return r;
}

inline std::string format_value(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  nsda::detail::atomic_write(path, [&](std::ostream& os) { os << content; });
}

inline std::string series_csv(const std::vector<SeriesRow>& rows) {
  std::ostringstream os;
  os << kCsvHeader << "\n";
  for (const auto& r : rows)
    os << r.step << "," << format_value(r.time) << "," << format_value(r.norm_H) << "," << format_value(r.norm_V) << ","
       << format_value(r.norm_DA) << "," << format_value(r.err_H) << "," << format_value(r.err_V) << ","
       << format_value(r.envelope_H) << "," << format_value(r.envelope_V) << "\n";
  return os.str();
}

struct Check {
  std::string name;
  bool passed = false;
  bool skipped = false;  // out of hypothesis; recorded, not counted
  std::string detail;
};

/// Structured text report: ordered [blocks] of key = value lines plus the
/// list of checks.
class Report {
 public:
  explicit Report(std::string experiment = "") : experiment_(std::move(experiment)) {}

  const std::string& experiment() const { return experiment_; }

  void set(const std::string& block, const std::string& key, const std::string& value) {
    for (auto& b : blocks_)
      if (b.name == block) {
        for (auto& kv : b.entries)
          if (kv.first == key) {
            kv.second = value;
            return;
          }
        b.entries.emplace_back(key, value);
        return;
      }
    blocks_.push_back({block, {{key, value}}});
  }
  void set(const std::string& block, const std::string& key, double value) { set(block, key, format_value(value)); }
  void set(const std::string& block, const std::string& key, long value) { set(block, key, std::to_string(value)); }
  void set(const std::string& block, const std::string& key, int value) { set(block, key, std::to_string(value)); }
  void set(const std::string& block, const std::string& key, bool value) { set(block, key, std::string(value ? "true" : "false")); }
  void set(const std::string& block, const std::string& key, const char* value) { set(block, key, std::string(value)); }

  std::string get(const std::string& block, const std::string& key) const {
    for (const auto& b : blocks_)
      if (b.name == block)
        for (const auto& kv : b.entries)
          if (kv.first == key) return kv.second;
    throw PreconditionError("Report: no entry " + block + "." + key);
  }

  void add_check(Check c) { checks_.push_back(std::move(c)); }
  const std::vector<Check>& checks() const { return checks_; }

  bool passed() const {
    for (const auto& c : checks_)
      if (!c.skipped && !c.passed) return false;
    return true;
  }

  void add_constants(const BoundConstants& b, const AbsoluteConstants& k) {
    set("constants", "G", b.G);
    set("constants", "M0", b.M0);
    set("constants", "M1", b.M1);
    set("constants", "Lambda", b.Lambda);
    set("constants", "R1", b.R1);
    set("constants", "M2", b.M2);
    set("constants", "R2", b.R2);
    set("constants", "L_N", b.L_N);
    set("constants", "C0", b.C0);
    set("constants", "C1", b.C1);
    set("absolute_constants", "c", k.c);
    set("absolute_constants", "c4", k.c4);
    set("absolute_constants", "c_alpha", k.c_alpha);
    set("absolute_constants", "alpha", k.alpha);
    set("absolute_constants", "c_minus1", k.c_minus1);
    set("absolute_constants", "c0", k.c0);
  }

  void add_conditions(const ConditionReport& r) {
    for (const auto& c : r.conditions) {
      set("conditions", c.name + ".statement", c.statement);
      set("conditions", c.name + ".lhs", c.lhs);
      set("conditions", c.name + ".rhs", c.rhs);
      set("conditions", c.name + ".passed", c.passed);
    }
  }

  std::string text() const {
    std::ostringstream os;
    os << "[experiment]\nname = " << experiment_ << "\nstatus = " << (passed() ? "pass" : "fail") << "\n";
    for (const auto& b : blocks_) {
      os << "\n[" << b.name << "]\n";
      for (const auto& [k, v] : b.entries) os << k << " = " << v << "\n";
    }
    os << "\n[checks]\n";
    for (const auto& c : checks_)
      os << c.name << " = " << (c.skipped ? "skipped" : c.passed ? "pass" : "fail") << (c.detail.empty() ? "" : "  # " + c.detail)
         << "\n";
    return os.str();
  }

 private:
  struct Block {
    std::string name;
    std::vector<std::pair<std::string, std::string>> entries;
  };
  std::string experiment_;
  std::vector<Block> blocks_;
  std::vector<Check> checks_;
};

struct ExperimentReport {
  Report report;
  std::vector<std::pair<std::string, std::vector<SeriesRow>>> series;  // file name, rows
  std::filesystem::path dir;

  bool passed() const { return report.passed(); }
};

/// Writes report.txt, config.cfg and every series CSV under `dir`.
inline void write_report(const ExperimentReport& r, const std::filesystem::path& dir, const ExperimentConfig& cfg) {
  std::filesystem::create_directories(dir);
  for (const auto& [name, rows] : r.series) write_atomic(dir / name, series_csv(rows));
  write_atomic(dir / "config.cfg", write_config(cfg));
  write_atomic(dir / "report.txt", r.report.text());
}

}  // namespace nsda::harness
