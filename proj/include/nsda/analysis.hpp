#pragma once

// Explicit bound constants, admissibility conditions, discrete Gronwall
// envelopes and least-squares fits of decay rates and convergence orders.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "nsda/errors.hpp"
#include "nsda/time_schemes.hpp"

namespace nsda {

/// Absolute constants the estimates leave unspecified. All default to 1.
struct AbsoluteConstants {
  double c = 1.0;         // beta lower bound and C_0, C_1
  double c4 = 1.0;        // R_1
  double c_alpha = 1.0;   // |A^-alpha (B(u,u) - B(v,v))| estimate
  double alpha = 0.75;    // in (1/2, 1)
  double c_minus1 = 1.0;  // H^-1 interpolant property
  double c0 = 1.0;        // approximation-of-identity constant of I_h

  friend bool operator==(const AbsoluteConstants&, const AbsoluteConstants&) = default;
};

struct BoundConstants {
  double G = 0.0, M0 = 0.0, M1 = 0.0, Lambda = 0.0, R1 = 0.0, M2 = 0.0, R2 = 0.0, L_N = 0.0, C0 = 0.0, C1 = 0.0;
};

inline BoundConstants bound_constants(const PhysicsParams& p, const AbsoluteConstants& k = {}) {
  const double f = norm_H(p.forcing);
  if (!(f > 0.0)) throw PreconditionError("bound_constants: forcing must be nonzero");
  const double nu = p.nu, l1 = p.grid.lambda1();
  BoundConstants b;
  b.G = f / (nu * nu * l1);
  b.M0 = 2.0 * nu * b.G;
  b.M1 = nu * std::sqrt(l1) * b.G;
  b.Lambda = 1.0 + std::log(b.M1 / (nu * std::sqrt(l1)));
  b.R1 = k.c4 * b.M1 * b.M1 * b.M1 * b.Lambda / nu;
  const double inner = b.M1 * std::sqrt(std::max(b.Lambda, 0.0)) / std::sqrt(nu) + std::sqrt(p.beta);
  b.M2 = b.M1 / std::sqrt(nu) * inner;
  b.R2 = b.M1 * b.M1 * b.M1 * b.Lambda / std::pow(nu, 1.5) * inner;
  b.L_N = std::sqrt(1.0 + std::log(p.cutoff.lambda_n(p.grid) / l1));
  const double qf = norm_H(project_high(p.forcing, p.cutoff));
  b.C0 = k.c * (qf + b.M1 * b.M1) / nu;
  b.C1 = k.c * ((qf + b.M1 * b.M1) / nu + b.M0 * b.M1 * b.M1 / (nu * nu));
  return b;
}

struct Condition {
  std::string name;
  std::string statement;
  double lhs = 0.0, rhs = 0.0;
  bool passed = false;
};

struct ConditionReport {
  std::vector<Condition> conditions;
  AbsoluteConstants constants;

  const Condition& get(const std::string& name) const {
    for (const auto& c : conditions)
      if (c.name == name) return c;
    throw PreconditionError("ConditionReport: no condition named " + name);
  }
  bool has(const std::string& name) const {
    return std::any_of(conditions.begin(), conditions.end(), [&](const Condition& c) { return c.name == name; });
  }
  /// The two conditions every stability and error theorem assumes.
  bool core_passed() const { return get("beta_lower").passed && get("c0_beta_h2").passed; }
  bool all_passed() const {
    return std::all_of(conditions.begin(), conditions.end(), [](const Condition& c) { return c.passed; });
  }
};

/// Lower bound c M_1^2/nu [1 + log(M_1/(nu lambda_1^{1/2}))] on beta.
inline double beta_lower_bound(const PhysicsParams& p, const BoundConstants& b, const AbsoluteConstants& k = {}) {
  return k.c * b.M1 * b.M1 / p.nu * b.Lambda;
}

/// Evaluates the admissibility conditions; advisory only. `tau`, when
/// given, adds the tau beta <= 1 hypothesis of the semi-implicit
/// contraction estimate.
inline ConditionReport check_conditions(const PhysicsParams& p, const BoundConstants& b, const AbsoluteConstants& k = {},
                                        std::optional<double> tau = std::nullopt) {
  ConditionReport r;
  r.constants = k;
  const double h2 = p.interpolant.h * p.interpolant.h;
  const double lower = beta_lower_bound(p, b, k);
  r.conditions.push_back({"beta_lower", "beta >= c M1^2/nu (1 + log(M1/(nu lambda1^1/2)))", p.beta, lower, p.beta >= lower});
  r.conditions.push_back({"c0_beta_h2", "c0 beta h^2 <= nu", k.c0 * p.beta * h2, p.nu, k.c0 * p.beta * h2 <= p.nu});
  if (!(k.alpha > 0.5 && k.alpha < 1.0)) throw ConfigError("check_conditions: alpha must lie in (1/2, 1)");
  const double area = p.grid.length() * p.grid.length();
  const double base = k.c * k.c_alpha * (1.0 + 1.0 / (1.0 - k.alpha)) * std::pow(area, k.alpha - 0.5) * b.M1 / std::pow(p.nu, k.alpha);
  const double ppgm_lower = std::max(lower, std::pow(base, 1.0 / (1.0 - k.alpha)));
  r.conditions.push_back({"ppgm_beta", "beta >= max{beta_lower, [c c_alpha (1 + 1/(1-alpha)) |Omega|^(alpha-1/2) M1/nu^alpha]^(1/(1-alpha))}",
                          p.beta, ppgm_lower, p.beta >= ppgm_lower});
  const double ch = std::max(k.c0, 4.0 * k.c_minus1) * p.beta * h2;
  r.conditions.push_back({"ppgm_h", "max{c0, 4 c_-1} beta h^2 < nu", ch, p.nu, ch < p.nu});
  if (tau) r.conditions.push_back({"tau_beta", "tau beta <= 1", *tau * p.beta, 1.0, *tau * p.beta <= 1.0});
  return r;
}

// ---------------------------------------------------------------------------
// Discrete Gronwall

/// Envelope a_0/(1+g)^m + sum_{k<m} b_k/(1+g)^{m-k} for m = 0..len(b), built
/// by the recurrence e_{m+1} = (e_m + b_m)/(1+g).
inline std::vector<double> gronwall_envelope(double a0, double gamma, const std::vector<double>& b) {
  if (!(1.0 + gamma > 0.0)) throw DomainError("gronwall_envelope: 1 + gamma must be positive");
  std::vector<double> env(b.size() + 1);
  env[0] = a0;
  for (size_t m = 0; m < b.size(); ++m) env[m + 1] = (env[m] + b[m]) / (1.0 + gamma);
  return env;
}

inline std::vector<double> gronwall_envelope(double a0, double gamma, double b, size_t m) {
  return gronwall_envelope(a0, gamma, std::vector<double>(m, b));
}

/// Closed form a_0/(1+g)^m + sup b / g. Only valid for g > 0: for
/// -1 < g < 0 the geometric sum grows with m and the bound is false.
inline double gronwall_closed_form(double a0, double gamma, double sup_b, size_t m) {
  if (!(gamma > 0.0)) throw DomainError("gronwall_closed_form: gamma must be positive");
  return a0 / std::pow(1.0 + gamma, static_cast<double>(m)) + sup_b / gamma;
}

/// |eps^0|^2 / (1 + tau (beta + nu lambda_1)/4)^n for n = 0..steps.
inline std::vector<double> contraction_envelope(double e0_sq, double tau, double beta, double nu, double lambda1, size_t steps) {
  return gronwall_envelope(e0_sq, tau * (beta + nu * lambda1) / 4.0, 0.0, steps);
}

// ---------------------------------------------------------------------------
// Series and fits

enum class NormKind { H, V, DA };

inline std::string to_string(NormKind k) { return k == NormKind::H ? "H" : k == NormKind::V ? "V" : "DA"; }

inline double norm_of(NormKind k, const SpectralField& f) {
  switch (k) {
    case NormKind::H: return norm_H(f);
    case NormKind::V: return norm_V(f);
    case NormKind::DA: return norm_DA(f);
  }
  return 0.0;
}

struct DiagnosticsSeries {
  std::vector<double> times;
  std::vector<double> values;
  bool interpolated = false;

  /// sup of values over times >= t_from.
  double tail_sup(double t_from) const {
    double s = 0.0;
    bool any = false;
    for (size_t i = 0; i < times.size(); ++i)
      if (times[i] >= t_from - 1e-12 * std::max(1.0, std::abs(t_from))) {
        s = std::max(s, values[i]);
        any = true;
      }
    if (!any) throw PreconditionError("tail_sup: no samples after t = " + std::to_string(t_from));
    return s;
  }
};

/// Error between two trajectories at the snapshot times of `a` that `b`
/// covers. Fields on different grids are compared on the finer one.
inline DiagnosticsSeries error_series(const Trajectory& a, const Trajectory& b, NormKind norm) {
  DiagnosticsSeries s;
  if (a.empty() || b.empty()) throw PreconditionError("error_series: empty trajectory");
  const double tol = 1e-9;
  for (size_t i = 0; i < a.size(); ++i) {
    const double t = a.times[i];
    if (t < b.times.front() - tol || t > b.times.back() + tol) continue;
    bool interp = false;
    SpectralField fb = b.at(t, &interp);
    s.interpolated = s.interpolated || interp;
    const SpectralField& fa = a.fields[i];
    double e;
    if (fa.grid() == fb.grid()) {
      e = norm_of(norm, fa - fb);
    } else {
      const auto& fine = fa.grid().size() >= fb.grid().size() ? fa.grid() : fb.grid();
      e = norm_of(norm, resample(fa, fine) - resample(fb, fine));
    }
    s.times.push_back(t);
    s.values.push_back(e);
  }
  if (s.times.empty()) throw PreconditionError("error_series: trajectories do not overlap in time");
  return s;
}

struct DecayFit {
  double rate = 0.0;       // e(t) ~ e(t0) exp(-rate (t - t0))
  double log_intercept = 0.0;
  double floor = 0.0;      // median of the last 10% of samples
  double threshold = 0.0;  // 3 x floor
  size_t samples = 0;      // points in the pre-floor segment
};

namespace detail {
struct LineFit {
  double slope = 0.0, intercept = 0.0, rms = 0.0, r2 = 0.0;
};

inline LineFit least_squares(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  LineFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double ss = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - (f.intercept + f.slope * x[i]);
    ss += r * r;
  }
  f.rms = std::sqrt(ss / n);
  f.r2 = syy > 0.0 ? 1.0 - ss / syy : 1.0;
  return f;
}

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}
}  // namespace detail

/// Log-linear least squares over the leading segment of samples above
/// 3 x (median of the last 10%).
inline DecayFit decay_rate_fit(const DiagnosticsSeries& s) {
  if (s.times.size() != s.values.size() || s.values.size() < 10) throw FitError("decay_rate_fit: need at least 10 samples");
  const size_t n = s.values.size();
  const size_t tail = std::max<size_t>(1, n / 10);
  DecayFit fit;
  fit.floor = detail::median(std::vector<double>(s.values.end() - static_cast<long>(tail), s.values.end()));
  fit.threshold = 3.0 * fit.floor;
  std::vector<double> x, y;
  for (size_t i = 0; i < n; ++i) {
    if (!(s.values[i] > fit.threshold) || !(s.values[i] > 0.0)) break;
    x.push_back(s.times[i]);
    y.push_back(std::log(s.values[i]));
  }
  fit.samples = x.size();
  if (x.size() < 10) throw FitError("decay_rate_fit: fewer than 10 samples above the floor");
  const auto line = detail::least_squares(x, y);
  fit.rate = -line.slope;
  fit.log_intercept = line.intercept;
  if (!(fit.rate > 0.0)) throw FitError("decay_rate_fit: series does not decay");
  return fit;
}

struct OrderFit {
  double slope = 0.0, intercept = 0.0;
  double residual_rms = 0.0, r_squared = 0.0;
  size_t used = 0;
  std::vector<std::string> warnings;
};

/// Least-squares slope of log(error) against log(x).
inline OrderFit convergence_order(const std::vector<std::pair<double, double>>& pairs) {
  OrderFit fit;
  std::vector<double> x, y;
  for (const auto& [a, e] : pairs) {
    if (!(a > 0.0) || !(e > 0.0)) {
      fit.warnings.push_back("dropped nonpositive pair (" + std::to_string(a) + ", " + std::to_string(e) + ")");
      continue;
    }
    x.push_back(std::log(a));
    y.push_back(std::log(e));
  }
  if (x.size() < 3) throw FitError("convergence_order: need at least 3 positive points");
  const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
  if (*hi - *lo < std::log(4.0) - 1e-12) throw FitError("convergence_order: abscissae must span at least a factor 4");
  const auto line = detail::least_squares(x, y);
  fit.slope = line.slope;
  fit.intercept = line.intercept;
  fit.residual_rms = line.rms;
  fit.r_squared = line.r2;
  fit.used = x.size();
  return fit;
}

}  // namespace nsda
