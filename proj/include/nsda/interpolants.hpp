#pragma once

// Observation operators I_h and empirical estimators for the constants in
// their approximation-of-identity properties.

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "nsda/nse_operators.hpp"
#include "nsda/spectral_field.hpp"

namespace nsda {

enum class InterpolantKind { fourier_truncation, volume_average };

inline std::string to_string(InterpolantKind k) {
  return k == InterpolantKind::fourier_truncation ? "fourier_truncation" : "volume_average";
}

inline InterpolantKind interpolant_kind_from_string(const std::string& s) {
  if (s == "fourier_truncation") return InterpolantKind::fourier_truncation;
  if (s == "volume_average") return InterpolantKind::volume_average;
  throw ConfigError("unknown interpolant kind '" + s + "'");
}

struct InterpolantSpec {
  InterpolantKind kind = InterpolantKind::fourier_truncation;
  double h = 1.0;

  /// Observed cutoff 1/h^2 of the Fourier-truncation interpolant.
  GalerkinCutoff fourier_cutoff() const { return GalerkinCutoff(1.0 / (h * h)); }

  /// Blocks per side of the volume-average partition.
  int blocks(const TorusGrid& grid) const {
    const double ratio = grid.length() / h;
    const long m = std::lround(ratio);
    if (m < 1 || std::abs(ratio - static_cast<double>(m)) > 1e-9 * ratio)
      throw ConfigError("volume_average: L/h = " + std::to_string(ratio) + " is not a positive integer");
    if (grid.size() % m != 0)
      throw ConfigError("volume_average: grid size " + std::to_string(grid.size()) + " is not divisible by " +
                        std::to_string(m) + " blocks");
    return static_cast<int>(m);
  }

  void validate(const TorusGrid& grid) const {
    if (!(h > 0.0) || !std::isfinite(h)) throw ConfigError("interpolant: h must be positive");
    if (kind == InterpolantKind::volume_average) {
      blocks(grid);
    } else if (1.0 / (h * h) < grid.lambda1() * (1.0 - 1e-12)) {
      throw ConfigError("fourier_truncation: 1/h^2 must be >= lambda_1");
    }
  }

  friend bool operator==(const InterpolantSpec&, const InterpolantSpec&) = default;
};

/// Piecewise-constant block means of the samples (the raw interpolant,
/// before Leray projection).
inline PhysicalField block_average(const InterpolantSpec& spec, const PhysicalField& samples) {
  const auto& grid = samples.grid;
  const int n = grid.size(), m = spec.blocks(grid), w = n / m;
  PhysicalField out(grid);
  const double inv = 1.0 / (static_cast<double>(w) * w);
  for (int bx = 0; bx < m; ++bx)
    for (int by = 0; by < m; ++by) {
      double sx = 0.0, sy = 0.0;
      for (int a = bx * w; a < (bx + 1) * w; ++a)
        for (int b = by * w; b < (by + 1) * w; ++b) {
          sx += samples.ux[static_cast<size_t>(a) * n + b];
          sy += samples.uy[static_cast<size_t>(a) * n + b];
        }
      for (int a = bx * w; a < (bx + 1) * w; ++a)
        for (int b = by * w; b < (by + 1) * w; ++b) {
          out.ux[static_cast<size_t>(a) * n + b] = sx * inv;
          out.uy[static_cast<size_t>(a) * n + b] = sy * inv;
        }
    }
  return out;
}

/// P_sigma I_h f. The Fourier interpolant is the projector onto
/// |k|^2 <= 1/h^2; the volume interpolant averages over h x h cells, then
/// removes the mean, the Nyquist rows and the gradient part.
inline SpectralField apply_ih(const InterpolantSpec& spec, const SpectralField& f) {
  if (spec.kind == InterpolantKind::fourier_truncation) return project_low(f, spec.fourier_cutoff());
  auto raw = transform_physical(block_average(spec, to_physical(f)));
  return leray_project(std::move(raw));
}

/// Per-mode weight approximating the diagonal of P_sigma I_h; used to
/// precondition the implicit solves.
inline double ih_diagonal_weight(const InterpolantSpec& spec, const TorusGrid& grid, int mx, int my) {
  if (spec.kind == InterpolantKind::fourier_truncation) return spec.fourier_cutoff().contains(grid.k2(mx, my)) ? 1.0 : 0.0;
  auto sinc = [](double x) { return x == 0.0 ? 1.0 : std::sin(x) / x; };
  const double hx = 0.5 * spec.h * grid.k_unit() * grid.wave(mx);
  const double hy = 0.5 * spec.h * grid.k_unit() * grid.wave(my);
  const double s = sinc(hx) * sinc(hy);
  return s * s;
}

namespace detail {
inline double discrete_l2_sq(const PhysicalField& a, const PhysicalField& b) {
  const double cell = a.grid.length() / a.grid.size();
  double s = 0.0;
  for (size_t i = 0; i < a.ux.size(); ++i) {
    const double dx = a.ux[i] - b.ux[i], dy = a.uy[i] - b.uy[i];
    s += dx * dx + dy * dy;
  }
  return s * cell * cell;
}

// Random test fields covering a range of spectral content: band limits
// drawn across the alias-free band and slopes in [0, 3].
template <class Rng>
SpectralField probe_field(const TorusGrid& grid, Rng& rng) {
  const int band = grid.dealias_band();
  std::uniform_int_distribution<int> radius(1, band);
  std::uniform_real_distribution<double> slope(0.0, 3.0);
  const double r = radius(rng);
  return random_field(grid, rng, r * r * grid.lambda1(), slope(rng));
}
}  // namespace detail

/// |f - I_h f|^2 / (h^2 ||f||^2) for one field, using the raw interpolant.
inline double c0_ratio(const InterpolantSpec& spec, const SpectralField& f) {
  const double v2 = norm_V(f) * norm_V(f);
  if (v2 == 0.0) return 0.0;
  double e2;
  if (spec.kind == InterpolantKind::fourier_truncation) {
    const double e = norm_H(project_high(f, spec.fourier_cutoff()));
    e2 = e * e;
  } else {
    const auto samples = to_physical(f);
    e2 = detail::discrete_l2_sq(samples, block_average(spec, samples));
  }
  return e2 / (spec.h * spec.h * v2);
}

/// Empirical c_0: the largest c0_ratio over `trials` random band-limited fields.
inline double estimate_c0(const InterpolantSpec& spec, const TorusGrid& grid, int trials, std::uint64_t seed = 1) {
  if (trials < 10) throw PreconditionError("estimate_c0: need at least 10 trials");
  spec.validate(grid);
  std::mt19937_64 rng(seed);
  double best = 0.0;
  for (int t = 0; t < trials; ++t) best = std::max(best, c0_ratio(spec, detail::probe_field(grid, rng)));
  return best;
}

/// Empirical c_{-1} in ||phi - I_h phi||_{H^-1} <= c_{-1} h |phi|.
inline double estimate_c_minus1(const InterpolantSpec& spec, const TorusGrid& grid, int trials, std::uint64_t seed = 2) {
  if (trials < 10) throw PreconditionError("estimate_c_minus1: need at least 10 trials");
  spec.validate(grid);
  std::mt19937_64 rng(seed);
  double best = 0.0;
  for (int t = 0; t < trials; ++t) {
    const auto f = detail::probe_field(grid, rng);
    const double fh = norm_H(f);
    if (fh == 0.0) continue;
    RawCoefficients diff(grid);
    if (spec.kind == InterpolantKind::fourier_truncation) {
      const auto g = project_high(f, spec.fourier_cutoff());
      std::copy(g.coeffs().begin(), g.coeffs().end(), diff.coeffs.begin());
    } else {
      const auto samples = to_physical(f);
      const auto avg = block_average(spec, samples);
      PhysicalField d(grid);
      for (size_t i = 0; i < d.ux.size(); ++i) {
        d.ux[i] = samples.ux[i] - avg.ux[i];
        d.uy[i] = samples.uy[i] - avg.uy[i];
      }
      diff = transform_physical(d);
    }
    double s = 0.0;
    const int n = grid.size();
    for (int c = 0; c < 2; ++c)
      for (int mx = 0; mx < n; ++mx)
        for (int my = 0; my < n; ++my)
          if (mx != 0 || my != 0) s += std::norm(diff.coeffs[grid.flat(c, mx, my)]) / grid.k2(mx, my);
    const double hm1 = grid.length() * std::sqrt(s);
    best = std::max(best, hm1 / (spec.h * fh));
  }
  return best;
}

/// Empirical c~_0 in |I_h q| <= c~_0 |Omega|^{3/4} / (h^2 lambda_{N+1}^{1/4}) |q| for q in Q_N H.
inline double estimate_c0_tilde(const InterpolantSpec& spec, const TorusGrid& grid, const GalerkinCutoff& cutoff, int trials,
                                std::uint64_t seed = 3) {
  if (trials < 10) throw PreconditionError("estimate_c0_tilde: need at least 10 trials");
  spec.validate(grid);
  std::mt19937_64 rng(seed);
  const double area = grid.length() * grid.length();
  const double scale = std::pow(area, 0.75) / (spec.h * spec.h * std::pow(cutoff.lambda_next(grid), 0.25));
  double best = 0.0;
  for (int t = 0; t < trials; ++t) {
    const auto q = project_high(detail::probe_field(grid, rng), cutoff);
    const double qh = norm_H(q);
    if (qh == 0.0) continue;
    double ih;
    if (spec.kind == InterpolantKind::fourier_truncation) {
      ih = norm_H(project_low(q, spec.fourier_cutoff()));
    } else {
      const auto avg = block_average(spec, to_physical(q));
      PhysicalField zero(grid);
      ih = std::sqrt(detail::discrete_l2_sq(avg, zero));
    }
    best = std::max(best, ih / (scale * qh));
  }
  return best;
}

struct StabilizingReport {
  // -2 beta (P_sigma I_h phi, phi) <= nu ||phi||^2 - beta |phi|^2
  double lhs_h = 0.0, rhs_h = 0.0;
  // -2 beta (P_sigma I_h phi, A phi) <= nu |A phi|^2 - beta ||phi||^2
  double lhs_v = 0.0, rhs_v = 0.0;
  bool violated_h = false, violated_v = false;

  double slack_h() const { return rhs_h - lhs_h; }
  double slack_v() const { return rhs_v - lhs_v; }
  bool violated() const { return violated_h || violated_v; }
};

/// Evaluates both sides of the two nudging-coercivity inequalities on `phi`.
/// Violations are reported, never thrown.
inline StabilizingReport stabilizing_inequality_check(const InterpolantSpec& spec, double beta, double nu, const SpectralField& phi) {
  const auto ih = apply_ih(spec, phi);
  StabilizingReport r;
  const double h2 = norm_H(phi) * norm_H(phi), v2 = norm_V(phi) * norm_V(phi), a2 = norm_DA(phi) * norm_DA(phi);
  r.lhs_h = -2.0 * beta * inner_product(ih, phi);
  r.rhs_h = nu * v2 - beta * h2;
  r.lhs_v = -2.0 * beta * inner_product(ih, apply_stokes(phi));
  r.rhs_v = nu * a2 - beta * v2;
  const double tol_h = 1e-12 * (std::abs(r.lhs_h) + nu * v2 + beta * h2);
  const double tol_v = 1e-12 * (std::abs(r.lhs_v) + nu * a2 + beta * v2);
  r.violated_h = r.slack_h() < -tol_h;
  r.violated_v = r.slack_v() < -tol_v;
  return r;
}

}  // namespace nsda
