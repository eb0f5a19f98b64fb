#pragma once

// Acceptance suite: criteria 1..10, each a self-contained check with a
// pinned tolerance and a wall-clock limit. Experiment-backed criteria run
// the preset configurations below and write their outputs under `scratch`.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "nsda/harness/experiments.hpp"

namespace nsda::harness {

// ---------------------------------------------------------------------------
// Preset configurations

inline ExperimentConfig preset_twin() {
  ExperimentConfig c;
  c.grid_size = 64;
  c.truth = "analytic:kolmogorov";
  c.tau = 0.005;
  c.t_end = 20.0;
  c.burn_in = 5.0;
  c.csv_every = 10;
  c.out_dir = "out/twin";
  return c;
}

inline ExperimentConfig preset_tau_sweep() {
  ExperimentConfig c;
  c.grid_size = 32;
  c.truth = "nse_integrate";
  c.truth_tau = 5e-4;
  c.truth_store_every = 5;
  c.tau = 0.0025;
  c.t_end = 4.0;
  c.burn_in = 1.0;
  c.tau_list = {0.02, 0.01, 0.005, 0.0025};
  c.csv_every = 4;
  c.out_dir = "out/tau_sweep";
  return c;
}

inline ExperimentConfig preset_n_sweep() {
  ExperimentConfig c;
  c.grid_size = 64;
  c.forcing = "power_law";
  c.forcing_slope = 0.5;
  c.forcing_seed = 42;
  c.truth = "steady";
  c.initial = "zero";
  c.tau = 0.01;
  c.t_end = 5.0;
  c.burn_in = 1.0;
  c.lambda_cut_list = {9, 25, 49, 100};
  c.csv_every = 10;
  c.out_dir = "out/n_sweep";
  return c;
}

inline ExperimentConfig preset_soak() {
  ExperimentConfig c;
  c.grid_size = 32;
  c.truth = "analytic:kolmogorov";
  c.tau = 0.01;
  c.t_end = 20.0;
  c.tau_list = {0.001, 0.01, 0.1};
  c.steps = 10000;
  c.csv_every = 50;
  c.out_dir = "out/soak";
  return c;
}

inline ExperimentConfig preset_contraction() {
  ExperimentConfig c;
  c.grid_size = 32;
  c.truth = "analytic:kolmogorov";
  c.tau = 0.002;
  c.t_end = 20.0;
  c.steps = 2000;
  c.perturbation = 1e-3;
  c.csv_every = 10;
  c.out_dir = "out/contraction";
  return c;
}

inline ExperimentConfig preset(const std::string& name) {
  if (name == "twin") return preset_twin();
  if (name == "tau-sweep" || name == "tau_sweep") return preset_tau_sweep();
  if (name == "n-sweep" || name == "n_sweep") return preset_n_sweep();
  if (name == "soak") return preset_soak();
  if (name == "contraction") return preset_contraction();
  throw ConfigError("no preset named '" + name + "'");
}

// ---------------------------------------------------------------------------

inline std::string detail_fixed(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", v);
  return buf;
}

struct CriterionResult {
  int id = 0;
  std::string name;
  bool passed = false;
  double seconds = 0.0;
  double limit = 0.0;  // seconds; 0 = none
  std::string detail;

  std::string line() const {
    std::ostringstream os;
    os << "criterion " << id << ": " << (passed ? "PASS" : "FAIL") << "  " << name << "  [" << detail << "; "
       << detail_fixed(seconds) << " s";
    if (limit > 0.0) os << " of " << detail_fixed(limit) << " s";
    os << "]";
    return os.str();
  }
};

namespace detail {

struct Tally {
  bool ok = true;
  std::vector<std::string> notes;
  void require(bool cond, const std::string& note) {
    ok = ok && cond;
    notes.push_back(std::string(cond ? "" : "FAILED ") + note);
  }
  std::string join() const {
    std::string s;
    for (const auto& n : notes) s += (s.empty() ? "" : "; ") + n;
    return s;
  }
};

inline std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

inline std::string failed_checks(const ExperimentReport& r) {
  std::string s;
  for (const auto& c : r.report.checks())
    if (!c.skipped && !c.passed) s += (s.empty() ? "" : ", ") + c.name + " (" + c.detail + ")";
  return s.empty() ? "all checks pass" : s;
}

// 1
inline Tally oracle_equivalence() {
  Tally t;
  std::mt19937_64 rng(101);
  for (int n : {8, 12, 16}) {
    const TorusGrid g(2.0 * std::numbers::pi, n);
    const double band = GalerkinCutoff::full_band(g).lambda_cut();
    double worst = 0.0;
    for (int i = 0; i < 50; ++i) {
      const auto u = random_field(g, rng, band), v = random_field(g, rng, band);
      const auto fast = bilinear_B(u, v), direct = bilinear_B_direct(u, v);
      worst = std::max(worst, norm_H(fast - direct) / std::max(norm_H(direct), 1e-300));
    }
    t.require(worst <= 1e-12, "n=" + std::to_string(n) + " max rel " + sci(worst));
  }
  return t;
}

// 2
inline Tally structural_identities() {
  Tally t;
  std::mt19937_64 rng(202);
  const TorusGrid g(2.0 * std::numbers::pi, 16);
  const double band = GalerkinCutoff::full_band(g).lambda_cut();
  double orth1 = 0.0, orth2 = 0.0, poincare = 0.0, leray = 0.0, leray_orth = 0.0, proj = 0.0;
  for (int i = 0; i < 50; ++i) {
    const auto u = random_field(g, rng, band), v = random_field(g, rng, band), w = random_field(g, rng, band);
    const auto buv = bilinear_B(u, v), buw = bilinear_B(u, w);
    orth1 = std::max(orth1, std::abs(inner_product(buv, w) + inner_product(buw, v)) /
                                (norm_H(buv) * norm_H(w) + norm_H(buw) * norm_H(v)));
    orth2 = std::max(orth2, std::abs(inner_product(buv, v)) / (norm_H(buv) * norm_H(v)));

    // Poincare per mode: ||e_k||^2 = |k|^2 |e_k|^2 >= lambda_1 |e_k|^2.
    const double v2 = norm_V(u) * norm_V(u), h2 = norm_H(u) * norm_H(u);
    if (v2 < g.lambda1() * h2 * (1.0 - 1e-15)) poincare = std::max(poincare, 1.0);
  }
  for (int mx = 1; mx < 5; ++mx)
    for (int my = 0; my < 5; ++my) {
      std::vector<Complex> c(2 * g.modes());
      const double kx = g.k_unit() * g.wave(mx), ky = g.k_unit() * g.wave(my), kn = std::hypot(kx, ky);
      c[g.flat(0, mx, my)] = Complex(ky / kn, 0.0);
      c[g.flat(1, mx, my)] = Complex(-kx / kn, 0.0);
      c[g.flat(0, g.index(-mx), g.index(-my))] = Complex(ky / kn, 0.0);
      c[g.flat(1, g.index(-mx), g.index(-my))] = Complex(-kx / kn, 0.0);
      const auto e = SpectralField::from_coefficients(g, c);
      const double ratio = norm_V(e) * norm_V(e) / (norm_H(e) * norm_H(e));
      poincare = std::max(poincare, std::abs(ratio - g.k2(mx, my)) / g.k2(mx, my));
    }
  for (int i = 0; i < 20; ++i) {
    // Random real vector field, Hermitian by construction via a physical-space sample.
    PhysicalField s(g);
    std::normal_distribution<double> normal;
    for (size_t j = 0; j < s.ux.size(); ++j) {
      s.ux[j] = normal(rng);
      s.uy[j] = normal(rng);
    }
    const auto raw = transform_physical(s);
    const auto p1 = leray_project(raw);
    RawCoefficients again(g);
    std::copy(p1.coeffs().begin(), p1.coeffs().end(), again.coeffs.begin());
    const auto p2 = leray_project(again);
    leray = std::max(leray, norm_H(p2 - p1) / std::max(norm_H(p1), 1e-300));
    // (raw - P raw) is orthogonal to every divergence-free field.
    const auto z = random_field(g, rng, 1e9);
    double ip = 0.0, scale_r = 0.0, scale_z = 0.0;
    for (size_t j = 0; j < raw.coeffs.size(); ++j) {
      const Complex r = raw.coeffs[j] - p1.coeffs()[j];
      ip += (r * std::conj(z.coeffs()[j])).real();
      scale_r += std::norm(r);
      scale_z += std::norm(z.coeffs()[j]);
    }
    leray_orth = std::max(leray_orth, std::abs(ip) / std::sqrt(scale_r * scale_z));

    const GalerkinCutoff cut(10.0 + i, g);
    const auto f = random_field(g, rng, band);
    const auto lo = project_low(f, cut), hi = project_high(f, cut);
    proj = std::max({proj, norm_H(project_low(lo, cut) - lo) / norm_H(f), std::abs(inner_product(lo, hi)) / (norm_H(f) * norm_H(f)),
                     norm_H(lo + hi - f) / norm_H(f)});
  }
  t.require(orth1 <= 1e-11, "(B(u,v),w) = -(B(u,w),v) rel " + sci(orth1));
  t.require(orth2 <= 1e-11, "(B(u,v),v) = 0 rel " + sci(orth2));
  t.require(poincare <= 1e-14, "Poincare per mode rel " + sci(poincare));
  t.require(leray <= 1e-12, "Leray idempotence rel " + sci(leray));
  t.require(leray_orth <= 1e-12, "Leray orthogonality rel " + sci(leray_orth));
  t.require(proj <= 1e-12, "P_N idempotence/orthogonality rel " + sci(proj));
  return t;
}

// 3
inline Tally exact_solutions() {
  Tally t;
  {
    ExperimentConfig c = preset_contraction();
    const auto s = build_setup(c);
    const auto truth = make_truth(c, s, 1.0);
    const auto ustar = truth.stream->truth(0.0);
    for (const Scheme scheme : {Scheme::semi_implicit, Scheme::fully_implicit})
      for (const double beta : {0.0, s.physics.beta}) {
        PhysicsParams p = s.physics;
        p.beta = beta;
        SchemeState st{0, 0.01, ustar};
        double worst = 0.0;
        for (int k = 0; k < 10; ++k) {
          auto next = advance(scheme, st, p, *truth.stream, c.solver);
          worst = std::max(worst, norm_H(next.v - st.v));
          st = std::move(next);
        }
        t.require(worst <= 1e-9, "Kolmogorov fixed point " + to_string(scheme) + (beta > 0 ? " nudged" : " beta=0") +
                                     " max step change " + sci(worst));
      }
  }
  {
    const TorusGrid g(2.0 * std::numbers::pi, 16);
    const double nu = 0.1;
    PhysicsParams p{nu, g, SpectralField::zero(g), 0.0, InterpolantSpec{InterpolantKind::fourier_truncation, 1.0},
                    GalerkinCutoff::full_band(g)};
    const auto u0 = taylor_green(g, 1, 0.0, nu), exact = taylor_green(g, 1, 2.0, nu);
    std::vector<double> err;
    for (const double tau : {1e-3, 5e-4}) {
      const auto traj = nse_integrate(u0, p, 2.0, tau, std::lround(2.0 / tau));
      err.push_back(norm_H(traj.fields.back() - exact) / norm_H(exact));
    }
    const double order = std::log2(err[0] / err[1]);
    t.require(std::abs(order - 1.0) <= 0.15, "Taylor-Green order " + sci(order) + " (rel err " + sci(err[0]) + ", " +
                                                  sci(err[1]) + ")");
  }
  return t;
}

// 9
inline Tally gronwall_draws() {
  Tally t;
  std::mt19937_64 rng(909);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  long violations = 0, closed_violations = 0, closed_checked = 0;
  double worst = 0.0;
  for (int draw = 0; draw < 1000; ++draw) {
    const double gamma = -0.9 + 2.9 * unit(rng);
    const double a0 = 10.0 * unit(rng);
    const size_t m = 1 + static_cast<size_t>(unit(rng) * 200.0) % 200;
    const double bmax = 5.0 * unit(rng);
    std::vector<double> b(m);
    for (auto& x : b) x = bmax * unit(rng);
    const auto env = gronwall_envelope(a0, gamma, b);
    // Sequence satisfying (1+g) a_{k+1} <= a_k + b_k, tight half the time.
    double a = a0;
    for (size_t k = 0; k < m; ++k) {
      const double slack = unit(rng) < 0.5 ? 1.0 : unit(rng);
      a = slack * (a + b[k]) / (1.0 + gamma);
      const double ratio = a / std::max(env[k + 1], 1e-300);
      worst = std::max(worst, ratio);
      if (a > env[k + 1] * (1.0 + 1e-12)) ++violations;
      if (gamma > 0.0) {
        ++closed_checked;
        if (a > gronwall_closed_form(a0, gamma, bmax, k + 1) * (1.0 + 1e-12)) ++closed_violations;
      }
    }
  }
  t.require(violations == 0, "envelope violations " + std::to_string(violations) + " (max ratio " + sci(worst) + ")");
  t.require(closed_violations == 0, "closed form (gamma > 0) violations " + std::to_string(closed_violations) + " of " +
                                        std::to_string(closed_checked));
  return t;
}

inline ExperimentConfig in_dir(ExperimentConfig c, const std::filesystem::path& dir) {
  c.out_dir = dir.string();
  return c;
}

}  // namespace detail

/// Runs one criterion. `scratch` receives experiment outputs.
inline CriterionResult run_criterion(int id, const std::filesystem::path& scratch) {
  using clock = std::chrono::steady_clock;
  const auto start = clock::now();
  CriterionResult r;
  r.id = id;
  detail::Tally t;
  auto experiment = [&](const std::string& label, const ExperimentReport& rep) {
    t.require(rep.passed(), label + ": " + detail::failed_checks(rep));
  };
  try {
    switch (id) {
      case 1:
        r.name = "oracle equivalence of the bilinear term";
        r.limit = 10;
        t = detail::oracle_equivalence();
        break;
      case 2:
        r.name = "structural identities";
        r.limit = 10;
        t = detail::structural_identities();
        break;
      case 3:
        r.name = "exact-solution fidelity";
        r.limit = 120;
        t = detail::exact_solutions();
        break;
      case 4:
        r.name = "unconditional stability soaks";
        r.limit = 600;
        for (const Scheme s : {Scheme::semi_implicit, Scheme::fully_implicit}) {
          auto c = detail::in_dir(preset_soak(), scratch / ("soak_" + to_string(s)));
          c.scheme = s;
          experiment(to_string(s), run_stability_soak(c));
        }
        break;
      case 5: {
        r.name = "contraction envelopes";
        r.limit = 300;
        for (const Scheme s : {Scheme::semi_implicit, Scheme::fully_implicit}) {
          auto c = detail::in_dir(preset_contraction(), scratch / ("contraction_" + to_string(s)));
          c.scheme = s;
          const auto rep = run_contraction_test(c);
          experiment(to_string(s) + " max ratio " + detail::sci(std::stod(rep.report.get("contraction", "max_ratio_to_envelope"))), rep);
        }
        break;
      }
      case 6:
        r.name = "first-order tau accuracy";
        r.limit = 1200;
        for (const Scheme s : {Scheme::semi_implicit, Scheme::fully_implicit}) {
          auto c = detail::in_dir(preset_tau_sweep(), scratch / ("tau_sweep_" + to_string(s)));
          c.scheme = s;
          const auto rep = run_tau_sweep(c);
          experiment(to_string(s) + " slopes H " + detail::sci(std::stod(rep.report.get("fit", "slope_H"))) + " V " +
                         detail::sci(std::stod(rep.report.get("fit", "slope_V"))),
                     rep);
        }
        break;
      case 7:
        r.name = "nudging convergence";
        r.limit = 600;
        for (const Scheme s : {Scheme::semi_implicit, Scheme::fully_implicit}) {
          auto c = detail::in_dir(preset_twin(), scratch / ("twin_" + to_string(s)));
          c.scheme = s;
          const auto rep = run_twin_experiment(c);
          experiment(to_string(s) + " orders " + detail::sci(std::stod(rep.report.get("twin", "decay_orders"))) + " control " +
                         detail::sci(std::stod(rep.report.get("control", "decay_orders"))),
                     rep);
        }
        break;
      case 8:
        r.name = "postprocessing improvement";
        r.limit = 1200;
        for (const Scheme s : {Scheme::semi_implicit, Scheme::fully_implicit}) {
          auto c = detail::in_dir(preset_n_sweep(), scratch / ("n_sweep_" + to_string(s)));
          c.scheme = s;
          const auto rep = run_n_sweep(c);
          experiment(to_string(s) + " exponent " + detail::sci(std::stod(rep.report.get("fit", "exponent_pp_H_over_L_N"))), rep);
        }
        break;
      case 9:
        r.name = "discrete Gronwall envelope";
        r.limit = 5;
        t = detail::gronwall_draws();
        break;
      case 10: {
        r.name = "reproducibility";
        auto c = preset_twin();
        c.grid_size = 32;
        c.t_end = 5.0;
        c.burn_in = 1.0;
        c.csv_every = 1;
        const auto a = scratch / "repro_a", b = scratch / "repro_b";
        run_twin_experiment(detail::in_dir(c, a));
        run_twin_experiment(detail::in_dir(c, b));
        std::string why;
        t.require(same_csv_outputs(a, b, &why), why.empty() ? "twin CSVs byte-identical" : why);
        break;
      }
      default:
        throw PreconditionError("no criterion " + std::to_string(id));
    }
  } catch (const PreconditionError&) {
    throw;
  } catch (const std::exception& e) {
    t.require(false, std::string("error: ") + e.what());
  }
  r.seconds = std::chrono::duration<double>(clock::now() - start).count();
  r.passed = t.ok && (r.limit == 0.0 || r.seconds <= r.limit);
  r.detail = t.join();
  if (r.limit > 0.0 && r.seconds > r.limit) r.detail += "; FAILED runtime limit";
  return r;
}

}  // namespace nsda::harness
