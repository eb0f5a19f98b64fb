#pragma once

// Experiment drivers: twin assimilation, tau and cutoff sweeps, stability
// soaks and contraction tests. Each writes its report and CSV series into
// cfg.out_dir; on a solver failure the partial outputs are flushed before
// the error propagates.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <future>
#include <limits>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "nsda/analysis.hpp"
#include "nsda/harness/config.hpp"
#include "nsda/harness/report.hpp"
#include "nsda/interpolants.hpp"
#include "nsda/nse_operators.hpp"
#include "nsda/time_schemes.hpp"

namespace nsda::harness {

struct Setup {
  PhysicsParams physics;
  BoundConstants bounds;
  AbsoluteConstants constants;
  ConditionReport conditions;
  bool forced = true;
};

inline SpectralField make_forcing(const ExperimentConfig& c, const TorusGrid& g) {
  const double target = c.grashof * c.nu * c.nu * g.lambda1();
  if (c.forcing == "none") return SpectralField::zero(g);
  if (c.forcing == "kolmogorov") {
    auto f = kolmogorov_forcing(g, c.kappa, 1.0);
    return (target / norm_H(f)) * f;
  }
  std::mt19937_64 rng(c.forcing_seed);
  const double lmax = c.forcing_lambda_max > 0.0 ? c.forcing_lambda_max : GalerkinCutoff::full_band(g).lambda_cut();
  return power_law_forcing(g, rng, lmax, c.forcing_slope, target);
}

/// Derives the physical parameters, bound constants and admissibility report
/// of a configuration. `lambda_cut` and `tau` override the config values.
inline Setup build_setup(const ExperimentConfig& c, std::optional<double> lambda_cut = std::nullopt,
                         std::optional<double> tau = std::nullopt) {
  c.validate();
  const TorusGrid grid(c.length, c.grid_size);
  const auto forcing = make_forcing(c, grid);
  const auto cut_value = lambda_cut ? lambda_cut : c.lambda_cut;
  const GalerkinCutoff cutoff = cut_value ? GalerkinCutoff(*cut_value, grid) : GalerkinCutoff::full_band(grid);

  Setup s{PhysicsParams{c.nu, grid, forcing, 0.0, InterpolantSpec{c.interpolant, 1.0 / std::sqrt(grid.lambda1())}, cutoff},
          {}, c.constants, {}, norm_H(forcing) > 0.0};
  if (s.forced) s.bounds = bound_constants(s.physics, s.constants);

  double beta = 0.0;
  if (c.beta) beta = *c.beta;
  else if (s.forced) beta = c.beta_factor * beta_lower_bound(s.physics, s.bounds, s.constants);
  s.physics.beta = beta;

  if (c.interpolant == InterpolantKind::volume_average && !c.h)
    throw ConfigError("config: volume_average needs an explicit h");
  double c0 = 1.0;  // per-mode bound for Fourier truncation
  if (c.c0) c0 = *c.c0;
  else if (c.interpolant == InterpolantKind::volume_average)
    c0 = estimate_c0(InterpolantSpec{c.interpolant, *c.h}, grid, c.c0_trials, c.seed);
  s.constants.c0 = c0;

  double h = 1.0 / std::sqrt(grid.lambda1());
  if (c.h) h = *c.h;
  else if (beta > 0.0) h = std::sqrt(c.h_fraction * c.nu / (c0 * beta));
  s.physics.interpolant = InterpolantSpec{c.interpolant, h};
  s.physics.condition_constant = s.constants.c;
  s.physics.validate();

  if (s.forced) {
    s.bounds = bound_constants(s.physics, s.constants);
    s.conditions = check_conditions(s.physics, s.bounds, s.constants, tau ? tau : std::optional<double>(c.tau));
  }
  return s;
}

inline void describe_setup(Report& r, const ExperimentConfig& c, const Setup& s) {
  r.set("run", "seed", static_cast<long>(c.seed));
  r.set("run", "scheme", to_string(c.scheme));
  r.set("run", "tau", c.tau);
  r.set("run", "t_end", c.t_end);
  r.set("run", "burn_in", c.burn_in);
  r.set("run", "truth", c.truth);
  r.set("run", "initial", c.initial);
  r.set("physics", "length", s.physics.grid.length());
  r.set("physics", "grid_size", s.physics.grid.size());
  r.set("physics", "nu", s.physics.nu);
  r.set("physics", "forcing", c.forcing);
  r.set("physics", "forcing_norm", norm_H(s.physics.forcing));
  r.set("physics", "forcing_seed", static_cast<long>(c.forcing_seed));
  r.set("physics", "beta", s.physics.beta);
  r.set("physics", "interpolant", to_string(s.physics.interpolant.kind));
  r.set("physics", "h", s.physics.interpolant.h);
  r.set("physics", "lambda_cut", s.physics.cutoff.lambda_cut());
  r.set("solver", "linear_tol", c.solver.linear_tol);
  r.set("solver", "picard_tol", c.solver.picard_tol);
  r.set("solver", "residual_tol", c.solver.residual_tol);
  r.set("solver", "restart", c.solver.restart);
  if (s.forced) {
    r.add_constants(s.bounds, s.constants);
    r.add_conditions(s.conditions);
  }
}

// ---------------------------------------------------------------------------
// Truth and initial data

struct Truth {
  std::shared_ptr<ObservationStream> stream;
  bool steady = false;
  std::string note;
};

/// Steady state of the full-band Galerkin system by large-step implicit
/// iteration; the fixed point of the semi-implicit scheme is exactly the
/// steady state for any step size.
inline SpectralField steady_state(const ExperimentConfig& c, const Setup& s, int max_iter = 2000) {
  PhysicsParams p = s.physics;
  p.beta = 0.0;
  p.cutoff = GalerkinCutoff::full_band(p.grid);
  NullObservations none(p.grid);
  SchemeState st{0, 1.0 / (p.nu * p.grid.lambda1()), SpectralField::zero(p.grid)};
  SolverSettings tight = c.solver;
  tight.linear_tol = std::min(tight.linear_tol, 1e-13);
  tight.residual_tol = std::min(tight.residual_tol, 1e-13);
  std::vector<double> trace;
  for (int k = 0; k < max_iter; ++k) {
    auto next = semi_implicit_step(st, p, none, tight);
    const double change = norm_H(next.v - st.v) / std::max(norm_H(next.v), 1e-300);
    trace.push_back(change);
    st = std::move(next);
    if (change < 1e-13) return st.v;
  }
  throw SolverError("steady_state: spin-up did not converge", trace);
}

inline Truth make_truth(const ExperimentConfig& c, const Setup& s, double t_end) {
  const auto& p = s.physics;
  Truth t;
  if (c.truth == "analytic:kolmogorov") {
    if (c.forcing != "kolmogorov") throw ConfigError("analytic:kolmogorov truth needs Kolmogorov forcing");
    const double k2 = std::pow(p.grid.k_unit() * c.kappa, 2);
    t.stream = std::make_shared<SteadyObservations>((1.0 / (p.nu * k2)) * p.forcing, p.interpolant);
    t.steady = true;
    t.note = "u* = f/(nu |k|^2)";
  } else if (c.truth == "analytic:taylor_green") {
    if (c.forcing != "none") throw ConfigError("analytic:taylor_green truth needs forcing = none");
    const auto grid = p.grid;
    const int kappa = c.kappa;
    const double nu = p.nu;
    t.stream = std::make_shared<AnalyticObservations>([grid, kappa, nu](double time) { return taylor_green(grid, kappa, time, nu); },
                                                      p.interpolant);
    t.note = "decaying Taylor-Green vortex";
  } else if (c.truth == "steady") {
    t.stream = std::make_shared<SteadyObservations>(steady_state(c, s), p.interpolant);
    t.steady = true;
    t.note = "steady state by implicit spin-up";
  } else {
    PhysicsParams q = p;
    q.beta = 0.0;
    q.cutoff = GalerkinCutoff::full_band(q.grid);
    std::mt19937_64 rng(c.seed + 1000);
    auto u0 = random_field(q.grid, rng, q.cutoff.lambda_cut(), c.initial_slope);
    const double scale = s.forced ? s.bounds.M1 : 1.0;
    u0 *= scale / norm_V(u0);
    const double span = t_end + 4.0 * c.truth_tau * static_cast<double>(c.truth_store_every);
    auto traj = std::make_shared<Trajectory>(nse_integrate(u0, q, span, c.truth_tau, c.truth_store_every, c.solver));
    t.stream = std::make_shared<TrajectoryObservations>(traj, p.interpolant);
    t.note = "nse_integrate from a random state with ||u0|| = M1";
  }
  return t;
}

inline SpectralField make_initial(const ExperimentConfig& c, const Setup& s, const ObservationStream& truth) {
  const auto& p = s.physics;
  std::mt19937_64 rng(c.seed);
  const double m1 = s.forced ? s.bounds.M1 : 1.0;
  if (c.initial == "zero") return SpectralField::zero(p.grid);
  if (c.initial == "perturbed_truth") {
    auto w = project_low(random_field(p.grid, rng, p.cutoff.lambda_cut(), c.initial_slope), p.cutoff);
    const double n = norm_V(w);
    auto base = project_low(resample(truth.truth(0.0), p.grid), p.cutoff);
    return n > 0.0 ? base + (c.perturbation * m1 / n) * w : base;
  }
  auto v = project_low(random_field(p.grid, rng, p.cutoff.lambda_cut(), c.initial_slope), p.cutoff);
  return (c.initial_fraction * m1 / norm_V(v)) * v;
}

// ---------------------------------------------------------------------------

namespace detail {

/// Runs `body`, and on a solver failure records it, flushes what exists and
/// rethrows.
template <class Body>
ExperimentReport guarded(const ExperimentConfig& cfg, ExperimentReport& out, Body&& body) {
  out.dir = cfg.out_dir;
  try {
    body();
  } catch (const SolverError& e) {
    out.report.add_check({"solver", false, false, e.what()});
    out.report.set("failure", "final_residual", e.final_residual());
    write_report(out, out.dir, cfg);
    throw;
  }
  write_report(out, out.dir, cfg);
  return out;
}

inline std::string fmt(double v) { return format_value(v); }

inline double orders(double first, double floor) {
  return std::log10(first / std::max(floor, std::numeric_limits<double>::min()));
}

/// Evaluates fn(i) for i in [0, count) on up to `workers` threads; results
/// are returned in index order so outputs do not depend on scheduling.
template <class T, class Fn>
std::vector<T> parallel_map(size_t count, int workers, Fn&& fn) {
  std::vector<T> out(count);
  if (workers <= 1) {
    for (size_t i = 0; i < count; ++i) out[i] = fn(i);
    return out;
  }
  for (size_t start = 0; start < count; start += static_cast<size_t>(workers)) {
    std::vector<std::future<T>> batch;
    for (size_t i = start; i < std::min(count, start + workers); ++i) batch.push_back(std::async(std::launch::async, fn, i));
    for (size_t i = 0; i < batch.size(); ++i) out[start + i] = batch[i].get();
  }
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Twin experiment

struct TwinRun {
  std::vector<SeriesRow> rows;
  DiagnosticsSeries err_H;
  double max_v_after_burn_in = 0.0;
};

inline TwinRun twin_run(const ExperimentConfig& c, const Setup& s, const ObservationStream& truth, const SpectralField& v0) {
  const auto& p = s.physics;
  TwinRun run;
  const long steps = std::lround(c.t_end / c.tau);
  const double env_v = s.forced ? 6.0 * s.bounds.M1 : NAN;
  const double env_h = s.forced ? env_v / std::sqrt(p.grid.lambda1()) : NAN;
  SchemeState st{0, c.tau, v0};
  auto record = [&](const SchemeState& x) {
    const auto u = resample(truth.truth(x.time()), p.grid);
    const auto e = x.v - u;
    SeriesRow row = norms_row(x.k, x.time(), x.v);
    row.err_H = norm_H(e);
    row.err_V = norm_V(e);
    row.envelope_H = env_h;
    row.envelope_V = env_v;
    run.err_H.times.push_back(x.time());
    run.err_H.values.push_back(row.err_H);
    if (x.time() >= c.burn_in) run.max_v_after_burn_in = std::max(run.max_v_after_burn_in, row.norm_V);
    if (x.k % c.csv_every == 0 || x.k == steps) run.rows.push_back(row);
  };
  record(st);
  for (long k = 0; k < steps; ++k) {
    st = advance(c.scheme, st, p, truth, c.solver);
    record(st);
  }
  return run;
}

inline ExperimentReport run_twin_experiment(const ExperimentConfig& cfg) {
  ExperimentReport out{Report("twin"), {}, {}};
  return detail::guarded(cfg, out, [&] {
    const auto s = build_setup(cfg);
    describe_setup(out.report, cfg, s);
    const auto truth = make_truth(cfg, s, cfg.t_end);
    out.report.set("run", "truth_note", truth.note);
    const auto v0 = make_initial(cfg, s, *truth.stream);
    out.report.set("run", "initial_norm_V", norm_V(v0));
    out.report.add_check({"conditions_admissible", s.forced && s.conditions.core_passed(), false,
                          "beta_lower and c0_beta_h2"});

    auto main_run = twin_run(cfg, s, *truth.stream, v0);
    out.series.push_back({"twin.csv", main_run.rows});
    const auto& e = main_run.err_H.values;
    const size_t tail = std::max<size_t>(1, e.size() / 10);
    const double floor = nsda::detail::median(std::vector<double>(e.end() - static_cast<long>(tail), e.end()));
    const double decay = detail::orders(e.front(), floor);
    out.report.set("twin", "err_H_initial", e.front());
    out.report.set("twin", "err_H_floor", floor);
    out.report.set("twin", "decay_orders", decay);
    out.report.set("twin", "observations_interpolated", truth.stream->interpolated());
    out.report.add_check({"decay_6_orders", decay >= 6.0, false, "orders = " + detail::fmt(decay)});
    try {
      const auto fit = decay_rate_fit(main_run.err_H);
      out.report.set("twin", "rate", fit.rate);
      out.report.set("twin", "fit_samples", static_cast<long>(fit.samples));
      out.report.add_check({"positive_rate", fit.rate > 0.0, false, "rate = " + detail::fmt(fit.rate)});
    } catch (const FitError& err) {
      out.report.add_check({"positive_rate", false, false, err.what()});
    }
    if (s.forced) {
      out.report.set("twin", "max_norm_V_after_burn_in", main_run.max_v_after_burn_in);
      out.report.add_check({"stability_bound", main_run.max_v_after_burn_in <= 6.0 * s.bounds.M1, false,
                            "max ||v|| / 6 M1 = " + detail::fmt(main_run.max_v_after_burn_in / (6.0 * s.bounds.M1))});
    }

    // Control: identical run without nudging.
    Setup control = s;
    control.physics.beta = 0.0;
    auto ctrl = twin_run(cfg, control, *truth.stream, v0);
    out.series.push_back({"control.csv", ctrl.rows});
    const auto& ce = ctrl.err_H.values;
    const double ctail = nsda::detail::median(std::vector<double>(ce.end() - static_cast<long>(tail), ce.end()));
    const double cdecay = detail::orders(ce.front(), ctail);
    out.report.set("control", "err_H_initial", ce.front());
    out.report.set("control", "err_H_final", ce.back());
    out.report.set("control", "decay_orders", cdecay);
    out.report.add_check({"control_no_decay", cdecay < 6.0, false, "orders = " + detail::fmt(cdecay)});
  });
}

// ---------------------------------------------------------------------------
// tau sweep

inline ExperimentReport run_tau_sweep(const ExperimentConfig& cfg) {
  if (cfg.tau_list.size() < 4) throw ConfigError("tau sweep needs at least 4 values of tau");
  for (double t : cfg.tau_list)
    if (!(t > 0.0)) throw ConfigError("tau sweep: tau values must be positive");
  ExperimentReport out{Report("tau_sweep"), {}, {}};
  return detail::guarded(cfg, out, [&] {
    const double tau_min = *std::min_element(cfg.tau_list.begin(), cfg.tau_list.end());
    const double tau_max = *std::max_element(cfg.tau_list.begin(), cfg.tau_list.end());
    const auto s = build_setup(cfg, std::nullopt, tau_max);
    describe_setup(out.report, cfg, s);
    const auto truth = make_truth(cfg, s, cfg.t_end);
    out.report.set("run", "truth_note", truth.note);
    const auto v0 = make_initial(cfg, s, *truth.stream);

    const double tau_ref = tau_min / cfg.reference_ratio;
    const long ref_every = std::lround(tau_min / tau_ref);
    const long ref_steps = std::lround(cfg.t_end / tau_ref);
    const auto ref = run_scheme(Scheme::semi_implicit, v0, s.physics, *truth.stream, tau_ref, ref_steps, ref_every, cfg.solver);
    out.report.set("reference", "tau_ref", tau_ref);
    out.report.set("reference", "scheme", "semi_implicit");
    out.report.set("reference", "bias_order", "first order in tau_ref");

    struct Point {
      double sup_H = 0.0, sup_V = 0.0;
      bool interpolated = false;
      std::vector<SeriesRow> rows;
    };
    const auto points = detail::parallel_map<Point>(cfg.tau_list.size(), cfg.workers, [&](size_t i) {
      const double tau = cfg.tau_list[i];
      Point pt;
      SchemeState st{0, tau, project_low(v0, s.physics.cutoff)};
      const long steps = std::lround(cfg.t_end / tau);
      for (long k = 0; k <= steps; ++k) {
        if (k > 0) st = advance(cfg.scheme, st, s.physics, *truth.stream, cfg.solver);
        bool interp = false;
        const auto r = ref.at(st.time(), &interp);
        pt.interpolated = pt.interpolated || interp;
        const auto e = st.v - r;
        SeriesRow row = norms_row(st.k, st.time(), st.v);
        row.err_H = norm_H(e);
        row.err_V = norm_V(e);
        if (st.time() >= cfg.burn_in - 1e-12) {
          pt.sup_H = std::max(pt.sup_H, row.err_H);
          pt.sup_V = std::max(pt.sup_V, row.err_V);
        }
        if (k % cfg.csv_every == 0 || k == steps) pt.rows.push_back(row);
      }
      return pt;
    });

    std::vector<std::pair<double, double>> eh, ev;
    for (size_t i = 0; i < points.size(); ++i) {
      const std::string key = "tau_" + std::to_string(i);
      out.report.set("sweep", key + ".tau", cfg.tau_list[i]);
      out.report.set("sweep", key + ".sup_err_H", points[i].sup_H);
      out.report.set("sweep", key + ".sup_err_V", points[i].sup_V);
      out.report.set("sweep", key + ".reference_interpolated", points[i].interpolated);
      out.series.push_back({key + ".csv", points[i].rows});
      eh.push_back({cfg.tau_list[i], points[i].sup_H});
      ev.push_back({cfg.tau_list[i], points[i].sup_V});
    }
    const auto fh = convergence_order(eh), fv = convergence_order(ev);
    out.report.set("fit", "slope_H", fh.slope);
    out.report.set("fit", "slope_V", fv.slope);
    out.report.set("fit", "residual_rms_H", fh.residual_rms);
    out.report.set("fit", "residual_rms_V", fv.residual_rms);
    out.report.add_check({"slope_H_in_[0.8,1.2]", fh.slope >= 0.8 && fh.slope <= 1.2, false, "slope = " + detail::fmt(fh.slope)});
    out.report.add_check({"slope_V_in_[0.7,1.2]", fv.slope >= 0.7 && fv.slope <= 1.2, false, "slope = " + detail::fmt(fv.slope)});
  });
}

// ---------------------------------------------------------------------------
// Cutoff sweep with postprocessing

inline ExperimentReport run_n_sweep(const ExperimentConfig& cfg) {
  if (cfg.lambda_cut_list.size() < 3) throw ConfigError("cutoff sweep needs at least 3 values of lambda_cut");
  ExperimentReport out{Report("n_sweep"), {}, {}};
  return detail::guarded(cfg, out, [&] {
    const auto base = build_setup(cfg);
    describe_setup(out.report, cfg, base);
    const auto truth = make_truth(cfg, base, cfg.t_end);
    out.report.set("run", "truth_note", truth.note);
    const auto u_end = resample(truth.stream->truth(cfg.t_end), base.physics.grid);
    const auto& grid = base.physics.grid;

    struct Point {
      double lambda_next = 0, L_N = 0;
      double gal_H = 0, pp_H = 0, gal_V = 0, pp_V = 0, pp_H_half = 0;
      double phi_truth = 0, qn_u = 0;
      bool conditions = false;
      std::vector<SeriesRow> rows;
    };
    auto run_to_end = [&](const Setup& s, double tau, std::vector<SeriesRow>* rows) {
      SchemeState st{0, tau, make_initial(cfg, s, *truth.stream)};
      const long steps = std::lround(cfg.t_end / tau);
      for (long k = 0; k <= steps; ++k) {
        if (k > 0) st = advance(cfg.scheme, st, s.physics, *truth.stream, cfg.solver);
        if (rows && (k % cfg.csv_every == 0 || k == steps)) {
          const auto e = st.v - resample(truth.stream->truth(st.time()), grid);
          SeriesRow row = norms_row(st.k, st.time(), st.v);
          row.err_H = norm_H(e);
          row.err_V = norm_V(e);
          rows->push_back(row);
        }
      }
      return st.v;
    };
    const auto points = detail::parallel_map<Point>(cfg.lambda_cut_list.size(), cfg.workers, [&](size_t i) {
      const double lc = cfg.lambda_cut_list[i];
      const auto s = build_setup(cfg, lc);
      const auto& cut = s.physics.cutoff;
      Point pt;
      pt.conditions = s.conditions.core_passed();
      pt.lambda_next = cut.lambda_next(grid);
      pt.L_N = s.bounds.L_N;
      const auto v = run_to_end(s, cfg.tau, &pt.rows);
      const auto pp = v + phi1(v, s.physics.forcing, s.physics.nu, cut);
      pt.gal_H = norm_H(v - u_end);
      pt.gal_V = norm_V(v - u_end);
      pt.pp_H = norm_H(pp - u_end);
      pt.pp_V = norm_V(pp - u_end);
      const auto v_half = run_to_end(s, 0.5 * cfg.tau, nullptr);
      pt.pp_H_half = norm_H(v_half + phi1(v_half, s.physics.forcing, s.physics.nu, cut) - u_end);
      const auto low = project_low(u_end, cut), high = project_high(u_end, cut);
      pt.phi_truth = norm_H(phi1(low, s.physics.forcing, s.physics.nu, cut) - high);
      pt.qn_u = norm_H(high);
      return pt;
    });

    std::vector<SeriesRow> summary;
    std::vector<std::pair<double, double>> trend;
    bool all_improved = true, all_floor = true, all_phi = true, all_conditions = true;
    for (size_t i = 0; i < points.size(); ++i) {
      const auto& pt = points[i];
      const std::string key = "cut_" + std::to_string(i);
      const double floor = std::abs(pt.pp_H - pt.pp_H_half);
      out.report.set("sweep", key + ".lambda_cut", cfg.lambda_cut_list[i]);
      out.report.set("sweep", key + ".lambda_next", pt.lambda_next);
      out.report.set("sweep", key + ".L_N", pt.L_N);
      out.report.set("sweep", key + ".err_galerkin_H", pt.gal_H);
      out.report.set("sweep", key + ".err_postprocessed_H", pt.pp_H);
      out.report.set("sweep", key + ".err_galerkin_V", pt.gal_V);
      out.report.set("sweep", key + ".err_postprocessed_V", pt.pp_V);
      out.report.set("sweep", key + ".improvement_ratio_H", pt.gal_H / pt.pp_H);
      out.report.set("sweep", key + ".tau_floor_H", floor);
      out.report.set("sweep", key + ".phi1_truth_err_H", pt.phi_truth);
      out.report.set("sweep", key + ".QN_u_H", pt.qn_u);
      out.series.push_back({key + ".csv", pt.rows});
      all_improved = all_improved && pt.pp_H <= pt.gal_H;
      all_floor = all_floor && floor <= 0.1 * pt.pp_H;
      all_phi = all_phi && pt.phi_truth < pt.qn_u;
      all_conditions = all_conditions && pt.conditions;
      trend.push_back({pt.lambda_next, pt.pp_H / pt.L_N});
    }
    const auto fit = convergence_order(trend);
    out.report.set("fit", "exponent_pp_H_over_L_N", fit.slope);
    out.report.set("fit", "residual_rms", fit.residual_rms);
    out.report.add_check({"conditions_admissible", all_conditions, false, "every cutoff"});
    out.report.add_check({"postprocessing_improves_H", all_improved, false, "every cutoff"});
    out.report.add_check({"tau_floor_subdominant", all_floor, false, "|e(tau) - e(tau/2)| <= 0.1 e(tau)"});
    out.report.add_check({"phi1_truth_better_than_zero", all_phi, false, "|Phi1(P_N u) - Q_N u| < |Q_N u|"});
    out.report.add_check({"exponent_in_[-1.6,-0.9]", fit.slope >= -1.6 && fit.slope <= -0.9, false,
                          "exponent = " + detail::fmt(fit.slope)});
  });
}

// ---------------------------------------------------------------------------
// Stability soak

inline ExperimentReport run_stability_soak(const ExperimentConfig& cfg) {
  const std::vector<double> taus = cfg.tau_list.empty() ? std::vector<double>{cfg.tau} : cfg.tau_list;
  ExperimentReport out{Report("soak"), {}, {}};
  return detail::guarded(cfg, out, [&] {
    const auto s = build_setup(cfg, std::nullopt, *std::min_element(taus.begin(), taus.end()));
    if (!s.forced) throw ConfigError("soak needs a nonzero forcing");
    describe_setup(out.report, cfg, s);
    out.report.add_check({"conditions_admissible", s.conditions.core_passed(), false, "beta_lower and c0_beta_h2"});
    const auto truth = make_truth(cfg, s, static_cast<double>(cfg.steps) * *std::max_element(taus.begin(), taus.end()));
    const auto v0 = make_initial(cfg, s, *truth.stream);
    const auto& p = s.physics;
    const double m1 = s.bounds.M1, m0 = s.bounds.M0;
    const double f2 = norm_H(p.forcing) * norm_H(p.forcing);
    out.report.set("soak", "initial_norm_V_over_M1", norm_V(v0) / m1);

    struct Point {
      double max_v_ratio = 0, max_h_ratio = 0, max_step_ratio = 0, max_energy_ratio = 0;
      long first_violation = -1;
      std::vector<SeriesRow> rows;
    };
    const auto points = detail::parallel_map<Point>(taus.size(), cfg.workers, [&](size_t i) {
      const double tau = taus[i];
      Point pt;
      SchemeState st{0, tau, v0};
      const double env_v = 6.0 * m1, env_h = env_v / std::sqrt(p.grid.lambda1());
      auto record = [&](const SchemeState& x) {
        if (x.k % cfg.csv_every == 0 || x.k == cfg.steps) {
          SeriesRow row = norms_row(x.k, x.time(), x.v);
          row.envelope_H = env_h;
          row.envelope_V = env_v;
          pt.rows.push_back(row);
        }
      };
      record(st);
      for (long k = 0; k < cfg.steps; ++k) {
        auto next = advance(cfg.scheme, st, p, *truth.stream, cfg.solver);
        const double v_prev = norm_V(st.v), v_next = norm_V(next.v);
        const double h_prev = norm_H(st.v), h_next = norm_H(next.v);
        const double v_ratio = v_next / env_v, h_ratio = h_next / env_h;
        const double step_ratio = v_next * v_next / (4.0 * v_prev * v_prev + 40.0 * m1 * m1);
        double energy_ratio = 0.0;
        if (cfg.scheme == Scheme::semi_implicit && p.beta > 0.0) {
          const double lhs = (1.0 + tau * (p.beta / 2.0 + p.nu * p.grid.lambda1())) * h_next * h_next;
          const double rhs = h_prev * h_prev + 6.0 * tau * f2 / p.beta + 6.0 * tau * p.beta * m0 * m0 + 6.0 * tau * p.nu * m1 * m1;
          energy_ratio = lhs / rhs;
        }
        pt.max_v_ratio = std::max(pt.max_v_ratio, v_ratio);
        pt.max_h_ratio = std::max(pt.max_h_ratio, h_ratio);
        pt.max_step_ratio = std::max(pt.max_step_ratio, step_ratio);
        pt.max_energy_ratio = std::max(pt.max_energy_ratio, energy_ratio);
        if (pt.first_violation < 0 && (v_ratio > 1.0 || h_ratio > 1.0 || step_ratio > 1.0 || energy_ratio > 1.0)) {
          pt.first_violation = next.k;
          std::filesystem::create_directories(cfg.out_dir);
          write_snapshot_file(std::filesystem::path(cfg.out_dir) / ("violation_tau_" + std::to_string(i) + ".nnsf"), next.v,
                              p.cutoff.lambda_cut());
        }
        st = std::move(next);
        record(st);
      }
      return pt;
    });

    for (size_t i = 0; i < points.size(); ++i) {
      const auto& pt = points[i];
      const std::string key = "tau_" + std::to_string(i);
      out.report.set("soak", key + ".tau", taus[i]);
      out.report.set("soak", key + ".steps", cfg.steps);
      out.report.set("soak", key + ".max_norm_V_over_6M1", pt.max_v_ratio);
      out.report.set("soak", key + ".max_norm_H_over_6M1_lambda1", pt.max_h_ratio);
      out.report.set("soak", key + ".max_step_bound_ratio", pt.max_step_ratio);
      out.report.set("soak", key + ".first_violation_step", pt.first_violation);
      out.series.push_back({key + ".csv", pt.rows});
      out.report.add_check({key + ".norm_V_bound", pt.max_v_ratio <= 1.0, false, "max ratio " + detail::fmt(pt.max_v_ratio)});
      out.report.add_check({key + ".norm_H_bound", pt.max_h_ratio <= 1.0, false, "max ratio " + detail::fmt(pt.max_h_ratio)});
      out.report.add_check({key + ".stepwise_bound", pt.max_step_ratio <= 1.0, false, "max ratio " + detail::fmt(pt.max_step_ratio)});
      if (cfg.scheme == Scheme::semi_implicit) {
        out.report.set("soak", key + ".max_energy_ratio", pt.max_energy_ratio);
        out.report.add_check({key + ".energy_inequality", pt.max_energy_ratio <= 1.0, false,
                              "max ratio " + detail::fmt(pt.max_energy_ratio)});
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Contraction

inline ExperimentReport run_contraction_test(const ExperimentConfig& cfg) {
  ExperimentReport out{Report("contraction"), {}, {}};
  return detail::guarded(cfg, out, [&] {
    const auto s = build_setup(cfg);
    describe_setup(out.report, cfg, s);
    const auto& p = s.physics;
    const auto truth = make_truth(cfg, s, static_cast<double>(cfg.steps) * cfg.tau);
    const auto v0 = make_initial(cfg, s, *truth.stream);
    std::mt19937_64 rng(cfg.seed + 7);
    auto w = project_low(random_field(p.grid, rng, p.cutoff.lambda_cut(), cfg.initial_slope), p.cutoff);
    const double m1 = s.forced ? s.bounds.M1 : 1.0;
    const auto w0 = v0 + (cfg.perturbation * m1 / norm_V(w)) * w;

    const bool semi = cfg.scheme == Scheme::semi_implicit;
    const NormKind kind = semi ? NormKind::H : NormKind::V;
    const bool in_hypothesis = !semi || cfg.tau * p.beta <= 1.0;
    out.report.set("contraction", "norm", to_string(kind));
    out.report.set("contraction", "tau_beta", cfg.tau * p.beta);
    out.report.set("contraction", "in_hypothesis", in_hypothesis);
    out.report.add_check({"conditions_admissible", s.forced && s.conditions.core_passed(), false, "beta_lower and c0_beta_h2"});

    const double e0 = norm_of(kind, v0 - w0);
    const double q = 1.0 + cfg.tau * (p.beta + p.nu * p.grid.lambda1()) / 4.0;
    SchemeState a{0, cfg.tau, v0}, b{0, cfg.tau, w0};
    std::vector<SeriesRow> rows;
    double worst = 0.0;
    long first_violation = -1;
    double max_diff = 0.0;
    for (long k = 0; k <= cfg.steps; ++k) {
      if (k > 0) {
        a = advance(cfg.scheme, a, p, *truth.stream, cfg.solver);
        b = advance(cfg.scheme, b, p, *truth.stream, cfg.solver);
      }
      const auto d = a.v - b.v;
      const double measured = norm_of(kind, d);
      const double env_sq = e0 * e0 / std::pow(q, static_cast<double>(k));
      max_diff = std::max(max_diff, measured);
      if (e0 > 0.0) {
        const double ratio = measured * measured / env_sq;
        if (k > 0) worst = std::max(worst, ratio);
        if (first_violation < 0 && ratio > 1.0 + 1e-12) first_violation = k;
      }
      if (k % cfg.csv_every == 0 || k == cfg.steps) {
        SeriesRow row = norms_row(a.k, a.time(), a.v);
        row.err_H = norm_H(d);
        row.err_V = norm_V(d);
        const double env = std::sqrt(env_sq);
        if (semi) row.envelope_H = env;
        else row.envelope_V = env;
        rows.push_back(row);
      }
    }
    out.series.push_back({"contraction.csv", rows});
    out.report.set("contraction", "initial_difference", e0);
    out.report.set("contraction", "max_ratio_to_envelope", worst);
    out.report.set("contraction", "first_violation_step", first_violation);
    if (e0 == 0.0) {
      const double level = std::max(norm_of(kind, a.v), 1.0) * 1e-9;
      out.report.add_check({"zero_perturbation_stays_small", max_diff <= level, false, "max diff " + detail::fmt(max_diff)});
    } else {
      out.report.add_check({"envelope_respected", first_violation < 0, !in_hypothesis,
                            in_hypothesis ? "max ratio " + detail::fmt(worst) : "tau beta > 1: out of hypothesis"});
    }
  });
}

// ---------------------------------------------------------------------------

/// Byte comparison of every CSV file in two output directories.
inline bool same_csv_outputs(const std::filesystem::path& a, const std::filesystem::path& b, std::string* why = nullptr) {
  auto slurp = [](const std::filesystem::path& p) {
    std::ifstream is(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(is), {});
  };
  std::vector<std::string> names;
  for (const auto& e : std::filesystem::directory_iterator(a))
    if (e.path().extension() == ".csv") names.push_back(e.path().filename().string());
  std::sort(names.begin(), names.end());
  size_t count_b = 0;
  for (const auto& e : std::filesystem::directory_iterator(b))
    if (e.path().extension() == ".csv") ++count_b;
  if (names.empty() || names.size() != count_b) {
    if (why) *why = "different CSV file sets";
    return false;
  }
  for (const auto& n : names)
    if (slurp(a / n) != slurp(b / n)) {
      if (why) *why = n + " differs";
      return false;
    }
  return true;
}

}  // namespace nsda::harness
