#pragma once

// Time discretizations of the nudged spectral Galerkin system
//
//   dv/dt + nu A v + P_N B(v, v) = P_N f - beta P_N P_sigma I_h(v - u)
//
// by implicit Euler variants, plus fine-step integrators used to produce
// truth trajectories and the continuous-in-time reference.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "nsda/interpolants.hpp"
#include "nsda/krylov.hpp"
#include "nsda/nse_operators.hpp"
#include "nsda/spectral_field.hpp"

namespace nsda {

struct PhysicsParams {
  double nu;
  TorusGrid grid;
  SpectralField forcing;  // time independent
  double beta;
  InterpolantSpec interpolant;
  GalerkinCutoff cutoff;
  double condition_constant = 1.0;  // absolute constant c of the beta lower bound

  void validate() const {
    if (!(nu > 0.0)) throw ConfigError("physics: nu must be positive");
    if (!(beta >= 0.0)) throw ConfigError("physics: beta must be nonnegative");
    if (!(forcing.grid() == grid)) throw DimensionError("physics: forcing lives on a different grid");
    if (!cutoff.fits_band(grid))
      throw ConfigError("physics: Galerkin cutoff " + std::to_string(cutoff.lambda_cut()) +
                        " exceeds the alias-free band of the grid");
    if (cutoff.lambda_cut() < grid.lambda1() * (1.0 - 1e-12)) throw ConfigError("physics: Galerkin cutoff below lambda_1");
    interpolant.validate(grid);
  }
};

struct SolverSettings {
  double linear_tol = 1e-10;
  int linear_max_iter = 500;
  int restart = 50;
  double picard_tol = 1e-10;  // relative V-norm increment
  int picard_max_iter = 100;
  double residual_tol = 1e-10;  // relative H-norm residual of the step equation

  friend bool operator==(const SolverSettings&, const SolverSettings&) = default;
};

struct SchemeState {
  long k = 0;
  double tau = 0.0;
  SpectralField v;

  double time() const { return static_cast<double>(k) * tau; }
};

struct StepInfo {
  int linear_iterations = 0;
  int picard_iterations = 0;
  double relative_residual = 0.0;
  std::vector<double> picard_trace;
};

// ---------------------------------------------------------------------------
// Trajectories and observation streams

/// Snapshots of a field at increasing times.
struct Trajectory {
  std::vector<long> steps;
  std::vector<double> times;
  std::vector<SpectralField> fields;

  void push(long step, double t, SpectralField f) {
    steps.push_back(step);
    times.push_back(t);
    fields.push_back(std::move(f));
  }
  size_t size() const { return times.size(); }
  bool empty() const { return times.empty(); }

  /// Index of a stored time equal to t (to round-off), if any.
  std::optional<size_t> find(double t) const {
    if (times.empty()) return std::nullopt;
    const double tol = 1e-9 * std::max(1.0, std::abs(t));
    auto it = std::lower_bound(times.begin(), times.end(), t - tol);
    if (it != times.end() && std::abs(*it - t) <= tol) return static_cast<size_t>(it - times.begin());
    return std::nullopt;
  }

  /// Field at time t: the stored snapshot when t is a snapshot time,
  /// otherwise four-point Lagrange (cubic) interpolation.
  SpectralField at(double t, bool* interpolated = nullptr) const {
    if (times.empty()) throw PreconditionError("Trajectory::at: empty trajectory");
    if (auto i = find(t)) {
      if (interpolated) *interpolated = false;
      return fields[*i];
    }
    const double tol = 1e-9 * std::max(1.0, std::abs(t));
    if (t < times.front() - tol || t > times.back() + tol)
      throw PreconditionError("Trajectory::at: time " + std::to_string(t) + " outside stored range");
    if (times.size() < 4) throw PreconditionError("Trajectory::at: cubic interpolation needs 4 snapshots");
    if (interpolated) *interpolated = true;
    const auto hi = static_cast<long>(std::upper_bound(times.begin(), times.end(), t) - times.begin());
    const long first = std::clamp<long>(hi - 2, 0, static_cast<long>(times.size()) - 4);
    SpectralField out = SpectralField::zero(fields.front().grid());
    for (long a = first; a < first + 4; ++a) {
      double w = 1.0;
      for (long b = first; b < first + 4; ++b)
        if (b != a) w *= (t - times[b]) / (times[a] - times[b]);
      out += w * fields[a];
    }
    return out;
  }
};

/// Source of nudging data: observe(t) = P_sigma I_h u(t) and the truth u(t).
class ObservationStream {
 public:
  virtual ~ObservationStream() = default;
  virtual SpectralField observe(double t) const = 0;
  virtual SpectralField truth(double t) const = 0;
  /// True once any query needed time interpolation of stored data.
  virtual bool interpolated() const { return false; }
};

class AnalyticObservations final : public ObservationStream {
 public:
  AnalyticObservations(std::function<SpectralField(double)> truth, InterpolantSpec spec)
      : truth_(std::move(truth)), spec_(spec) {}
  SpectralField observe(double t) const override { return apply_ih(spec_, truth_(t)); }
  SpectralField truth(double t) const override { return truth_(t); }

 private:
  std::function<SpectralField(double)> truth_;
  InterpolantSpec spec_;
};

/// Observations of a time-independent truth, computed once.
class SteadyObservations final : public ObservationStream {
 public:
  SteadyObservations(SpectralField truth, const InterpolantSpec& spec) : truth_(std::move(truth)), observed_(apply_ih(spec, truth_)) {}
  SpectralField observe(double) const override { return observed_; }
  SpectralField truth(double) const override { return truth_; }

 private:
  SpectralField truth_, observed_;
};

/// Observations backed by a stored truth trajectory; times between
/// snapshots are interpolated cubically (I_h is linear, so it commutes with
/// the interpolation).
class TrajectoryObservations final : public ObservationStream {
 public:
  TrajectoryObservations(std::shared_ptr<const Trajectory> truth, const InterpolantSpec& spec)
      : truth_(std::move(truth)), spec_(spec) {}
  SpectralField observe(double t) const override { return apply_ih(spec_, truth(t)); }
  SpectralField truth(double t) const override {
    bool interp = false;
    auto f = truth_->at(t, &interp);
    if (interp) interpolated_ = true;
    return f;
  }
  bool interpolated() const override { return interpolated_; }
  const Trajectory& trajectory() const { return *truth_; }

 private:
  std::shared_ptr<const Trajectory> truth_;
  InterpolantSpec spec_;
  mutable std::atomic<bool> interpolated_{false};
};

/// Zero observations, for beta = 0 runs.
class NullObservations final : public ObservationStream {
 public:
  explicit NullObservations(const TorusGrid& grid) : zero_(SpectralField::zero(grid)) {}
  SpectralField observe(double) const override { return zero_; }
  SpectralField truth(double) const override { return zero_; }

 private:
  SpectralField zero_;
};

// ---------------------------------------------------------------------------
// Steppers

namespace detail {

inline SpectralField nudging_term(const PhysicsParams& p, const SpectralField& w) {
  if (p.interpolant.kind == InterpolantKind::fourier_truncation) {
    const double cut = std::min(p.cutoff.lambda_cut(), p.interpolant.fourier_cutoff().lambda_cut());
    return project_low(w, GalerkinCutoff(cut));
  }
  return project_low(apply_ih(p.interpolant, w), p.cutoff);
}

/// w/tau + nu A w + P_N B(frozen, w) + beta P_N P_sigma I_h w
inline SpectralField implicit_operator(const PhysicsParams& p, double tau, const SpectralField& frozen, const SpectralField& w) {
  SpectralField out = w.scaled_by([&](double k2) { return 1.0 / tau + p.nu * k2; });
  out += project_low(bilinear_B(frozen, w), p.cutoff);
  if (p.beta != 0.0) out += p.beta * nudging_term(p, w);
  return out;
}

inline FieldMap diagonal_preconditioner(const PhysicsParams& p, double tau) {
  const auto& grid = p.grid;
  const int n = grid.size();
  auto weights = std::make_shared<std::vector<double>>(grid.modes(), 0.0);
  for (int mx = 0; mx < n; ++mx)
    for (int my = 0; my < n; ++my) {
      const double k2 = grid.k2(mx, my);
      if (!p.cutoff.contains(k2)) continue;
      const double d = 1.0 / tau + p.nu * k2 + p.beta * ih_diagonal_weight(p.interpolant, grid, mx, my);
      (*weights)[static_cast<size_t>(mx) * n + my] = 1.0 / d;
    }
  return [weights, grid](const SpectralField& r) {
    std::vector<Complex> c(r.coeffs().begin(), r.coeffs().end());
    const size_t m = grid.modes();
    for (size_t i = 0; i < m; ++i) {
      c[i] *= (*weights)[i];
      c[m + i] *= (*weights)[i];
    }
    return unchecked_field(grid, std::move(c));
  };
}

/// v^k/tau + P_N f + beta P_N P_sigma I_h u(t_{k+1})
inline SpectralField step_rhs(const PhysicsParams& p, const SchemeState& s, const ObservationStream& obs) {
  SpectralField rhs = (1.0 / s.tau) * s.v + project_low(p.forcing, p.cutoff);
  if (p.beta != 0.0) {
    const double t_next = static_cast<double>(s.k + 1) * s.tau;
    rhs += p.beta * project_low(resample(obs.observe(t_next), p.grid), p.cutoff);
  }
  return rhs;
}

inline void check_state(const PhysicsParams& p, const SchemeState& s) {
  if (!(s.tau > 0.0)) throw PreconditionError("scheme: time step must be positive");
  if (!(s.v.grid() == p.grid)) throw DimensionError("scheme: iterate lives on a different grid");
  if (!supported_in(s.v, p.cutoff)) throw PreconditionError("scheme: iterate is not supported in P_N");
}

}  // namespace detail

/// One step of the semi-implicit scheme: v^{k+1} solves
/// (I/tau + nu A + P_N B(v^k, .) + beta P_N P_sigma I_h) v^{k+1}
///   = v^k/tau + P_N f + beta P_N P_sigma I_h u(t_{k+1}).
inline SchemeState semi_implicit_step(const SchemeState& state, const PhysicsParams& p, const ObservationStream& obs,
                                      const SolverSettings& settings = {}, StepInfo* info = nullptr) {
  detail::check_state(p, state);
  const SpectralField rhs = detail::step_rhs(p, state, obs);
  const SpectralField& frozen = state.v;
  FieldMap op = [&](const SpectralField& w) { return detail::implicit_operator(p, state.tau, frozen, w); };
  auto solved = solve_coercive_linear(op, rhs, std::min(settings.linear_tol, settings.residual_tol), settings.linear_max_iter,
                                      detail::diagonal_preconditioner(p, state.tau), state.v, settings.restart);
  SpectralField next = project_low(solved.x, p.cutoff);
  if (info) {
    info->linear_iterations = solved.iterations;
    info->picard_iterations = 0;
    info->relative_residual = solved.relative_residual;
  }
  return {state.k + 1, state.tau, std::move(next)};
}

/// Relative H-norm residual of the fully implicit step equation at x.
inline double fully_implicit_residual(const SchemeState& state, const PhysicsParams& p, const ObservationStream& obs,
                                      const SpectralField& x) {
  const SpectralField rhs = detail::step_rhs(p, state, obs);
  const SpectralField r = detail::implicit_operator(p, state.tau, x, x) - rhs;
  const double scale = norm_H(rhs);
  return scale > 0.0 ? norm_H(r) / scale : norm_H(r);
}

/// One step of the fully implicit scheme, solved by Picard iteration on the
/// first argument of B; each inner problem is a coercive linear solve.
inline SchemeState fully_implicit_step(const SchemeState& state, const PhysicsParams& p, const ObservationStream& obs,
                                       const SolverSettings& settings = {}, StepInfo* info = nullptr) {
  detail::check_state(p, state);
  const SpectralField rhs = detail::step_rhs(p, state, obs);
  const double rhs_norm = norm_H(rhs);
  const FieldMap precond = detail::diagonal_preconditioner(p, state.tau);
  // Inner solves run tighter than the outer tolerance so that the final
  // nonlinear residual is dominated by the Picard increment.
  const double inner_tol = std::min(settings.linear_tol, settings.residual_tol) * 0.1;
  SpectralField x = state.v;
  std::vector<double> trace;
  int linear_total = 0;
  for (int it = 1; it <= settings.picard_max_iter; ++it) {
    const SpectralField frozen = x;
    FieldMap op = [&](const SpectralField& w) { return detail::implicit_operator(p, state.tau, frozen, w); };
    auto solved = solve_coercive_linear(op, rhs, inner_tol, settings.linear_max_iter, precond, x, settings.restart);
    linear_total += solved.iterations;
    SpectralField next = project_low(solved.x, p.cutoff);
    const double inc = norm_V(next - x);
    const double size = norm_V(next);
    const double rel = size > 0.0 ? inc / size : inc;
    trace.push_back(rel);
    x = std::move(next);
    if (rel <= settings.picard_tol) {
      const SpectralField r = detail::implicit_operator(p, state.tau, x, x) - rhs;
      const double res = rhs_norm > 0.0 ? norm_H(r) / rhs_norm : norm_H(r);
      if (res <= settings.residual_tol) {
        if (info) {
          info->linear_iterations = linear_total;
          info->picard_iterations = it;
          info->relative_residual = res;
          info->picard_trace = trace;
        }
        return {state.k + 1, state.tau, std::move(x)};
      }
    }
  }
  throw SolverError("fully_implicit_step: Picard iteration did not converge in " + std::to_string(settings.picard_max_iter) +
                        " iterations at step " + std::to_string(state.k),
                    trace);
}

enum class Scheme { semi_implicit, fully_implicit };

inline std::string to_string(Scheme s) { return s == Scheme::semi_implicit ? "semi_implicit" : "fully_implicit"; }

inline Scheme scheme_from_string(const std::string& s) {
  if (s == "semi_implicit" || s == "semi") return Scheme::semi_implicit;
  if (s == "fully_implicit" || s == "full") return Scheme::fully_implicit;
  throw ConfigError("unknown scheme '" + s + "'");
}

inline SchemeState advance(Scheme scheme, const SchemeState& s, const PhysicsParams& p, const ObservationStream& obs,
                           const SolverSettings& settings = {}, StepInfo* info = nullptr) {
  return scheme == Scheme::semi_implicit ? semi_implicit_step(s, p, obs, settings, info)
                                         : fully_implicit_step(s, p, obs, settings, info);
}

/// Runs `scheme` from v0 (projected onto P_N) for `steps` steps, storing
/// every `store_every`-th iterate (and the initial one).
inline Trajectory run_scheme(Scheme scheme, const SpectralField& v0, const PhysicsParams& p, const ObservationStream& obs,
                             double tau, long steps, long store_every = 1, const SolverSettings& settings = {}) {
  if (store_every < 1) throw PreconditionError("run_scheme: store_every must be >= 1");
  SchemeState s{0, tau, project_low(resample(v0, p.grid), p.cutoff)};
  Trajectory traj;
  traj.push(0, 0.0, s.v);
  for (long k = 0; k < steps; ++k) {
    s = advance(scheme, s, p, obs, settings);
    if (s.k % store_every == 0) traj.push(s.k, s.time(), s.v);
  }
  return traj;
}

/// Fine-step semi-implicit approximation of the continuous Galerkin flow
/// v_N(t) with v_N(0) = P_N v0. Its bias is first order in tau_fine.
inline Trajectory reference_galerkin_integrate(const SpectralField& v0, const PhysicsParams& p, const ObservationStream& obs,
                                               double t_end, double tau_fine, long store_every = 1,
                                               std::optional<double> tau_experiment = std::nullopt,
                                               const SolverSettings& settings = {}) {
  if (tau_experiment && tau_fine > *tau_experiment / 50.0 * (1.0 + 1e-12))
    throw PreconditionError("reference_galerkin_integrate: tau_fine must be <= tau/50");
  const long steps = std::lround(t_end / tau_fine);
  return run_scheme(Scheme::semi_implicit, v0, p, obs, tau_fine, steps, store_every, settings);
}

/// Truth generation: the unnudged Navier-Stokes flow on the full alias-free
/// band, advanced by the semi-implicit stepper with beta = 0.
inline Trajectory nse_integrate(const SpectralField& u0, const PhysicsParams& p, double t_end, double tau_fine, long store_every = 1,
                                const SolverSettings& settings = {}) {
  if (p.beta != 0.0) throw PreconditionError("nse_integrate: beta must be zero");
  if (p.cutoff.lambda_cut() < GalerkinCutoff::full_band(p.grid).lambda_cut() * (1.0 - 1e-12))
    throw PreconditionError("nse_integrate: cutoff must cover the full alias-free band");
  NullObservations none(p.grid);
  const long steps = std::lround(t_end / tau_fine);
  return run_scheme(Scheme::semi_implicit, u0, p, none, tau_fine, steps, store_every, settings);
}

// ---------------------------------------------------------------------------
// Trajectory store: one snapshot file per stored step plus index.csv.

namespace detail {
/// Writes via a temporary file and rename so readers never see partial data.
template <class Writer>
void atomic_write(const std::filesystem::path& path, Writer&& writer) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw Error("cannot open " + tmp.string() + " for writing");
    writer(os);
    os.flush();
    if (!os) throw Error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}
}  // namespace detail

inline void write_trajectory(const std::filesystem::path& dir, const Trajectory& traj, double lambda_cut) {
  std::filesystem::create_directories(dir);
  std::ostringstream index;
  index << "step,time,file\n";
  for (size_t i = 0; i < traj.size(); ++i) {
    char name[64];
    std::snprintf(name, sizeof(name), "step_%08ld.nnsf", traj.steps[i]);
    detail::atomic_write(dir / name, [&](std::ostream& os) { write_snapshot(os, traj.fields[i], lambda_cut); });
    char line[128];
    std::snprintf(line, sizeof(line), "%ld,%.17g,%s\n", traj.steps[i], traj.times[i], name);
    index << line;
  }
  detail::atomic_write(dir / "index.csv", [&](std::ostream& os) { os << index.str(); });
}

inline Trajectory read_trajectory(const std::filesystem::path& dir) {
  std::ifstream is(dir / "index.csv");
  if (!is) throw Error("cannot open " + (dir / "index.csv").string());
  std::string line;
  std::getline(is, line);
  if (line != "step,time,file") throw ValidationError("trajectory index: unexpected header");
  Trajectory traj;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string step, time, file;
    if (!std::getline(ls, step, ',') || !std::getline(ls, time, ',') || !std::getline(ls, file))
      throw ValidationError("trajectory index: malformed line '" + line + "'");
    traj.push(std::stol(step), std::stod(time), read_snapshot_file(dir / file).field);
  }
  return traj;
}

}  // namespace nsda
