#include <gtest/gtest.h>

#include <filesystem>
#include <numbers>
#include <random>

#include "nsda/time_schemes.hpp"

using namespace nsda;

namespace {
const double kPi = std::numbers::pi;

PhysicsParams params(const TorusGrid& g, double nu, SpectralField f, double beta, double inv_h2, GalerkinCutoff cut) {
  PhysicsParams p{nu, g, std::move(f), beta, InterpolantSpec{InterpolantKind::fourier_truncation, 1.0 / std::sqrt(inv_h2)}, cut};
  p.validate();
  return p;
}

PhysicsParams unforced(const TorusGrid& g, double nu) {
  return params(g, nu, SpectralField::zero(g), 0.0, 1.0, GalerkinCutoff::full_band(g));
}
}  // namespace

TEST(PhysicsParams, Validation) {
  TorusGrid g(2 * kPi, 16);
  auto p = unforced(g, 0.1);
  p.nu = 0.0;
  EXPECT_THROW(p.validate(), ConfigError);
  p.nu = 0.1;
  p.beta = -1.0;
  EXPECT_THROW(p.validate(), ConfigError);
  p.beta = 0.0;
  p.cutoff = GalerkinCutoff(100.0);
  EXPECT_THROW(p.validate(), ConfigError);
}

TEST(SemiImplicit, KolmogorovSteadyStateIsFixedPoint) {
  TorusGrid g(2 * kPi, 32);
  const double nu = 0.1;
  const auto f = kolmogorov_forcing(g, 2, 1.0);
  const auto ustar = (1.0 / (nu * 4.0)) * f;
  ASSERT_LT(norm_H(f - nu * apply_stokes(ustar) - bilinear_B(ustar, ustar)), 1e-13);
  for (double beta : {0.0, 5.0}) {
    auto p = params(g, nu, f, beta, 16.0, GalerkinCutoff::full_band(g));
    SteadyObservations obs(ustar, p.interpolant);
    SchemeState s{0, 0.05, ustar};
    const auto semi = semi_implicit_step(s, p, obs);
    EXPECT_LT(norm_H(semi.v - ustar), 1e-9 * norm_H(ustar));
    const auto full = fully_implicit_step(s, p, obs);
    EXPECT_LT(norm_H(full.v - ustar), 1e-9 * norm_H(ustar));
    EXPECT_EQ(semi.k, 1);
  }
}

TEST(SemiImplicit, TaylorGreenLocalErrorIsSecondOrder) {
  TorusGrid g(2 * kPi, 16);
  const double nu = 0.1;
  auto p = unforced(g, nu);
  NullObservations none(g);
  std::vector<double> errs;
  for (double tau : {0.1, 0.05, 0.025}) {
    SchemeState s{0, tau, taylor_green(g, 1, 0.0, nu)};
    const auto next = semi_implicit_step(s, p, none);
    errs.push_back(norm_H(next.v - taylor_green(g, 1, tau, nu)));
  }
  EXPECT_NEAR(std::log2(errs[0] / errs[1]), 2.0, 0.1);
  EXPECT_NEAR(std::log2(errs[1] / errs[2]), 2.0, 0.1);
}

TEST(SemiImplicit, ResidualAndSupport) {
  TorusGrid g(2 * kPi, 32);
  const double nu = 0.1;
  std::mt19937_64 rng(1);
  const auto f = power_law_forcing(g, rng, 100.0, 1.0, 2.0);
  GalerkinCutoff cut(50.0, g);
  auto p = params(g, nu, f, 3.0, 20.0, cut);
  SteadyObservations obs(random_field(g, rng, 100.0, 1.0), p.interpolant);
  SchemeState s{3, 0.01, project_low(random_field(g, rng, 50.0, 1.0), cut)};
  StepInfo info;
  const auto next = semi_implicit_step(s, p, obs, {}, &info);
  EXPECT_TRUE(supported_in(next.v, cut));
  EXPECT_LE(info.relative_residual, 1e-10);
  // Recompute the residual independently.
  const auto lhs = (1.0 / s.tau) * next.v + nu * apply_stokes(next.v) + project_low(bilinear_B(s.v, next.v), cut) +
                   p.beta * project_low(apply_ih(p.interpolant, next.v), cut);
  const auto rhs = (1.0 / s.tau) * s.v + project_low(f, cut) + p.beta * project_low(obs.observe(0.04), cut);
  EXPECT_LE(norm_H(lhs - rhs), 1e-10 * norm_H(rhs) * 1.01);
}

TEST(SemiImplicit, RejectsIterateOutsideCutoff) {
  TorusGrid g(2 * kPi, 16);
  auto p = params(g, 0.1, SpectralField::zero(g), 0.0, 1.0, GalerkinCutoff(4.0, g));
  NullObservations none(g);
  std::mt19937_64 rng(2);
  SchemeState s{0, 0.01, random_field(g, rng, 20.0)};
  EXPECT_THROW(semi_implicit_step(s, p, none), PreconditionError);
}

TEST(SemiImplicit, OneStepContraction) {
  TorusGrid g(2 * kPi, 32);
  const double nu = 0.1, beta = 10.0, tau = 0.05;
  const auto f = kolmogorov_forcing(g, 2, 0.2);
  auto p = params(g, nu, f, beta, 2 * beta / nu, GalerkinCutoff::full_band(g));
  SteadyObservations obs((1.0 / (nu * 4)) * f, p.interpolant);
  std::mt19937_64 rng(3);
  auto a = project_low(0.3 * random_field(g, rng, 100.0, 1.0), p.cutoff);
  auto b = a + project_low(1e-3 * random_field(g, rng, 100.0, 1.0), p.cutoff);
  const double factor = 1.0 + tau * (beta + nu * g.lambda1()) / 4.0;
  for (int k = 0; k < 5; ++k) {
    const auto na = semi_implicit_step({k, tau, a}, p, obs), nb = semi_implicit_step({k, tau, b}, p, obs);
    const double before = norm_H(a - b), after = norm_H(na.v - nb.v);
    EXPECT_LE(after * after * factor, before * before);
    a = na.v;
    b = nb.v;
  }
}

TEST(FullyImplicit, AgreesWithSemiImplicitToSecondOrderInAmplitude) {
  TorusGrid g(2 * kPi, 16);
  auto p = unforced(g, 0.1);
  NullObservations none(g);
  std::mt19937_64 rng(4);
  auto base = project_low(random_field(g, rng, 25.0, 1.0), p.cutoff);
  base *= 1.0 / norm_V(base);
  std::vector<double> diffs;
  for (double amp : {2e-2, 1e-2, 5e-3}) {
    SchemeState s{0, 0.05, amp * base};
    diffs.push_back(norm_H(fully_implicit_step(s, p, none).v - semi_implicit_step(s, p, none).v));
  }
  EXPECT_NEAR(std::log2(diffs[0] / diffs[1]), 2.0, 0.15);
  EXPECT_NEAR(std::log2(diffs[1] / diffs[2]), 2.0, 0.15);
}

TEST(FullyImplicit, ResidualAndVContraction) {
  TorusGrid g(2 * kPi, 32);
  const double nu = 0.1, beta = 10.0, tau = 0.5;  // tau beta > 1 is allowed here
  const auto f = kolmogorov_forcing(g, 2, 0.2);
  auto p = params(g, nu, f, beta, 2 * beta / nu, GalerkinCutoff::full_band(g));
  SteadyObservations obs((1.0 / (nu * 4)) * f, p.interpolant);
  std::mt19937_64 rng(5);
  auto a = project_low(0.3 * random_field(g, rng, 100.0, 1.0), p.cutoff);
  auto b = a + project_low(1e-3 * random_field(g, rng, 100.0, 1.0), p.cutoff);
  const double factor = 1.0 + tau * (beta + nu * g.lambda1()) / 4.0;
  for (int k = 0; k < 3; ++k) {
    StepInfo info;
    const auto na = fully_implicit_step({k, tau, a}, p, obs, {}, &info);
    EXPECT_LE(info.relative_residual, 1e-10);
    EXPECT_LE(fully_implicit_residual({k, tau, a}, p, obs, na.v), 1e-10);
    const auto nb = fully_implicit_step({k, tau, b}, p, obs);
    const double before = norm_V(a - b), after = norm_V(na.v - nb.v);
    EXPECT_LE(after * after * factor, before * before);
    a = na.v;
    b = nb.v;
  }
}

TEST(FullyImplicit, PicardBudgetExhaustionCarriesTrace) {
  TorusGrid g(2 * kPi, 16);
  auto p = unforced(g, 0.1);
  NullObservations none(g);
  std::mt19937_64 rng(6);
  auto v = project_low(random_field(g, rng, 25.0), p.cutoff);
  SchemeState s{0, 0.2, (2.0 / norm_V(v)) * v};
  SolverSettings tight;
  tight.picard_max_iter = 2;
  try {
    fully_implicit_step(s, p, none, tight);
    FAIL() << "expected SolverError";
  } catch (const SolverError& e) {
    EXPECT_EQ(e.history().size(), 2u);
  }
}

TEST(Trajectory, CubicInterpolationExactOnCubics) {
  TorusGrid g(2 * kPi, 8);
  const auto f = kolmogorov_forcing(g, 1, 1.0);
  Trajectory tr;
  auto poly = [](double t) { return 1.0 + t - 2 * t * t + 0.5 * t * t * t; };
  for (int i = 0; i <= 6; ++i) tr.push(i, 0.1 * i, poly(0.1 * i) * f);
  bool interp = false;
  const auto mid = tr.at(0.234, &interp);
  EXPECT_TRUE(interp);
  EXPECT_LT(norm_H(mid - poly(0.234) * f), 1e-13);
  tr.at(0.3, &interp);
  EXPECT_FALSE(interp);
  EXPECT_THROW(tr.at(0.7), PreconditionError);
}

TEST(Trajectory, StoreRoundTrip) {
  TorusGrid g(2 * kPi, 16);
  std::mt19937_64 rng(7);
  Trajectory tr;
  for (int i = 0; i < 3; ++i) tr.push(10 * i, 0.05 * i, random_field(g, rng, 20.0));
  const auto dir = std::filesystem::temp_directory_path() / "nsda_traj_test";
  std::filesystem::remove_all(dir);
  write_trajectory(dir, tr, 20.0);
  const auto back = read_trajectory(dir);
  ASSERT_EQ(back.size(), 3u);
  for (size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(back.steps[i], tr.steps[i]);
    EXPECT_EQ(back.times[i], tr.times[i]);
    EXPECT_EQ(norm_H(back.fields[i] - tr.fields[i]), 0.0);
  }
  std::filesystem::remove_all(dir);
}

TEST(NseIntegrate, TaylorGreenFirstOrder) {
  TorusGrid g(2 * kPi, 16);
  const double nu = 0.1;
  auto p = unforced(g, nu);
  std::vector<double> errs;
  for (double tau : {0.02, 0.01, 0.005}) {
    const auto tr = nse_integrate(taylor_green(g, 1, 0.0, nu), p, 2.0, tau, static_cast<long>(std::lround(0.5 / tau)));
    double e = 0.0;
    for (size_t i = 0; i < tr.size(); ++i) e = std::max(e, norm_H(tr.fields[i] - taylor_green(g, 1, tr.times[i], nu)));
    errs.push_back(e);
  }
  EXPECT_NEAR(std::log2(errs[0] / errs[1]), 1.0, 0.1);
  EXPECT_NEAR(std::log2(errs[1] / errs[2]), 1.0, 0.1);
  EXPECT_THROW(nse_integrate(taylor_green(g, 1, 0.0, nu), params(g, nu, SpectralField::zero(g), 1.0, 1.0, GalerkinCutoff::full_band(g)), 1.0, 0.1),
               PreconditionError);
}

TEST(NseIntegrate, DiscreteEnergyInequality) {
  TorusGrid g(2 * kPi, 32);
  const double nu = 0.05, tau = 0.01;
  std::mt19937_64 rng(8);
  const auto f = power_law_forcing(g, rng, 50.0, 1.0, 1.0);
  auto p = params(g, nu, f, 0.0, 1.0, GalerkinCutoff::full_band(g));
  const auto tr = nse_integrate(random_field(g, rng, 50.0, 1.0), p, 1.0, tau);
  for (size_t k = 0; k + 1 < tr.size(); ++k) {
    const auto& a = tr.fields[k];
    const auto& b = tr.fields[k + 1];
    const double lhs = (norm_H(b) * norm_H(b) - norm_H(a) * norm_H(a)) / tau;
    const double rhs = 2 * inner_product(f, b) - 2 * nu * norm_V(b) * norm_V(b);
    EXPECT_LE(lhs, rhs + 1e-8 * (std::abs(rhs) + norm_H(b) * norm_H(b) / tau));
  }
}

TEST(ReferenceGalerkin, RichardsonAndNudgedApproach) {
  TorusGrid g(2 * kPi, 16);
  const double nu = 0.1;
  auto p = unforced(g, nu);
  NullObservations none(g);
  const auto u0 = taylor_green(g, 1, 0.0, nu);
  const auto a = reference_galerkin_integrate(u0, p, none, 1.0, 0.01, 50);
  const auto b = reference_galerkin_integrate(u0, p, none, 1.0, 0.005, 100);
  const auto c = reference_galerkin_integrate(u0, p, none, 1.0, 0.0025, 200);
  const double d1 = norm_H(a.fields.back() - b.fields.back()), d2 = norm_H(b.fields.back() - c.fields.back());
  EXPECT_NEAR(d1 / d2, 2.0, 0.2);
  EXPECT_THROW(reference_galerkin_integrate(u0, p, none, 1.0, 0.01, 1, 0.1), PreconditionError);

  // Nudged toward a steady truth from zero: error decreases in time.
  const auto f = kolmogorov_forcing(g, 2, 0.2);
  auto q = params(g, nu, f, 5.0, 50.0, GalerkinCutoff::full_band(g));
  const auto ustar = (1.0 / (nu * 4)) * f;
  SteadyObservations obs(ustar, q.interpolant);
  std::mt19937_64 rng(9);
  const auto tr = reference_galerkin_integrate(random_field(g, rng, 25.0), q, obs, 2.0, 0.01, 20);
  for (size_t i = 0; i + 1 < tr.size(); ++i) EXPECT_LT(norm_H(tr.fields[i + 1] - ustar), norm_H(tr.fields[i] - ustar));
}
