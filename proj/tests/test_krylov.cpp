#include <gtest/gtest.h>

#include <numbers>
#include <random>

#include "nsda/krylov.hpp"
#include "nsda/nse_operators.hpp"

using namespace nsda;

namespace {
const double kPi = std::numbers::pi;
}

TEST(Gmres, IdentityOneIteration) {
  TorusGrid g(2 * kPi, 16);
  std::mt19937_64 rng(1);
  const auto b = random_field(g, rng, 30.0);
  auto r = solve_coercive_linear([](const SpectralField& x) { return x; }, b, 1e-12, 10);
  EXPECT_EQ(r.iterations, 1);
  EXPECT_LT(norm_H(r.x - b), 1e-12 * norm_H(b));
}

TEST(Gmres, DiagonalMatchesClosedForm) {
  TorusGrid g(2 * kPi, 16);
  const double tau = 0.01, nu = 0.1;
  std::mt19937_64 rng(2);
  const auto b = random_field(g, rng, 40.0);
  auto op = [&](const SpectralField& x) { return x.scaled_by([&](double k2) { return 1.0 / tau + nu * k2; }); };
  auto r = solve_coercive_linear(op, b, 1e-13, 500);
  const auto exact = b.scaled_by([&](double k2) { return 1.0 / (1.0 / tau + nu * k2); });
  EXPECT_LT(norm_H(r.x - exact), 1e-12 * norm_H(exact));
}

TEST(Gmres, NonsymmetricCoercivePerturbation) {
  TorusGrid g(2 * kPi, 16);
  std::mt19937_64 rng(3);
  const double band = g.dealias_band();
  const auto w = random_field(g, rng, band * band, 1.0);
  const auto b = random_field(g, rng, band * band);
  const double scale = 0.1 / std::max(norm_V(w), 1e-300);
  std::vector<double> coercivity;
  auto op = [&](const SpectralField& x) {
    SpectralField y = x + scale * bilinear_B(w, x);
    if (norm_H(x) > 0) coercivity.push_back(inner_product(y, x) / (norm_H(x) * norm_H(x)));
    return y;
  };
  auto r = solve_coercive_linear(op, b, 1e-10, 500);
  const auto check = b - (r.x + scale * bilinear_B(w, r.x));
  EXPECT_LE(norm_H(check), 1e-10 * norm_H(b) * 1.01);
  for (double c : coercivity) EXPECT_GT(c, 0.0);
  EXPECT_FALSE(r.residual_history.empty());
}

TEST(Gmres, ZeroRhs) {
  TorusGrid g(2 * kPi, 8);
  auto r = solve_coercive_linear([](const SpectralField& x) { return 2.0 * x; }, SpectralField::zero(g), 1e-10, 10);
  EXPECT_EQ(norm_H(r.x), 0.0);
}

TEST(Gmres, ThrowsWithHistoryOnBudgetExhaustion) {
  TorusGrid g(2 * kPi, 16);
  std::mt19937_64 rng(4);
  const auto b = random_field(g, rng, 40.0);
  auto op = [](const SpectralField& x) { return x.scaled_by([](double k2) { return 1.0 + k2 * k2; }); };
  try {
    solve_coercive_linear(op, b, 1e-14, 3, {}, std::nullopt, 2);
    FAIL() << "expected SolverError";
  } catch (const SolverError& e) {
    EXPECT_EQ(e.history().size(), 3u);
    EXPECT_GT(e.final_residual(), 1e-14);
  }
}
