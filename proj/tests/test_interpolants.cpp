#include <gtest/gtest.h>

#include <numbers>
#include <random>

#include "nsda/interpolants.hpp"

using namespace nsda;

namespace {
const double kPi = std::numbers::pi;
}

TEST(InterpolantSpec, Validation) {
  TorusGrid g(2 * kPi, 16);
  EXPECT_THROW((InterpolantSpec{InterpolantKind::volume_average, 1.0}.validate(g)), ConfigError);  // L/h not integer
  EXPECT_THROW((InterpolantSpec{InterpolantKind::volume_average, 2 * kPi / 3}.validate(g)), ConfigError);  // 16 % 3
  EXPECT_NO_THROW((InterpolantSpec{InterpolantKind::volume_average, 2 * kPi / 4}.validate(g)));
  EXPECT_THROW((InterpolantSpec{InterpolantKind::fourier_truncation, 2.0}.validate(g)), ConfigError);  // 1/h^2 < lambda_1
  EXPECT_THROW((InterpolantSpec{InterpolantKind::fourier_truncation, -1.0}.validate(g)), ConfigError);
  EXPECT_EQ(interpolant_kind_from_string("volume_average"), InterpolantKind::volume_average);
  EXPECT_THROW(interpolant_kind_from_string("nodal"), ConfigError);
}

TEST(ApplyIh, FourierIsIdempotentAndCommutes) {
  TorusGrid g(2 * kPi, 16);
  InterpolantSpec spec{InterpolantKind::fourier_truncation, 1.0 / std::sqrt(8.0)};
  std::mt19937_64 rng(1);
  const auto f = random_field(g, rng, 40.0);
  const auto once = apply_ih(spec, f);
  EXPECT_EQ(norm_H(apply_ih(spec, once) - once), 0.0);
  GalerkinCutoff larger(20.0, g);
  EXPECT_EQ(norm_H(apply_ih(spec, project_low(f, larger)) - project_low(apply_ih(spec, f), larger)), 0.0);
}

TEST(ApplyIh, BlockConstantIsFixedPointOfAveraging) {
  TorusGrid g(2 * kPi, 16);
  InterpolantSpec spec{InterpolantKind::volume_average, 2 * kPi / 4};
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-1, 1);
  PhysicalField p(g);
  for (int bx = 0; bx < 4; ++bx)
    for (int by = 0; by < 4; ++by) {
      const double a = u(rng), b = u(rng);
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) {
          p.ux[(bx * 4 + i) * 16 + by * 4 + j] = a;
          p.uy[(bx * 4 + i) * 16 + by * 4 + j] = b;
        }
    }
  const auto q = block_average(spec, p);
  for (size_t i = 0; i < p.ux.size(); ++i) {
    EXPECT_DOUBLE_EQ(q.ux[i], p.ux[i]);
    EXPECT_DOUBLE_EQ(q.uy[i], p.uy[i]);
  }
}

TEST(ApplyIh, VolumeOutputIsAValidField) {
  TorusGrid g(2 * kPi, 16);
  InterpolantSpec spec{InterpolantKind::volume_average, 2 * kPi / 8};
  std::mt19937_64 rng(3);
  const auto f = random_field(g, rng, 40.0, 1.0);
  const auto ih = apply_ih(spec, f);
  // Round-trip through the validating constructor.
  std::vector<Complex> c(ih.coeffs().begin(), ih.coeffs().end());
  EXPECT_NO_THROW(SpectralField::from_coefficients(g, c));
  EXPECT_LT(norm_H(f - ih), norm_H(f));
}

TEST(EstimateC0, FourierBoundedByOne) {
  TorusGrid g(2 * kPi, 32);
  for (double inv_h2 : {4.0, 16.0, 50.0}) {
    InterpolantSpec spec{InterpolantKind::fourier_truncation, 1.0 / std::sqrt(inv_h2)};
    const double c0 = estimate_c0(spec, g, 200, 5);
    EXPECT_LE(c0, 1.0 + 1e-10);
    EXPECT_GT(c0, 0.0);
  }
  EXPECT_THROW(estimate_c0(InterpolantSpec{}, g, 5), PreconditionError);
  EXPECT_EQ(c0_ratio(InterpolantSpec{}, SpectralField::zero(g)), 0.0);
}

TEST(EstimateC0, VolumeAverageFinite) {
  TorusGrid g(2 * kPi, 32);
  InterpolantSpec spec{InterpolantKind::volume_average, 2 * kPi / 8};
  std::mt19937_64 rng(4);
  const double c0 = estimate_c0(spec, g, 200, 6);
  EXPECT_TRUE(std::isfinite(c0));
  for (int t = 0; t < 200; ++t) {
    const auto f = detail::probe_field(g, rng);
    const auto p = to_physical(f);
    const double e = std::sqrt(detail::discrete_l2_sq(p, block_average(spec, p)));
    EXPECT_LE(e, std::sqrt(c0 * 1.5) * spec.h * norm_V(f));
  }
  EXPECT_GT(estimate_c_minus1(spec, g, 50), 0.0);
  EXPECT_GT(estimate_c0_tilde(spec, g, GalerkinCutoff(16.0, g), 50), 0.0);
}

TEST(Stabilizing, FourierPassesWhenAdmissible) {
  TorusGrid g(2 * kPi, 32);
  const double nu = 0.1, inv_h2 = 25.0;
  InterpolantSpec spec{InterpolantKind::fourier_truncation, 1.0 / std::sqrt(inv_h2)};
  const double beta = nu * inv_h2;  // beta h^2 = nu
  std::mt19937_64 rng(7);
  for (int t = 0; t < 100; ++t) {
    const auto r = stabilizing_inequality_check(spec, beta, nu, detail::probe_field(g, rng));
    EXPECT_FALSE(r.violated()) << r.slack_h() << " " << r.slack_v();
  }
  const auto z = stabilizing_inequality_check(spec, beta, nu, SpectralField::zero(g));
  EXPECT_EQ(z.lhs_h, 0.0);
  EXPECT_EQ(z.rhs_h, 0.0);
  EXPECT_FALSE(z.violated());
}

TEST(Stabilizing, FlagsTenfoldViolation) {
  TorusGrid g(2 * kPi, 32);
  const double nu = 0.1, inv_h2 = 25.0;
  InterpolantSpec spec{InterpolantKind::fourier_truncation, 1.0 / std::sqrt(inv_h2)};
  const double beta = 10.0 * nu * inv_h2;
  // Mode just above the observed cutoff: |k|^2 = 26.
  std::vector<Complex> c(2 * g.modes());
  const int mx = g.index(5), my = g.index(1);
  c[g.flat(0, mx, my)] = Complex(0, 1.0);
  c[g.flat(1, mx, my)] = Complex(0, -5.0);
  c[g.flat(0, g.index(-5), g.index(-1))] = Complex(0, -1.0);
  c[g.flat(1, g.index(-5), g.index(-1))] = Complex(0, 5.0);
  const auto phi = SpectralField::from_coefficients(g, c);
  EXPECT_TRUE(stabilizing_inequality_check(spec, beta, nu, phi).violated_h);
}
