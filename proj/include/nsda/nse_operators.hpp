#pragma once

// Operators of the 2D periodic Navier-Stokes equations in the
// divergence-free Fourier basis: Stokes operator, Leray projection, the
// convective bilinear term and the approximate inertial manifold map.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "nsda/spectral_field.hpp"

namespace nsda {

/// A f: multiplication by |k|^2.
inline SpectralField apply_stokes(const SpectralField& f) {
  return f.scaled_by([](double k2) { return k2; });
}

/// A^{-1} f on mean-zero fields.
inline SpectralField inverse_stokes(const SpectralField& f) {
  return f.scaled_by([](double k2) { return 1.0 / k2; });
}

namespace detail {
// u_hat <- u_hat - k (k.u_hat)/|k|^2 at every nonzero wavenumber.
inline void leray_inplace(const TorusGrid& grid, std::vector<Complex>& c) {
  const int n = grid.size();
  const double ku = grid.k_unit();
  for (int mx = 0; mx < n; ++mx)
    for (int my = 0; my < n; ++my) {
      if (mx == 0 && my == 0) continue;
      const double kx = ku * grid.wave(mx), ky = ku * grid.wave(my);
      const double k2 = kx * kx + ky * ky;
      Complex& ax = c[grid.flat(0, mx, my)];
      Complex& ay = c[grid.flat(1, mx, my)];
      const Complex dot = (kx * ax + ky * ay) / k2;
      ax -= kx * dot;
      ay -= ky * dot;
    }
}

inline void dealias_inplace(const TorusGrid& grid, std::vector<Complex>& c) {
  const int n = grid.size(), band = grid.dealias_band();
  for (int comp = 0; comp < 2; ++comp)
    for (int mx = 0; mx < n; ++mx)
      for (int my = 0; my < n; ++my)
        if (std::abs(grid.wave(mx)) > band || std::abs(grid.wave(my)) > band) c[grid.flat(comp, mx, my)] = 0.0;
}
}  // namespace detail

/// P_sigma on Hermitian-symmetric raw coefficients.
inline SpectralField leray_project(RawCoefficients raw) {
  const auto& grid = raw.grid;
  if (raw.coeffs.size() != 2 * grid.modes()) throw DimensionError("leray_project: coefficient count mismatch");
  double scale = 1.0;
  for (const auto& z : raw.coeffs) scale = std::max(scale, std::abs(z));
  const int n = grid.size();
  for (int c = 0; c < 2; ++c)
    for (int mx = 0; mx < n; ++mx)
      for (int my = 0; my < n; ++my) {
        const auto& z = raw.coeffs[grid.flat(c, mx, my)];
        const auto& w = raw.coeffs[grid.flat(c, grid.index(-grid.wave(mx)), grid.index(-grid.wave(my)))];
        if (std::abs(z - std::conj(w)) > kInvariantTol * scale)
          throw ValidationError("leray_project: input is not Hermitian-symmetric");
      }
  detail::leray_inplace(grid, raw.coeffs);
  SpectralField::enforce_structure(grid, raw.coeffs);
  return detail::unchecked_field(grid, std::move(raw.coeffs));
}

/// B(u, v) = P_sigma((u.grad) v), evaluated pseudo-spectrally with the
/// two-thirds rule. Both arguments must lie in the alias-free band
/// |j|_inf <= (n-1)/3, in which case the result is the exact convolution
/// restricted to that band.
inline SpectralField bilinear_B(const SpectralField& u, const SpectralField& v) {
  u.check_same(v);
  const auto& grid = u.grid();
  const int band = grid.dealias_band();
  if (!supported_in_band(u, band) || !supported_in_band(v, band))
    throw PreconditionError("bilinear_B: operand exceeds the alias-free band |j|_inf <= " + std::to_string(band));
  const int n = grid.size();
  const size_t m = grid.modes();
  const double ku = grid.k_unit();
  const Complex I(0.0, 1.0);
  const auto uc = u.coeffs(), vc = v.coeffs();

  std::vector<Complex> velocity(m), grad_x(m), grad_y(m);
  for (int mx = 0; mx < n; ++mx)
    for (int my = 0; my < n; ++my) {
      const size_t i = static_cast<size_t>(mx) * n + my;
      const double kx = ku * grid.wave(mx), ky = ku * grid.wave(my);
      velocity[i] = uc[i] + I * uc[m + i];
      // (d/dx v_x) + i (d/dy v_x), and likewise for v_y.
      grad_x[i] = I * kx * vc[i] - ky * vc[i];
      grad_y[i] = I * kx * vc[m + i] - ky * vc[m + i];
    }
  detail::fft2d_inplace(velocity, n, FFTW_BACKWARD);
  detail::fft2d_inplace(grad_x, n, FFTW_BACKWARD);
  detail::fft2d_inplace(grad_y, n, FFTW_BACKWARD);

  std::vector<Complex> product(m);
  for (size_t i = 0; i < m; ++i) {
    const double ux = velocity[i].real(), uy = velocity[i].imag();
    const double wx = ux * grad_x[i].real() + uy * grad_x[i].imag();
    const double wy = ux * grad_y[i].real() + uy * grad_y[i].imag();
    product[i] = Complex(wx, wy);
  }
  std::vector<Complex> out(2 * m);
  detail::forward_pair(product, n, out.data(), out.data() + m);
  detail::dealias_inplace(grid, out);
  detail::leray_inplace(grid, out);
  SpectralField::enforce_structure(grid, out);
  return detail::unchecked_field(grid, std::move(out));
}

/// Brute-force oracle for bilinear_B: the convolution
/// P_sigma sum_{p+q=k} i (u_hat(p).q) v_hat(q) by direct double loop,
/// evaluated for output modes in the alias-free band. O(n^4); small grids only.
inline SpectralField bilinear_B_direct(const SpectralField& u, const SpectralField& v) {
  u.check_same(v);
  const auto& grid = u.grid();
  const int n = grid.size(), band = grid.dealias_band();
  const double ku = grid.k_unit();
  const Complex I(0.0, 1.0);

  struct Mode {
    int jx, jy;
    Complex ax, ay;
  };
  std::vector<Mode> u_modes;
  for (int mx = 0; mx < n; ++mx)
    for (int my = 0; my < n; ++my) {
      const Complex ax = u.at(0, mx, my), ay = u.at(1, mx, my);
      if (ax != Complex{} || ay != Complex{}) u_modes.push_back({grid.wave(mx), grid.wave(my), ax, ay});
    }

  std::vector<Complex> out(2 * grid.modes());
  for (int jx = -band; jx <= band; ++jx)
    for (int jy = -band; jy <= band; ++jy) {
      if (jx == 0 && jy == 0) continue;
      Complex sx{}, sy{};
      for (const auto& p : u_modes) {
        const int qx = jx - p.jx, qy = jy - p.jy;
        if (std::abs(qx) >= n / 2 || std::abs(qy) >= n / 2) continue;
        const int ix = grid.index(qx), iy = grid.index(qy);
        const Complex adv = I * ku * (p.ax * static_cast<double>(qx) + p.ay * static_cast<double>(qy));
        sx += adv * v.at(0, ix, iy);
        sy += adv * v.at(1, ix, iy);
      }
      out[grid.flat(0, grid.index(jx), grid.index(jy))] = sx;
      out[grid.flat(1, grid.index(jx), grid.index(jy))] = sy;
    }
  detail::leray_inplace(grid, out);
  SpectralField::enforce_structure(grid, out);
  return detail::unchecked_field(grid, std::move(out));
}

/// Approximate inertial manifold: Phi_1(p) = (nu A)^{-1} Q_N [f - B(p, p)].
inline SpectralField phi1(const SpectralField& p, const SpectralField& forcing, double nu, const GalerkinCutoff& cutoff) {
  p.check_same(forcing);
  if (!supported_in(p, cutoff)) throw PreconditionError("phi1: argument is not supported in P_N");
  const SpectralField residual = forcing - bilinear_B(p, p);
  return (1.0 / nu) * inverse_stokes(project_high(residual, cutoff));
}

/// Kolmogorov forcing (amplitude sin(2 pi kappa y / L), 0).
inline SpectralField kolmogorov_forcing(const TorusGrid& grid, int kappa, double amplitude) {
  if (kappa == 0) throw ConfigError("kolmogorov_forcing: kappa must be nonzero");
  if (std::abs(kappa) > grid.dealias_band()) throw PreconditionError("kolmogorov_forcing: kappa outside the alias-free band");
  std::vector<Complex> c(2 * grid.modes());
  c[grid.flat(0, 0, grid.index(kappa))] = Complex(0.0, -0.5 * amplitude);
  c[grid.flat(0, 0, grid.index(-kappa))] = Complex(0.0, 0.5 * amplitude);
  return detail::unchecked_field(grid, std::move(c));
}

/// Decaying Taylor-Green vortex
/// exp(-2 nu k^2 t) (sin kx cos ky, -cos kx sin ky), k = 2 pi kappa / L;
/// an exact unforced solution.
inline SpectralField taylor_green(const TorusGrid& grid, int kappa, double t, double nu) {
  if (kappa == 0 || std::abs(kappa) > grid.dealias_band())
    throw PreconditionError("taylor_green: kappa outside the alias-free band");
  const double k = grid.k_unit() * kappa;
  const double amp = std::exp(-2.0 * nu * k * k * t);
  // sin(kx)cos(ky) = (1/4i) sum over sx, sy of sx e^{i(sx kx + sy ky)};
  // -cos(kx)sin(ky) = -(1/4i) sum of sy e^{i(...)}.
  std::vector<Complex> c(2 * grid.modes());
  for (int sx : {-1, 1})
    for (int sy : {-1, 1}) {
      const int mx = grid.index(sx * kappa), my = grid.index(sy * kappa);
      c[grid.flat(0, mx, my)] = Complex(0.0, -0.25 * amp * sx);
      c[grid.flat(1, mx, my)] = Complex(0.0, 0.25 * amp * sy);
    }
  return detail::unchecked_field(grid, std::move(c));
}

/// Forcing with random phases and mode amplitudes |k|^-slope on
/// 0 < |k|^2 <= lambda_max, rescaled so that |f| = target_norm.
template <class Rng>
SpectralField power_law_forcing(const TorusGrid& grid, Rng& rng, double lambda_max, double slope, double target_norm) {
  SpectralField f = random_field(grid, rng, lambda_max, slope);
  const double norm = norm_H(f);
  if (norm == 0.0) throw ConfigError("power_law_forcing: empty support");
  return (target_norm / norm) * f;
}

}  // namespace nsda
