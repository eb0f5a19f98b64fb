#pragma once

// Divergence-free, mean-zero vector fields on the periodic square
// (0,L)x(0,L), stored as truncated Fourier coefficients.
//
// Coefficient convention: u(x) = sum_k u_hat(k) exp(i k.x), so
// u_hat(k) = n^-2 sum_x u(x) exp(-i k.x) and the L2 inner product over the
// torus is L^2 * Re sum_k u_hat(k) . conj(v_hat(k)).
//
// Storage is component-major, then x-wavenumber index, then y-wavenumber
// index, each index in FFT order (m < n/2 maps to wave index m, otherwise
// m - n). Physical samples use the same layout with m the grid point index.

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "nsda/detail/fft.hpp"
#include "nsda/errors.hpp"

namespace nsda {

using Complex = std::complex<double>;

/// Absolute tolerance used when validating field invariants.
inline constexpr double kInvariantTol = 1e-12;

class TorusGrid {
 public:
  TorusGrid(double length, int n) : length_(length), n_(n) {
    if (!(length > 0.0) || !std::isfinite(length)) throw ConfigError("TorusGrid: length must be positive");
    if (n < 4 || n % 2 != 0) throw ConfigError("TorusGrid: grid size must be even and >= 4");
  }

  double length() const noexcept { return length_; }
  int size() const noexcept { return n_; }
  size_t modes() const noexcept { return static_cast<size_t>(n_) * n_; }

  /// 2*pi/L, the wavenumber of wave index 1.
  double k_unit() const noexcept { return 2.0 * std::numbers::pi / length_; }
  double lambda1() const noexcept { return k_unit() * k_unit(); }

  int wave(int m) const noexcept { return m < n_ / 2 ? m : m - n_; }
  int index(int j) const noexcept { return ((j % n_) + n_) % n_; }
  bool is_nyquist(int m) const noexcept { return m == n_ / 2; }

  /// Largest |j|_inf for which quadratic products are alias-free on this grid.
  int dealias_band() const noexcept { return (n_ - 1) / 3; }

  double k2(int mx, int my) const noexcept {
    const double jx = wave(mx), jy = wave(my);
    return k_unit() * k_unit() * (jx * jx + jy * jy);
  }

  size_t flat(int c, int mx, int my) const noexcept {
    return static_cast<size_t>(c) * modes() + static_cast<size_t>(mx) * n_ + my;
  }

  friend bool operator==(const TorusGrid& a, const TorusGrid& b) noexcept {
    return a.n_ == b.n_ && a.length_ == b.length_;
  }

 private:
  double length_;
  int n_;
};

/// Eigenvalue-ball truncation: mode k is kept iff 0 < |k|^2 <= lambda_cut.
class GalerkinCutoff {
 public:
  explicit GalerkinCutoff(double lambda_cut) : lambda_cut_(lambda_cut) {
    if (!(lambda_cut > 0.0)) throw ConfigError("GalerkinCutoff: lambda_cut must be positive");
  }
  GalerkinCutoff(double lambda_cut, const TorusGrid& grid) : GalerkinCutoff(lambda_cut) {
    if (lambda_cut < grid.lambda1() * (1.0 - 1e-12))
      throw ConfigError("GalerkinCutoff: lambda_cut must be >= lambda_1");
  }

  /// Largest cutoff whose ball still fits inside the alias-free band of `grid`.
  static GalerkinCutoff full_band(const TorusGrid& grid) {
    const int k1 = grid.dealias_band() + 1;
    return GalerkinCutoff((k1 * k1 - 1) * grid.lambda1(), grid);
  }

  double lambda_cut() const noexcept { return lambda_cut_; }

  bool contains(double k2) const noexcept { return k2 > 0.0 && k2 <= lambda_cut_ * (1.0 + 1e-12); }

  /// lambda_N: the largest eigenvalue |k|^2 inside the ball.
  double lambda_n(const TorusGrid& grid) const {
    double best = 0.0;
    for_each_mode(grid, [&](double k2) {
      if (contains(k2)) best = std::max(best, k2);
    });
    if (best == 0.0) throw ConfigError("GalerkinCutoff: no mode inside the cutoff");
    return best;
  }

  /// lambda_{N+1}: the smallest representable eigenvalue strictly above the cutoff.
  double lambda_next(const TorusGrid& grid) const {
    double best = 0.0;
    for_each_mode(grid, [&](double k2) {
      if (k2 > 0.0 && !contains(k2) && (best == 0.0 || k2 < best)) best = k2;
    });
    if (best == 0.0) throw ConfigError("GalerkinCutoff: cutoff covers every representable mode");
    return best;
  }

  /// True iff every mode in the ball lies in the alias-free band of `grid`.
  bool fits_band(const TorusGrid& grid) const noexcept {
    const int k1 = grid.dealias_band() + 1;
    return lambda_cut_ * (1.0 + 1e-12) < k1 * k1 * grid.lambda1();
  }

 private:
  template <class F>
  static void for_each_mode(const TorusGrid& grid, F&& f) {
    const int n = grid.size();
    for (int mx = 0; mx < n; ++mx)
      for (int my = 0; my < n; ++my)
        if (!grid.is_nyquist(mx) && !grid.is_nyquist(my)) f(grid.k2(mx, my));
  }

  double lambda_cut_;
};

/// Unconstrained complex coefficients (e.g. a transformed physical product
/// before Leray projection).
struct RawCoefficients {
  TorusGrid grid;
  std::vector<Complex> coeffs;  // 2 * n * n

  explicit RawCoefficients(const TorusGrid& g) : grid(g), coeffs(2 * g.modes()) {}
};

/// Real velocity samples at x = (a L/n, b L/n), stored at a*n + b.
struct PhysicalField {
  TorusGrid grid;
  std::vector<double> ux, uy;

  explicit PhysicalField(const TorusGrid& g) : grid(g), ux(g.modes()), uy(g.modes()) {}
};

class SpectralField;
namespace detail {
SpectralField unchecked_field(const TorusGrid& grid, std::vector<Complex> coeffs);
}

class SpectralField {
 public:
  /// Validates the invariants (zero mean, zero Nyquist rows, Hermitian
  /// symmetry, k.u_hat = 0) within kInvariantTol and then enforces them
  /// exactly.
  static SpectralField from_coefficients(const TorusGrid& grid, std::vector<Complex> coeffs) {
    if (coeffs.size() != 2 * grid.modes())
      throw DimensionError("SpectralField: expected " + std::to_string(2 * grid.modes()) + " coefficients");
    const int n = grid.size();
    for (const auto& z : coeffs)
      if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) throw ValidationError("SpectralField: non-finite coefficient");
    for (int c = 0; c < 2; ++c) {
      if (std::abs(coeffs[grid.flat(c, 0, 0)]) > kInvariantTol) throw ValidationError("SpectralField: nonzero mean");
      for (int mx = 0; mx < n; ++mx)
        for (int my = 0; my < n; ++my) {
          const auto& z = coeffs[grid.flat(c, mx, my)];
          if ((grid.is_nyquist(mx) || grid.is_nyquist(my)) && std::abs(z) > kInvariantTol)
            throw ValidationError("SpectralField: nonzero Nyquist coefficient");
          const auto& w = coeffs[grid.flat(c, grid.index(-grid.wave(mx)), grid.index(-grid.wave(my)))];
          if (std::abs(z - std::conj(w)) > kInvariantTol) throw ValidationError("SpectralField: not Hermitian-symmetric");
        }
    }
    const double ku = grid.k_unit();
    for (int mx = 0; mx < n; ++mx)
      for (int my = 0; my < n; ++my) {
        if (mx == 0 && my == 0) continue;
        const double kx = ku * grid.wave(mx), ky = ku * grid.wave(my);
        const double kn = std::hypot(kx, ky);
        const Complex div = (kx * coeffs[grid.flat(0, mx, my)] + ky * coeffs[grid.flat(1, mx, my)]) / kn;
        if (std::abs(div) > kInvariantTol) throw ValidationError("SpectralField: not divergence-free");
      }
    enforce_structure(grid, coeffs);
    return SpectralField(grid, std::move(coeffs));
  }

  static SpectralField zero(const TorusGrid& grid) { return SpectralField(grid, std::vector<Complex>(2 * grid.modes())); }

  const TorusGrid& grid() const noexcept { return grid_; }
  std::span<const Complex> coeffs() const noexcept { return coeffs_; }
  const Complex& at(int c, int mx, int my) const { return coeffs_[grid_.flat(c, mx, my)]; }

  SpectralField& operator+=(const SpectralField& o) {
    check_same(o);
    for (size_t i = 0; i < coeffs_.size(); ++i) coeffs_[i] += o.coeffs_[i];
    return *this;
  }
  SpectralField& operator-=(const SpectralField& o) {
    check_same(o);
    for (size_t i = 0; i < coeffs_.size(); ++i) coeffs_[i] -= o.coeffs_[i];
    return *this;
  }
  SpectralField& operator*=(double s) {
    for (auto& z : coeffs_) z *= s;
    return *this;
  }

  friend SpectralField operator+(SpectralField a, const SpectralField& b) { return a += b; }
  friend SpectralField operator-(SpectralField a, const SpectralField& b) { return a -= b; }
  friend SpectralField operator*(double s, SpectralField a) { return a *= s; }
  friend SpectralField operator*(SpectralField a, double s) { return a *= s; }
  friend SpectralField operator-(SpectralField a) { return a *= -1.0; }

  void check_same(const SpectralField& o) const {
    if (!(grid_ == o.grid_)) throw DimensionError("SpectralField: grid mismatch");
  }

  /// Applies a per-mode real multiplier m(k2) to both components.
  template <class F>
  SpectralField scaled_by(F&& multiplier) const {
    SpectralField out = *this;
    const int n = grid_.size();
    for (int mx = 0; mx < n; ++mx)
      for (int my = 0; my < n; ++my) {
        const double m = (mx == 0 && my == 0) ? 0.0 : multiplier(grid_.k2(mx, my));
        out.coeffs_[grid_.flat(0, mx, my)] *= m;
        out.coeffs_[grid_.flat(1, mx, my)] *= m;
      }
    return out;
  }

  /// Sets the mean, Nyquist rows and anti-Hermitian part to exactly zero.
  static void enforce_structure(const TorusGrid& grid, std::vector<Complex>& coeffs) {
    const int n = grid.size();
    for (int c = 0; c < 2; ++c) {
      coeffs[grid.flat(c, 0, 0)] = 0.0;
      for (int m = 0; m < n; ++m) {
        coeffs[grid.flat(c, n / 2, m)] = 0.0;
        coeffs[grid.flat(c, m, n / 2)] = 0.0;
      }
      for (int mx = 0; mx < n; ++mx)
        for (int my = 0; my < n; ++my) {
          const size_t p = grid.flat(c, mx, my);
          const size_t q = grid.flat(c, grid.index(-grid.wave(mx)), grid.index(-grid.wave(my)));
          if (p < q) {
            const Complex avg = 0.5 * (coeffs[p] + std::conj(coeffs[q]));
            coeffs[p] = avg;
            coeffs[q] = std::conj(avg);
          } else if (p == q) {
            coeffs[p] = coeffs[p].real();
          }
        }
    }
  }

 private:
  SpectralField(const TorusGrid& grid, std::vector<Complex> coeffs) : grid_(grid), coeffs_(std::move(coeffs)) {}
  friend SpectralField detail::unchecked_field(const TorusGrid&, std::vector<Complex>);

  TorusGrid grid_;
  std::vector<Complex> coeffs_;
};

namespace detail {
/// Wraps coefficients produced by an invariant-preserving operation.
inline SpectralField unchecked_field(const TorusGrid& grid, std::vector<Complex> coeffs) {
  return SpectralField(grid, std::move(coeffs));
}
}  // namespace detail

// ---------------------------------------------------------------------------
// Inner products and norms

inline double inner_product(const SpectralField& f, const SpectralField& g) {
  f.check_same(g);
  const auto a = f.coeffs(), b = g.coeffs();
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i].real() * b[i].real() + a[i].imag() * b[i].imag();
  const double L = f.grid().length();
  return L * L * s;
}

namespace detail {
template <int Power>
double weighted_norm_sq(const SpectralField& f) {
  const auto& grid = f.grid();
  const int n = grid.size();
  double s = 0.0;
  for (int mx = 0; mx < n; ++mx)
    for (int my = 0; my < n; ++my) {
      double w = 1.0;
      if constexpr (Power > 0) {
        const double k2 = grid.k2(mx, my);
        w = Power == 1 ? k2 : k2 * k2;
      }
      s += w * (std::norm(f.at(0, mx, my)) + std::norm(f.at(1, mx, my)));
    }
  const double L = grid.length();
  return L * L * s;
}
}  // namespace detail

/// |f|, the L2 norm.
inline double norm_H(const SpectralField& f) { return std::sqrt(detail::weighted_norm_sq<0>(f)); }
/// ||f|| = |grad f|.
inline double norm_V(const SpectralField& f) { return std::sqrt(detail::weighted_norm_sq<1>(f)); }
/// |A f|.
inline double norm_DA(const SpectralField& f) { return std::sqrt(detail::weighted_norm_sq<2>(f)); }

inline SpectralField project_low(const SpectralField& f, const GalerkinCutoff& cut) {
  return f.scaled_by([&](double k2) { return cut.contains(k2) ? 1.0 : 0.0; });
}

inline SpectralField project_high(const SpectralField& f, const GalerkinCutoff& cut) {
  return f.scaled_by([&](double k2) { return cut.contains(k2) ? 0.0 : 1.0; });
}

/// True iff every nonzero coefficient lies inside the cutoff ball.
inline bool supported_in(const SpectralField& f, const GalerkinCutoff& cut) {
  const auto& grid = f.grid();
  const int n = grid.size();
  for (int c = 0; c < 2; ++c)
    for (int mx = 0; mx < n; ++mx)
      for (int my = 0; my < n; ++my)
        if (f.at(c, mx, my) != Complex{} && !cut.contains(grid.k2(mx, my))) return false;
  return true;
}

/// True iff every nonzero coefficient satisfies |j|_inf <= band.
inline bool supported_in_band(const SpectralField& f, int band) {
  const auto& grid = f.grid();
  const int n = grid.size();
  for (int c = 0; c < 2; ++c)
    for (int mx = 0; mx < n; ++mx)
      for (int my = 0; my < n; ++my)
        if (f.at(c, mx, my) != Complex{} &&
            (std::abs(grid.wave(mx)) > band || std::abs(grid.wave(my)) > band))
          return false;
  return true;
}

// ---------------------------------------------------------------------------
// Physical-space transforms

inline PhysicalField to_physical(const SpectralField& f) {
  const auto& grid = f.grid();
  const size_t m = grid.modes();
  std::vector<Complex> buf(m);
  const auto c = f.coeffs();
  // Both components are real in physical space, so one complex transform of
  // u_x + i u_y recovers them as real and imaginary parts.
  for (size_t i = 0; i < m; ++i) buf[i] = c[i] + Complex(0.0, 1.0) * c[m + i];
  detail::fft2d_inplace(buf, grid.size(), FFTW_BACKWARD);
  PhysicalField out(grid);
  for (size_t i = 0; i < m; ++i) {
    out.ux[i] = buf[i].real();
    out.uy[i] = buf[i].imag();
  }
  return out;
}

namespace detail {
/// Forward transform of two real arrays packed as a + i b; writes their
/// coefficients (normalized by n^-2) into out_a and out_b.
inline void forward_pair(std::vector<Complex>& packed, int n, Complex* out_a, Complex* out_b) {
  fft2d_inplace(packed, n, FFTW_FORWARD);
  const double scale = 1.0 / (static_cast<double>(n) * n);
  for (int mx = 0; mx < n; ++mx) {
    const int nx = (n - mx) % n;
    for (int my = 0; my < n; ++my) {
      const int ny = (n - my) % n;
      const Complex F = packed[static_cast<size_t>(mx) * n + my];
      const Complex Fm = std::conj(packed[static_cast<size_t>(nx) * n + ny]);
      out_a[static_cast<size_t>(mx) * n + my] = 0.5 * (F + Fm) * scale;
      out_b[static_cast<size_t>(mx) * n + my] = Complex(0.0, -0.5) * (F - Fm) * scale;
    }
  }
}
}  // namespace detail

/// Coefficients of arbitrary real samples with the mean removed; no Leray
/// projection (that is the caller's job).
inline RawCoefficients transform_physical(const PhysicalField& samples) {
  const auto& grid = samples.grid;
  const size_t m = grid.modes();
  if (samples.ux.size() != m || samples.uy.size() != m) throw DimensionError("transform_physical: sample count mismatch");
  std::vector<Complex> buf(m);
  for (size_t i = 0; i < m; ++i) {
    if (!std::isfinite(samples.ux[i]) || !std::isfinite(samples.uy[i]))
      throw ValidationError("transform_physical: non-real (non-finite) sample");
    buf[i] = Complex(samples.ux[i], samples.uy[i]);
  }
  RawCoefficients raw(grid);
  detail::forward_pair(buf, grid.size(), raw.coeffs.data(), raw.coeffs.data() + m);
  raw.coeffs[0] = 0.0;
  raw.coeffs[m] = 0.0;
  return raw;
}

/// Samples of a divergence-free field back to a SpectralField; the mean is
/// removed, and a ValidationError is raised when the samples are not
/// solenoidal (use transform_physical + leray_project for general data).
inline SpectralField from_physical(const PhysicalField& samples) {
  auto raw = transform_physical(samples);
  return SpectralField::from_coefficients(raw.grid, std::move(raw.coeffs));
}

/// Spectral interpolation between grids of equal length: modes common to
/// both grids are copied, the rest dropped or zero-padded.
inline SpectralField resample(const SpectralField& f, const TorusGrid& target) {
  const auto& src = f.grid();
  if (src.length() != target.length()) throw DimensionError("resample: domain lengths differ");
  if (src == target) return f;
  const int nt = target.size(), ns = src.size();
  std::vector<Complex> out(2 * target.modes());
  for (int c = 0; c < 2; ++c)
    for (int mx = 0; mx < nt; ++mx)
      for (int my = 0; my < nt; ++my) {
        if (target.is_nyquist(mx) || target.is_nyquist(my)) continue;
        const int jx = target.wave(mx), jy = target.wave(my);
        if (std::abs(jx) >= ns / 2 || std::abs(jy) >= ns / 2) continue;
        out[target.flat(c, mx, my)] = f.at(c, src.index(jx), src.index(jy));
      }
  return detail::unchecked_field(target, std::move(out));
}

/// Random divergence-free field supported in 0 < |k|^2 <= lambda_max (and
/// away from the Nyquist rows), built from a random stream function whose
/// mode amplitudes scale as |k|^-slope.
template <class Rng>
SpectralField random_field(const TorusGrid& grid, Rng& rng, double lambda_max, double slope = 0.0) {
  const int n = grid.size();
  const double ku = grid.k_unit();
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Complex> out(2 * grid.modes());
  for (int mx = 0; mx < n; ++mx)
    for (int my = 0; my < n; ++my) {
      if (grid.is_nyquist(mx) || grid.is_nyquist(my)) continue;
      const size_t p = grid.flat(0, mx, my);
      const size_t q = grid.flat(0, grid.index(-grid.wave(mx)), grid.index(-grid.wave(my)));
      if (p >= q) continue;
      const double k2 = grid.k2(mx, my);
      if (!(k2 > 0.0 && k2 <= lambda_max * (1.0 + 1e-12))) continue;
      const double re = normal(rng), im = normal(rng);
      const Complex psi = Complex(re, im) * std::pow(k2, -0.5 * slope - 0.5);
      const double kx = ku * grid.wave(mx), ky = ku * grid.wave(my);
      const Complex ux = Complex(0.0, ky) * psi, uy = Complex(0.0, -kx) * psi;
      out[p] = ux;
      out[q] = std::conj(ux);
      out[grid.modes() + p] = uy;
      out[grid.modes() + q] = std::conj(uy);
    }
  return detail::unchecked_field(grid, std::move(out));
}

// ---------------------------------------------------------------------------
// Binary snapshots: "NNSF", u32 version, f64 L, u32 n, f64 lambda_cut, then
// 2*n*n complex f64 (re, im) in storage order. Little-endian.

inline constexpr std::uint32_t kSnapshotVersion = 1;

namespace detail {
static_assert(std::endian::native == std::endian::little, "snapshot IO assumes a little-endian host");

template <class T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <class T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw ValidationError("snapshot: truncated file");
  return v;
}
}  // namespace detail

struct Snapshot {
  SpectralField field;
  double lambda_cut;
};

inline void write_snapshot(std::ostream& os, const SpectralField& f, double lambda_cut) {
  os.write("NNSF", 4);
  detail::put<std::uint32_t>(os, kSnapshotVersion);
  detail::put<double>(os, f.grid().length());
  detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(f.grid().size()));
  detail::put<double>(os, lambda_cut);
  for (const auto& z : f.coeffs()) {
    detail::put<double>(os, z.real());
    detail::put<double>(os, z.imag());
  }
}

inline Snapshot read_snapshot(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "NNSF", 4) != 0) throw ValidationError("snapshot: bad magic");
  const auto version = detail::get<std::uint32_t>(is);
  if (version != kSnapshotVersion) throw ValidationError("snapshot: unsupported version " + std::to_string(version));
  const double L = detail::get<double>(is);
  const auto n = detail::get<std::uint32_t>(is);
  const double cut = detail::get<double>(is);
  TorusGrid grid(L, static_cast<int>(n));
  std::vector<Complex> coeffs(2 * grid.modes());
  for (auto& z : coeffs) {
    const double re = detail::get<double>(is);
    const double im = detail::get<double>(is);
    z = Complex(re, im);
  }
  return {SpectralField::from_coefficients(grid, std::move(coeffs)), cut};
}

inline void write_snapshot_file(const std::filesystem::path& path, const SpectralField& f, double lambda_cut) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open " + path.string() + " for writing");
  write_snapshot(os, f, lambda_cut);
}

inline Snapshot read_snapshot_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path.string());
  return read_snapshot(is);
}

}  // namespace nsda
