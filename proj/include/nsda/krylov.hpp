#pragma once

// Restarted GMRES with right preconditioning, generic over any vector type
// closed under +, - and scalar multiplication with a user-supplied inner
// product.

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "nsda/errors.hpp"
#include "nsda/spectral_field.hpp"

namespace nsda {

struct GmresOptions {
  double tol = 1e-10;  // on ||b - A x|| / ||b||
  int max_iter = 500;  // total Arnoldi steps across restarts
  int restart = 50;
};

template <class Vec>
struct GmresResult {
  Vec x;
  int iterations = 0;
  double relative_residual = 0.0;
  std::vector<double> residual_history;  // relative, one entry per Arnoldi step
};

template <class Vec, class Op, class Prec, class Dot>
GmresResult<Vec> gmres(Op&& apply, const Vec& rhs, Vec x, Prec&& precondition, Dot&& dot, const GmresOptions& opt) {
  auto norm = [&](const Vec& v) { return std::sqrt(std::max(0.0, dot(v, v))); };
  const double bnorm = norm(rhs);
  GmresResult<Vec> result{x, 0, 0.0, {}};
  if (bnorm == 0.0) {
    result.x = 0.0 * rhs;
    return result;
  }
  const int m = opt.restart;
  int total = 0;
  while (true) {
    Vec r = rhs - apply(x);
    double rnorm = norm(r);
    result.relative_residual = rnorm / bnorm;
    if (result.relative_residual <= opt.tol) {
      result.x = std::move(x);
      result.iterations = total;
      return result;
    }
    if (total >= opt.max_iter) break;

    std::vector<Vec> basis, zs;
    basis.reserve(m + 1);
    zs.reserve(m);
    basis.push_back((1.0 / rnorm) * r);
    std::vector<std::vector<double>> hess(m + 1, std::vector<double>(m, 0.0));
    std::vector<double> cs(m), sn(m), g(m + 1, 0.0);
    g[0] = rnorm;
    int j = 0;
    while (j < m && total < opt.max_iter) {
      zs.push_back(precondition(basis[j]));
      Vec w = apply(zs[j]);
      for (int i = 0; i <= j; ++i) {
        hess[i][j] = dot(w, basis[i]);
        w -= hess[i][j] * basis[i];
      }
      const double hnext = norm(w);
      hess[j + 1][j] = hnext;
      for (int i = 0; i < j; ++i) {
        const double t = cs[i] * hess[i][j] + sn[i] * hess[i + 1][j];
        hess[i + 1][j] = -sn[i] * hess[i][j] + cs[i] * hess[i + 1][j];
        hess[i][j] = t;
      }
      const double denom = std::hypot(hess[j][j], hess[j + 1][j]);
      cs[j] = hess[j][j] / denom;
      sn[j] = hess[j + 1][j] / denom;
      hess[j][j] = denom;
      hess[j + 1][j] = 0.0;
      g[j + 1] = -sn[j] * g[j];
      g[j] = cs[j] * g[j];
      ++j;
      ++total;
      const double estimate = std::abs(g[j]) / bnorm;
      result.residual_history.push_back(estimate);
      // Stop early on the estimate; the true residual is re-checked on restart.
      if (estimate <= 0.5 * opt.tol || hnext <= 1e-300) break;
      basis.push_back((1.0 / hnext) * w);
    }
    // Back substitution on the j x j triangular system.
    std::vector<double> y(j, 0.0);
    for (int i = j - 1; i >= 0; --i) {
      double s = g[i];
      for (int k = i + 1; k < j; ++k) s -= hess[i][k] * y[k];
      y[i] = s / hess[i][i];
    }
    for (int i = 0; i < j; ++i) x += y[i] * zs[i];
  }
  throw SolverError("gmres: no convergence to relative residual " + std::to_string(opt.tol) + " within " +
                        std::to_string(opt.max_iter) + " iterations",
                    result.residual_history);
}

using FieldMap = std::function<SpectralField(const SpectralField&)>;

/// Solves L x = rhs for a positive-real (possibly nonsymmetric) operator on
/// SpectralFields, in the H inner product. Throws SolverError on failure.
inline GmresResult<SpectralField> solve_coercive_linear(const FieldMap& apply_operator, const SpectralField& rhs, double tol,
                                                        int max_iter, const FieldMap& preconditioner = {},
                                                        std::optional<SpectralField> initial_guess = std::nullopt,
                                                        int restart = 50) {
  GmresOptions opt{tol, max_iter, restart};
  SpectralField x0 = initial_guess ? *initial_guess : SpectralField::zero(rhs.grid());
  auto identity = [](const SpectralField& v) { return v; };
  auto dot = [](const SpectralField& a, const SpectralField& b) { return inner_product(a, b); };
  if (preconditioner) return gmres(apply_operator, rhs, std::move(x0), preconditioner, dot, opt);
  return gmres(apply_operator, rhs, std::move(x0), identity, dot, opt);
}

}  // namespace nsda
