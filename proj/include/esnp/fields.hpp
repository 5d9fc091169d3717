#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "esnp/grid.hpp"
#include "esnp/spectral.hpp"

/// Field algebra on both domains. Torus operators are pseudo-spectral
/// and exact per Fourier mode; square operators are second-order finite
/// differences with one-sided closure on the boundary lines.
namespace esnp::fields {

// ---------------------------------------------------------------- quadrature

inline double integral(const ScalarField& f) {
  const Grid& g = f.grid();
  if (g.is_torus()) {
    double s = 0;
    for (double v : f.values()) s += v;
    return s * g.dx() * g.dy();
  }
  double s = 0;
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i) s += g.weight(i, j) * f(i, j);
  return s;
}

inline double mean(const ScalarField& f) { return integral(f) / f.grid().area(); }

inline double inner(const ScalarField& a, const ScalarField& b) {
  require_same_grid(a.grid(), b.grid());
  const Grid& g = a.grid();
  double s = 0;
  if (g.is_torus()) {
    for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
    return s * g.dx() * g.dy();
  }
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i) s += g.weight(i, j) * a(i, j) * b(i, j);
  return s;
}

inline double inner(const VectorField& a, const VectorField& b) {
  return inner(a.x, b.x) + inner(a.y, b.y);
}

/// L^p norm by the grid quadrature; p = infinity gives the grid maximum.
inline double lp_norm(const ScalarField& f, double p) {
  if (!(p >= 1.0)) throw ArgumentError("lp_norm requires p >= 1, got " + std::to_string(p));
  const Grid& g = f.grid();
  if (std::isinf(p)) {
    double m = 0;
    for (double v : f.values()) m = std::max(m, std::abs(v));
    return m;
  }
  if (p == 2.0) return std::sqrt(inner(f, f));
  double s = 0;
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i) s += g.weight(i, j) * std::pow(std::abs(f(i, j)), p);
  return std::pow(s, 1.0 / p);
}

/// L^p norm of the pointwise Euclidean magnitude.
inline double lp_norm(const VectorField& v, double p) {
  ScalarField mag(v.grid());
  for (std::size_t k = 0; k < mag.size(); ++k) mag[k] = std::hypot(v.x[k], v.y[k]);
  return lp_norm(mag, p);
}

inline double l2_norm(const ScalarField& f) { return lp_norm(f, 2.0); }
inline double l2_norm(const VectorField& v) { return std::sqrt(inner(v, v)); }

// ------------------------------------------------------------ spectral ops

/// Zero every mode with |kx| > nx/3 or |ky| > ny/3.
inline SpectralCoefficients dealias(SpectralCoefficients c) {
  const int cx = c.grid().nx() / 3, cy = c.grid().ny() / 3;
  c.for_each([&](int col, int row, Complex& z) {
    if (c.kx(col) > cx || std::abs(c.ky(row)) > cy) z = 0.0;
  });
  return c;
}

inline ScalarField dealias(const ScalarField& f) {
  return inverse_transform(dealias(forward_transform(f)));
}

inline VectorField dealias(const VectorField& v) { return {dealias(v.x), dealias(v.y)}; }

/// Pointwise product with the 2/3-rule truncation applied to the result.
inline ScalarField dealiased_product(const ScalarField& a, const ScalarField& b) {
  return dealias(a * b);
}

namespace detail {
inline double rel_mean_tolerance(const ScalarField& f) {
  return 1e-12 * std::max(l2_norm(f), std::numeric_limits<double>::min());
}
}  // namespace detail

/// Fourier multiplier |k|^s. The zero mode maps to zero for s != 0.
inline ScalarField fractional_laplacian(const ScalarField& f, double s) {
  require_torus(f.grid(), "fractional_laplacian");
  if (s < 0) {
    double m = mean(f);
    if (std::abs(m) >= 1e-12 * l2_norm(f) && std::abs(m) > 0)
      throw PreconditionError("fractional_laplacian with s < 0 needs mean-zero input, mean = " +
                              std::to_string(m));
  }
  auto c = forward_transform(f);
  c.for_each([&](int col, int row, Complex& z) {
    double k2 = double(c.kx(col)) * c.kx(col) + double(c.ky(row)) * c.ky(row);
    if (k2 == 0.0)
      z = (s == 0.0) ? z : Complex(0.0);
    else
      z *= std::pow(k2, 0.5 * s);
  });
  return inverse_transform(c);
}

/// Hodge projection onto discretely divergence-free fields,
/// (I - k k^T / |k|^2) per mode with the derivative wavenumbers.
inline VectorField leray_project(const VectorField& v) {
  require_torus(v.grid(), "leray_project");
  auto cx = forward_transform(v.x);
  auto cy = forward_transform(v.y);
  for (int r = 0; r < cx.rows(); ++r)
    for (int c = 0; c < cx.cols(); ++c) {
      double kx = cx.kx_deriv(c), ky = cx.ky_deriv(r);
      double k2 = kx * kx + ky * ky;
      if (k2 == 0.0) continue;
      Complex dot = (kx * cx.at(c, r) + ky * cy.at(c, r)) / k2;
      cx.at(c, r) -= kx * dot;
      cy.at(c, r) -= ky * dot;
    }
  return {inverse_transform(cx), inverse_transform(cy)};
}

// ------------------------------------------------------ finite differences

namespace fd {

/// d/dx with centered interior stencil and second-order one-sided ends.
inline ScalarField ddx(const ScalarField& f) {
  const Grid& g = f.grid();
  ScalarField out(g);
  const int n = g.nx();
  const double h = g.dx();
  for (int j = 0; j < g.ny(); ++j) {
    out(0, j) = (-3 * f(0, j) + 4 * f(1, j) - f(2, j)) / (2 * h);
    for (int i = 1; i < n - 1; ++i) out(i, j) = (f(i + 1, j) - f(i - 1, j)) / (2 * h);
    out(n - 1, j) = (3 * f(n - 1, j) - 4 * f(n - 2, j) + f(n - 3, j)) / (2 * h);
  }
  return out;
}

inline ScalarField ddy(const ScalarField& f) {
  const Grid& g = f.grid();
  ScalarField out(g);
  const int n = g.ny();
  const double h = g.dy();
  for (int i = 0; i < g.nx(); ++i) {
    out(i, 0) = (-3 * f(i, 0) + 4 * f(i, 1) - f(i, 2)) / (2 * h);
    for (int j = 1; j < n - 1; ++j) out(i, j) = (f(i, j + 1) - f(i, j - 1)) / (2 * h);
    out(i, n - 1) = (3 * f(i, n - 1) - 4 * f(i, n - 2) + f(i, n - 3)) / (2 * h);
  }
  return out;
}

/// 5-point Laplacian on interior nodes; boundary entries are zero.
inline ScalarField laplacian(const ScalarField& f) {
  const Grid& g = f.grid();
  ScalarField out(g);
  const double h2 = g.dx() * g.dx();
  for (int j = 1; j < g.ny() - 1; ++j)
    for (int i = 1; i < g.nx() - 1; ++i)
      out(i, j) = (f(i + 1, j) + f(i - 1, j) + f(i, j + 1) + f(i, j - 1) - 4 * f(i, j)) / h2;
  return out;
}

}  // namespace fd

// --------------------------------------------------- differential operators

inline VectorField gradient(const ScalarField& f) {
  const Grid& g = f.grid();
  if (!g.is_torus()) return {fd::ddx(f), fd::ddy(f)};
  auto c = forward_transform(f);
  SpectralCoefficients gx(g), gy(g);
  for (int r = 0; r < c.rows(); ++r)
    for (int col = 0; col < c.cols(); ++col) {
      const Complex ik(0.0, 1.0);
      gx.at(col, r) = ik * c.kx_deriv(col) * c.at(col, r);
      gy.at(col, r) = ik * c.ky_deriv(r) * c.at(col, r);
    }
  return {inverse_transform(gx), inverse_transform(gy)};
}

inline ScalarField divergence(const VectorField& v) {
  const Grid& g = v.grid();
  if (!g.is_torus()) return fd::ddx(v.x) + fd::ddy(v.y);
  auto cx = forward_transform(v.x);
  auto cy = forward_transform(v.y);
  SpectralCoefficients d(g);
  for (int r = 0; r < d.rows(); ++r)
    for (int col = 0; col < d.cols(); ++col) {
      const Complex ik(0.0, 1.0);
      d.at(col, r) = ik * (cx.kx_deriv(col) * cx.at(col, r) + cx.ky_deriv(r) * cy.at(col, r));
    }
  return inverse_transform(d);
}

inline ScalarField laplacian(const ScalarField& f) {
  const Grid& g = f.grid();
  if (!g.is_torus()) return fd::laplacian(f);
  auto c = forward_transform(f);
  c.for_each([&](int col, int row, Complex& z) {
    z *= -(double(c.kx(col)) * c.kx(col) + double(c.ky(row)) * c.ky(row));
  });
  return inverse_transform(c);
}

/// u . grad f. On the torus the product is formed on the grid and the
/// result is truncated by the 2/3 rule.
inline ScalarField advect(const VectorField& u, const ScalarField& f) {
  require_same_grid(u.grid(), f.grid());
  auto grad = gradient(f);
  ScalarField out = u.x * grad.x;
  out += u.y * grad.y;
  if (f.grid().is_torus()) return dealias(out);
  return out;
}

/// ||Lambda^k f||_{L^2} on the torus. On the square, k = 0, 1, 2 use
/// f, grad f and the interior 5-point Laplacian.
inline double h_seminorm(const ScalarField& f, int k) {
  if (k < 0) throw ArgumentError("h_seminorm order must be >= 0");
  const Grid& g = f.grid();
  if (g.is_torus()) {
    if (k == 0) return l2_norm(f);
    auto c = forward_transform(f);
    double s = 0;
    for (int r = 0; r < c.rows(); ++r)
      for (int col = 0; col < c.cols(); ++col) {
        double k2 = double(c.kx(col)) * c.kx(col) + double(c.ky(r)) * c.ky(r);
        s += c.multiplicity(col) * std::pow(k2, k) * std::norm(c.at(col, r));
      }
    return std::sqrt(s * g.area());
  }
  switch (k) {
    case 0: return l2_norm(f);
    case 1: return l2_norm(gradient(f));
    case 2: return l2_norm(fd::laplacian(f));
    default: throw ArgumentError("square h_seminorm supports k <= 2");
  }
}

inline double h_seminorm(const VectorField& v, int k) {
  return std::hypot(h_seminorm(v.x, k), h_seminorm(v.y, k));
}

inline double h1_norm(const VectorField& v) {
  return std::hypot(l2_norm(v), h_seminorm(v, 1));
}

/// sum_k |fhat_k|^2 * area, which equals ||f||^2 by Parseval.
inline double spectral_energy(const SpectralCoefficients& c) {
  double s = 0;
  for (int r = 0; r < c.rows(); ++r)
    for (int col = 0; col < c.cols(); ++col) s += c.multiplicity(col) * std::norm(c.at(col, r));
  return s * c.grid().area();
}

}  // namespace esnp::fields
