#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "esnp/fields.hpp"
#include "esnp/linalg.hpp"
#include "esnp/rng.hpp"

namespace esnp::poisson {

/// Mean-zero solution of -Laplace(Phi) = rho on the torus.
inline ScalarField solve_poisson_periodic(const ScalarField& rho) {
  require_torus(rho.grid(), "solve_poisson_periodic");
  const double m = fields::mean(rho);
  if (std::abs(m) >= 1e-10 * (1.0 + fields::l2_norm(rho)))
    throw PreconditionError("periodic Poisson needs a neutral charge density; mean(rho) = " +
                            std::to_string(m));
  auto c = forward_transform(rho);
  c.for_each([&](int col, int row, Complex& z) {
    double k2 = double(c.kx(col)) * c.kx(col) + double(c.ky(row)) * c.ky(row);
    z = (k2 == 0.0) ? Complex(0.0) : z / k2;
  });
  return inverse_transform(c);
}

namespace detail {

/// -Laplace_h on interior nodes of a square grid; boundary entries of
/// `in` are ignored and boundary entries of `out` are zero.
inline void apply_neg_laplacian(const Grid& g, std::span<const double> in, std::span<double> out) {
  const int n = g.nx();
  const double inv_h2 = 1.0 / (g.dx() * g.dx());
  std::fill(out.begin(), out.end(), 0.0);
  for (int j = 1; j < n - 1; ++j)
    for (int i = 1; i < n - 1; ++i) {
      auto at = [&](int a, int b) {
        return (a == 0 || b == 0 || a == n - 1 || b == n - 1) ? 0.0 : in[g.index(a, b)];
      };
      out[g.index(i, j)] =
          (4 * in[g.index(i, j)] - at(i + 1, j) - at(i - 1, j) - at(i, j + 1) - at(i, j - 1)) *
          inv_h2;
    }
}

}  // namespace detail

/// 5-point Dirichlet problem -Laplace_h Phi = rho, Phi = gamma on the
/// boundary, by unpreconditioned conjugate gradients.
inline ScalarField solve_poisson_dirichlet(const ScalarField& rho, double gamma) {
  const Grid& g = rho.grid();
  require_square(g, "solve_poisson_dirichlet");
  const int n = g.nx();
  const double h = g.dx();
  // Solve for w = Phi - gamma, which vanishes on the boundary.
  std::vector<double> b(g.size(), 0.0), w(g.size(), 0.0);
  for (int j = 1; j < n - 1; ++j)
    for (int i = 1; i < n - 1; ++i) b[g.index(i, j)] = rho(i, j);
  // discrete L2 residual ||r||_h = h ||r||_2
  const double tol = 1e-10 * fields::l2_norm(rho) / h;
  const int cap = 20 * n;
  auto res = linalg::conjugate_gradient(
      [&](std::span<const double> in, std::span<double> out) {
        detail::apply_neg_laplacian(g, in, out);
      },
      b, w, tol, cap);
  if (!res.converged)
    throw SolverError("Dirichlet Poisson CG did not converge in " + std::to_string(cap) +
                          " iterations, residual " + std::to_string(res.residual * h),
                      res.residual * h, res.iterations);
  ScalarField phi(g, std::move(w));
  phi += gamma;
  for (int k = 0; k < n; ++k) {
    phi(k, 0) = gamma;
    phi(k, n - 1) = gamma;
    phi(0, k) = gamma;
    phi(n - 1, k) = gamma;
  }
  return phi;
}

inline ScalarField solve_poisson(const ScalarField& rho, double gamma = 0.0) {
  return rho.grid().is_torus() ? solve_poisson_periodic(rho) : solve_poisson_dirichlet(rho, gamma);
}

inline VectorField grad_potential(const ScalarField& phi) { return fields::gradient(phi); }

/// sup over lambda > 0 of lambda * #{|f| > lambda}^(1/p) for a finitely
/// supported function under counting measure.
inline double weak_lebesgue_quasinorm(std::span<const double> values, double p) {
  if (!(p > 0)) throw ArgumentError("weak Lebesgue exponent must be positive");
  std::vector<double> mags;
  mags.reserve(values.size());
  for (double v : values)
    if (v != 0.0) mags.push_back(std::abs(v));
  std::sort(mags.begin(), mags.end(), std::greater<>());
  // Just below the j-th largest magnitude the super-level set holds at
  // least j points; the supremum is attained in that limit.
  double best = 0;
  for (std::size_t j = 0; j < mags.size(); ++j)
    best = std::max(best, mags[j] * std::pow(double(j + 1), 1.0 / p));
  return best;
}

/// Random mean-zero charge density: i.i.d. standard normal Fourier
/// coefficients on the modes 1 <= |k| <= band, conjugate-symmetric.
/// Draw order depends only on (seed, band), so a fixed band gives the
/// same function at every resolution that resolves it.
inline ScalarField random_band_limited(const Grid& g, int band, std::uint64_t seed) {
  require_torus(g, "random_band_limited");
  if (2 * band >= std::min(g.nx(), g.ny()))
    throw ArgumentError("band " + std::to_string(band) + " is not resolved by the grid");
  RngStream rng(esnp::detail::splitmix64(seed));
  SpectralCoefficients c(g);
  for (int kx = 0; kx <= band; ++kx)
    for (int ky = -band; ky <= band; ++ky) {
      if (kx == 0 && ky <= 0) continue;  // half plane, k != 0
      if (kx * kx + ky * ky > band * band) continue;
      Complex z(rng.normal(), rng.normal());
      int row = ky >= 0 ? ky : ky + g.ny();
      c.at(kx, row) = z;
      if (kx == 0) c.at(0, (g.ny() - ky) % g.ny()) = std::conj(z);
    }
  return inverse_transform(c);
}

struct EllipticSample {
  int resolution;
  int sample_index;
  double ratio;
};

struct EllipticReport {
  double max_ratio = 0;
  double mean_ratio = 0;
  std::uint64_t seed = 0;
  std::map<int, double> max_ratio_by_resolution;
  std::vector<EllipticSample> samples;
};

/// ||grad Phi||_{L^4} / ||rho||_{L^{4/3}} for the periodic potential of rho.
inline double elliptic_ratio(const ScalarField& rho) {
  auto phi = solve_poisson_periodic(rho);
  return fields::lp_norm(grad_potential(phi), 4.0) / fields::lp_norm(rho, 4.0 / 3.0);
}

/// Empirical L^{4/3} -> L^4 bound of rho -> grad Phi over a seeded
/// ensemble. `band` <= 0 selects the resolution-dependent band nx/4.
inline EllipticReport elliptic_ratio_test(int n_samples, const std::vector<int>& resolutions,
                                          std::uint64_t seed, int band = 0) {
  if (n_samples < 1) throw ArgumentError("elliptic_ratio_test needs n_samples >= 1");
  if (resolutions.empty()) throw ArgumentError("elliptic_ratio_test needs at least one resolution");
  EllipticReport rep;
  rep.seed = seed;
  double sum = 0;
  for (int n : resolutions) {
    Grid g(n, n, Domain::Torus2Pi);
    const int b = band > 0 ? band : n / 4;
    double mx = 0;
    for (int s = 0; s < n_samples; ++s) {
      auto rho = random_band_limited(g, b, RngStream::derive(seed, std::uint64_t(s)).key());
      double r = elliptic_ratio(rho);
      rep.samples.push_back({n, s, r});
      mx = std::max(mx, r);
      sum += r;
    }
    rep.max_ratio_by_resolution[n] = mx;
    rep.max_ratio = std::max(rep.max_ratio, mx);
  }
  rep.mean_ratio = sum / double(rep.samples.size());
  return rep;
}

/// ||(h_k / |k|)_k||_{L^{2,inf}(Z^2)} / ||h||_{L^1}: the weak-type
/// endpoint constant of the Fourier multiplier |k|^{-1} on one sample.
inline double multiplier_weak_endpoint_ratio(const ScalarField& h) {
  require_torus(h.grid(), "multiplier_weak_endpoint_ratio");
  auto c = forward_transform(h);
  std::vector<double> vals;
  for (int r = 0; r < c.rows(); ++r)
    for (int col = 0; col < c.cols(); ++col) {
      double k2 = double(c.kx(col)) * c.kx(col) + double(c.ky(r)) * c.ky(r);
      if (k2 == 0) continue;
      double v = std::abs(c.at(col, r)) / std::sqrt(k2);
      vals.push_back(v);
      if (c.multiplicity(col) == 2.0) vals.push_back(v);  // conjugate partner
    }
  return weak_lebesgue_quasinorm(vals, 2.0) / fields::lp_norm(h, 1.0);
}

}  // namespace esnp::poisson
