#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <string>
#include <tuple>
#include <vector>

#include "esnp/fields.hpp"
#include "esnp/stokes.hpp"

namespace esnp {

/// Orthonormal (in L^2) divergence-free velocity modes ordered from the
/// lowest Stokes eigenvalue up. On the torus these are curls of single
/// harmonics, (k2, -k1)/|k| cos(k.x) and sin(k.x); on the square they
/// are discrete Stokes eigenvectors.
struct ModeBasis {
  std::vector<VectorField> modes;
  std::vector<double> eigenvalues;
  std::vector<std::string> labels;

  std::size_t size() const noexcept { return modes.size(); }

  /// Orthogonal projection onto the first n modes.
  VectorField project(const VectorField& v, std::size_t n) const {
    n = std::min(n, modes.size());
    VectorField out(v.grid());
    for (std::size_t m = 0; m < n; ++m) out.axpy(fields::inner(v, modes[m]), modes[m]);
    return out;
  }

  double projected_norm_sq(const VectorField& v, std::size_t n) const {
    n = std::min(n, modes.size());
    double s = 0;
    for (std::size_t m = 0; m < n; ++m) {
      double c = fields::inner(v, modes[m]);
      s += c * c;
    }
    return s;
  }
};

inline ModeBasis torus_mode_basis(const Grid& g, int n_modes) {
  require_torus(g, "torus_mode_basis");
  if (n_modes < 0) throw ArgumentError("mode count must be nonnegative");
  // half-plane wavevectors by (|k|^2, kx, ky); two real modes each
  std::vector<std::tuple<int, int, int>> ks;
  const int kmax = int(std::ceil(std::sqrt(double(n_modes)))) + 2;
  for (int kx = 0; kx <= kmax; ++kx)
    for (int ky = -kmax; ky <= kmax; ++ky) {
      if (kx == 0 && ky <= 0) continue;
      ks.emplace_back(kx * kx + ky * ky, kx, ky);
    }
  std::sort(ks.begin(), ks.end());
  ModeBasis basis;
  const double norm = 1.0 / (std::numbers::pi * std::numbers::sqrt2);
  for (const auto& [k2, kx, ky] : ks) {
    if (3 * std::max(kx, std::abs(ky)) > std::min(g.nx(), g.ny()))
      throw ArgumentError("requested noise modes are not resolved after dealiasing");
    for (int kind = 0; kind < 2 && int(basis.size()) < n_modes; ++kind) {
      const double kn = std::sqrt(double(k2));
      const double ex = ky / kn, ey = -kx / kn;
      auto v = VectorField::sample(g, [&](double x, double y) {
        double th = kx * x + ky * y;
        double s = norm * (kind == 0 ? std::cos(th) : std::sin(th));
        return std::pair{ex * s, ey * s};
      });
      basis.modes.push_back(std::move(v));
      basis.eigenvalues.push_back(double(k2));
      basis.labels.push_back(std::string(kind == 0 ? "cos" : "sin") + "(" + std::to_string(kx) +
                             "," + std::to_string(ky) + ")");
    }
    if (int(basis.size()) >= n_modes) break;
  }
  return basis;
}

inline ModeBasis square_mode_basis(const Grid& g, int n_modes,
                                   const std::filesystem::path& cache_dir = {}) {
  const auto& sm = stokes::stokes_modes(g, n_modes, cache_dir);
  ModeBasis basis;
  basis.modes = sm.modes;
  basis.eigenvalues = sm.eigenvalues;
  for (int k = 0; k < n_modes; ++k) basis.labels.push_back("stokes" + std::to_string(k));
  return basis;
}

inline ModeBasis mode_basis(const Grid& g, int n_modes,
                            const std::filesystem::path& cache_dir = {}) {
  if (n_modes == 0) return {};
  return g.is_torus() ? torus_mode_basis(g, n_modes) : square_mode_basis(g, n_modes, cache_dir);
}

}  // namespace esnp
