#pragma once

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include "esnp/fields.hpp"
#include "esnp/field_io.hpp"
#include "esnp/linalg.hpp"
#include "esnp/rng.hpp"

/// Velocity machinery on the unit square: the centered discrete
/// divergence D on interior nodes, the discrete Leray projection
/// I - D^T (D D^T)^+ D onto its kernel, the implicit viscous solve and
/// eigenvectors of the discrete Stokes operator. Velocities vanish on
/// the boundary lines.
namespace esnp::stokes {

namespace detail {

inline bool interior(const Grid& g, int i, int j) {
  return i > 0 && j > 0 && i < g.nx() - 1 && j < g.ny() - 1;
}

/// Velocity packed as [x-component | y-component] over all nodes.
inline void apply_div(const Grid& g, std::span<const double> v, std::span<double> out) {
  const int n = g.nx();
  const std::size_t N = g.size();
  const double s = 0.5 / g.dx();
  std::fill(out.begin(), out.end(), 0.0);
  auto vx = [&](int i, int j) { return interior(g, i, j) ? v[g.index(i, j)] : 0.0; };
  auto vy = [&](int i, int j) { return interior(g, i, j) ? v[N + g.index(i, j)] : 0.0; };
  for (int j = 1; j < n - 1; ++j)
    for (int i = 1; i < n - 1; ++i)
      out[g.index(i, j)] = s * (vx(i + 1, j) - vx(i - 1, j) + vy(i, j + 1) - vy(i, j - 1));
}

/// Adjoint of apply_div (so -apply_div_adjoint is the discrete gradient).
inline void apply_div_adjoint(const Grid& g, std::span<const double> q, std::span<double> out) {
  const int n = g.nx();
  const std::size_t N = g.size();
  const double s = 0.5 / g.dx();
  std::fill(out.begin(), out.end(), 0.0);
  auto qa = [&](int i, int j) { return interior(g, i, j) ? q[g.index(i, j)] : 0.0; };
  for (int j = 1; j < n - 1; ++j)
    for (int i = 1; i < n - 1; ++i) {
      out[g.index(i, j)] = s * (qa(i - 1, j) - qa(i + 1, j));
      out[N + g.index(i, j)] = s * (qa(i, j - 1) - qa(i, j + 1));
    }
}

inline std::vector<double> pack(const VectorField& v) {
  std::vector<double> out(2 * v.grid().size());
  std::copy(v.x.raw().begin(), v.x.raw().end(), out.begin());
  std::copy(v.y.raw().begin(), v.y.raw().end(), out.begin() + std::ptrdiff_t(v.grid().size()));
  return out;
}

inline VectorField unpack(const Grid& g, std::span<const double> p) {
  VectorField v(g);
  const std::size_t N = g.size();
  for (std::size_t k = 0; k < N; ++k) {
    v.x[k] = p[k];
    v.y[k] = p[N + k];
  }
  return v;
}

inline void zero_boundary(const Grid& g, std::span<double> p) {
  const std::size_t N = g.size();
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i)
      if (!interior(g, i, j)) {
        p[g.index(i, j)] = 0;
        if (p.size() == 2 * N) p[N + g.index(i, j)] = 0;
      }
}

inline void project_packed(const Grid& g, std::vector<double>& v) {
  const std::size_t N = g.size();
  zero_boundary(g, v);
  std::vector<double> b(N), q(N, 0.0), tmp(2 * N);
  apply_div(g, v, b);
  double bn = std::sqrt(linalg::dot(b, b));
  if (bn == 0.0) return;
  auto res = linalg::conjugate_gradient(
      [&](std::span<const double> in, std::span<double> out) {
        apply_div_adjoint(g, in, tmp);
        apply_div(g, tmp, out);
      },
      b, q, 1e-14 * bn, 40 * g.nx());
  if (!res.converged && res.residual > 1e-10 * bn)
    throw SolverError("discrete Leray projection did not converge", res.residual, res.iterations);
  apply_div_adjoint(g, q, tmp);
  for (std::size_t k = 0; k < 2 * N; ++k) v[k] -= tmp[k];
}

}  // namespace detail

/// Centered divergence on interior nodes; zero on the boundary lines.
inline ScalarField discrete_divergence(const VectorField& v) {
  const Grid& g = v.grid();
  require_square(g, "discrete_divergence");
  auto p = detail::pack(v);
  ScalarField out(g);
  detail::apply_div(g, p, out.raw());
  return out;
}

/// Discrete Leray projection; the result vanishes on the boundary.
inline VectorField project(const VectorField& v) {
  const Grid& g = v.grid();
  require_square(g, "stokes::project");
  auto p = detail::pack(v);
  detail::project_packed(g, p);
  return detail::unpack(g, p);
}

/// Solves (1 - alpha Laplace_h) w = rhs on interior nodes with w = 0 on
/// the boundary. `guess` seeds the iteration.
inline ScalarField helmholtz_solve(const ScalarField& rhs, double alpha, const ScalarField* guess = nullptr) {
  const Grid& g = rhs.grid();
  const int n = g.nx();
  const double a = alpha / (g.dx() * g.dx());
  std::vector<double> b(g.size(), 0.0);
  std::vector<double> w = guess ? guess->raw() : std::vector<double>(g.size(), 0.0);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      if (detail::interior(g, i, j))
        b[g.index(i, j)] = rhs(i, j);
      else
        w[g.index(i, j)] = 0;
    }
  double bn = std::sqrt(linalg::dot(b, b));
  auto res = linalg::conjugate_gradient(
      [&](std::span<const double> in, std::span<double> out) {
        std::fill(out.begin(), out.end(), 0.0);
        auto at = [&](int p, int q) { return detail::interior(g, p, q) ? in[g.index(p, q)] : 0.0; };
        for (int j = 1; j < n - 1; ++j)
          for (int i = 1; i < n - 1; ++i)
            out[g.index(i, j)] = (1 + 4 * a) * in[g.index(i, j)] -
                                 a * (at(i + 1, j) + at(i - 1, j) + at(i, j + 1) + at(i, j - 1));
      },
      b, w, 1e-15 * std::max(bn, 1e-300), 20 * n);
  if (!res.converged && res.residual > 1e-11 * bn)
    throw SolverError("implicit viscous solve did not converge", res.residual, res.iterations);
  return ScalarField(g, std::move(w));
}

/// Lowest eigenpairs of the discrete Stokes operator P (-Laplace_h) P,
/// eigenvectors orthonormal in the trapezoid L^2 inner product.
struct StokesModes {
  std::vector<double> eigenvalues;
  std::vector<VectorField> modes;
};

namespace detail {

inline StokesModes compute_stokes_modes(const Grid& g, int n_modes) {
  const std::size_t N = g.size();
  const std::size_t dim = 2 * N;
  const double h2 = g.dx() * g.dx();
  auto apply_stokes = [&](const std::vector<double>& v, std::vector<double>& out) {
    // v is already projected and zero on the boundary
    ScalarField vx(g), vy(g);
    for (std::size_t k = 0; k < N; ++k) {
      vx[k] = v[k];
      vy[k] = v[N + k];
    }
    auto lx = fields::fd::laplacian(vx);
    auto ly = fields::fd::laplacian(vy);
    out.assign(dim, 0.0);
    for (std::size_t k = 0; k < N; ++k) {
      out[k] = -lx[k];
      out[N + k] = -ly[k];
    }
    project_packed(g, out);
  };

  RngStream rng(0x5eed5eedULL + std::uint64_t(g.nx()));
  std::vector<double> q(dim);
  for (auto& x : q) x = rng.normal();
  project_packed(g, q);

  std::vector<std::vector<double>> basis;
  std::vector<double> alpha, beta;
  const int max_steps = std::min<int>(int(dim), std::max(40 * n_modes, 400));
  auto normalize = [](std::vector<double>& v) {
    double nrm = std::sqrt(linalg::dot(v, v));
    for (auto& x : v) x /= nrm;
    return nrm;
  };
  normalize(q);
  std::vector<double> w;
  StokesModes result;
  for (int step = 0; step < max_steps; ++step) {
    basis.push_back(q);
    apply_stokes(q, w);
    double a = linalg::dot(w, q);
    alpha.push_back(a);
    // full reorthogonalization, twice
    for (int pass = 0; pass < 2; ++pass)
      for (const auto& b : basis) {
        double c = linalg::dot(w, b);
        for (std::size_t k = 0; k < dim; ++k) w[k] -= c * b[k];
      }
    project_packed(g, w);
    double bnrm = std::sqrt(linalg::dot(w, w));
    const int m = int(alpha.size());
    bool check = (m >= 2 * n_modes && m % 20 == 0) || m == max_steps || bnrm < 1e-12;
    if (check) {
      Eigen::VectorXd diag = Eigen::Map<Eigen::VectorXd>(alpha.data(), m);
      Eigen::VectorXd sub(std::max(m - 1, 0));
      for (int k = 0; k + 1 < m; ++k) sub[k] = beta[std::size_t(k)];
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
      es.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
      // Ritz values near zero are gradient modes leaking through the
      // inexact projection; the Stokes spectrum on the square starts near 52.
      std::vector<int> take;
      for (int k = 0; k < m && int(take.size()) < n_modes; ++k)
        if (es.eigenvalues()[k] > 1.0) take.push_back(k);
      bool converged = int(take.size()) == n_modes;
      for (int k : take)
        if (std::abs(bnrm * es.eigenvectors()(m - 1, k)) > 1e-9 * es.eigenvalues()[k])
          converged = false;
      if (converged || m == max_steps || bnrm < 1e-12) {
        if (int(take.size()) < n_modes)
          throw SolverError("Stokes eigensolve found too few modes", bnrm, m);
        for (int k : take) {
          std::vector<double> y(dim, 0.0);
          for (int s = 0; s < m; ++s) {
            double coef = es.eigenvectors()(s, k);
            const auto& b = basis[std::size_t(s)];
            for (std::size_t p = 0; p < dim; ++p) y[p] += coef * b[p];
          }
          project_packed(g, y);
          // L2 normalization with interior weight h^2
          double nrm = std::sqrt(linalg::dot(y, y) * h2);
          for (auto& x : y) x /= nrm;
          result.eigenvalues.push_back(es.eigenvalues()[k]);
          result.modes.push_back(unpack(g, y));
        }
        return result;
      }
    }
    beta.push_back(bnrm);
    q = w;
    for (auto& x : q) x /= bnrm;
  }
  throw SolverError("Stokes eigensolve exhausted its step budget", 0, max_steps);
}

inline std::filesystem::path default_cache_dir() {
  if (const char* env = std::getenv("ESNP_CACHE_DIR")) return env;
  return std::filesystem::temp_directory_path() / "esnp_cache";
}

}  // namespace detail

/// Lowest n Stokes modes, cached per process and on disk keyed by grid.
inline const StokesModes& stokes_modes(const Grid& g, int n_modes,
                                       std::filesystem::path cache_dir = {}) {
  require_square(g, "stokes_modes");
  static std::mutex mutex;
  static std::map<std::pair<int, int>, StokesModes> memo;
  std::lock_guard lock(mutex);
  auto key = std::pair{g.nx(), n_modes};
  if (auto it = memo.find(key); it != memo.end()) return it->second;

  if (cache_dir.empty()) cache_dir = detail::default_cache_dir();
  auto stem = cache_dir / ("stokes_" + std::to_string(g.nx()) + "_" + std::to_string(n_modes));
  StokesModes modes;
  std::error_code ec;
  if (std::filesystem::exists(stem.string() + ".esnp", ec) &&
      std::filesystem::exists(stem.string() + ".eig", ec)) {
    try {
      auto fields = io::read_fields(stem.string() + ".esnp");
      std::ifstream eig(stem.string() + ".eig");
      double lam;
      while (eig >> lam) modes.eigenvalues.push_back(lam);
      if (fields.size() == 2 * std::size_t(n_modes) && modes.eigenvalues.size() == std::size_t(n_modes) &&
          fields[0].grid() == g) {
        for (int k = 0; k < n_modes; ++k)
          modes.modes.emplace_back(fields[2 * std::size_t(k)], fields[2 * std::size_t(k) + 1]);
        return memo.emplace(key, std::move(modes)).first->second;
      }
    } catch (const Error&) {
    }
    modes = {};
  }
  modes = detail::compute_stokes_modes(g, n_modes);
  std::filesystem::create_directories(cache_dir, ec);
  if (!ec) {
    std::vector<ScalarField> flat;
    for (const auto& m : modes.modes) {
      flat.push_back(m.x);
      flat.push_back(m.y);
    }
    try {
      io::write_fields(stem.string() + ".esnp", flat);
      std::ofstream eig(stem.string() + ".eig");
      eig.precision(17);
      for (double lam : modes.eigenvalues) eig << lam << '\n';
    } catch (const Error&) {
      // an unwritable cache only costs recomputation
    }
  }
  return memo.emplace(key, std::move(modes)).first->second;
}

}  // namespace esnp::stokes
