#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "esnp/fields.hpp"
#include "esnp/linalg.hpp"
#include "esnp/modes.hpp"
#include "esnp/poisson.hpp"
#include "esnp/rng.hpp"
#include "esnp/stokes.hpp"

namespace esnp {

enum class BoundaryKind { Periodic, Dirichlet, Blocking };

inline std::string to_string(BoundaryKind b) {
  switch (b) {
    case BoundaryKind::Periodic: return "periodic";
    case BoundaryKind::Dirichlet: return "dirichlet";
    case BoundaryKind::Blocking: return "blocking";
  }
  return "?";
}

struct SpeciesParams {
  double D = 1.0;  // diffusivity
  double z = 0.0;  // valence
  BoundaryKind bc = BoundaryKind::Periodic;
  double gamma = 0.0;  // Dirichlet datum
};

inline void validate_species(const std::vector<SpeciesParams>& params, Domain domain) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    const std::string who = "species " + std::to_string(i + 1);
    if (!(p.D > 0)) throw ArgumentError(who + ": diffusivity must be positive");
    if (domain == Domain::Torus2Pi && p.bc != BoundaryKind::Periodic)
      throw ArgumentError(who + ": torus species must use periodic boundary conditions");
    if (domain == Domain::UnitSquareDirichlet && p.bc == BoundaryKind::Periodic)
      throw ArgumentError(who + ": square species must be dirichlet or blocking");
    if (p.bc == BoundaryKind::Dirichlet && p.gamma < 0)
      throw ArgumentError(who + ": Dirichlet datum must be nonnegative");
  }
}

/// Truncated additive noise: sum_k amplitude_k g_k dW_k.
struct NoiseSpec {
  std::shared_ptr<const ModeBasis> basis;
  std::vector<double> amplitudes;

  std::size_t size() const noexcept { return amplitudes.size(); }
  const VectorField& mode(std::size_t k) const { return basis->modes[k]; }

  /// ||g||^2_{H^s} = sum_k amplitude_k^2 ||g_k||^2_{H^s}, s = 0 or 1.
  double norm_sq(int s = 0) const {
    double total = 0;
    for (std::size_t k = 0; k < size(); ++k) {
      double nrm = s == 0 ? fields::l2_norm(mode(k)) : fields::h_seminorm(mode(k), 1);
      total += amplitudes[k] * amplitudes[k] * nrm * nrm;
    }
    return total;
  }

  /// ||(-Laplace)^{-1/2} g||^2, the quantity capping the exponential moment.
  double inverse_sqrt_laplacian_norm_sq() const {
    double total = 0;
    for (std::size_t k = 0; k < size(); ++k)
      total += amplitudes[k] * amplitudes[k] * fields::inner(mode(k), mode(k)) /
               basis->eigenvalues[k];
    return total;
  }
};

inline NoiseSpec make_noise(const Grid& g, std::vector<double> amplitudes,
                            const std::filesystem::path& cache_dir = {}) {
  NoiseSpec n;
  n.basis = std::make_shared<const ModeBasis>(mode_basis(g, int(amplitudes.size()), cache_dir));
  n.amplitudes = std::move(amplitudes);
  return n;
}

struct ModelOptions {
  bool nonlinear = true;        // off: linear Stokes + heat equations (OU oracle runs)
  bool clamp_negative = false;  // opt-in, recorded in output metadata
  int max_halvings = 6;
};

struct SystemState {
  VectorField u;
  std::vector<ScalarField> c;
  ScalarField phi;  // potential consistent with c
  double t = 0;
  std::vector<SpeciesParams> params;
  double potential_gamma = 0;  // boundary potential on the square
  VectorField f;               // steady body force
  NoiseSpec noise;
  RngStream rng;
  ModelOptions options;
  long steps = 0;
  double min_concentration = 0;
  bool clamped = false;

  explicit SystemState(const Grid& g) : u(g), phi(g), f(g) {}
  const Grid& grid() const noexcept { return u.grid(); }
  std::size_t species() const noexcept { return c.size(); }
};

// ------------------------------------------------------------- diagnostics

inline ScalarField charge_density(const std::vector<ScalarField>& c,
                                  const std::vector<SpeciesParams>& params) {
  if (c.empty()) throw ArgumentError("charge density needs at least one species");
  ScalarField rho(c.front().grid());
  for (std::size_t i = 0; i < c.size(); ++i) rho.axpy(params[i].z, c[i]);
  return rho;
}

inline ScalarField charge_density(const SystemState& s) { return charge_density(s.c, s.params); }

inline ScalarField potential_of(const std::vector<ScalarField>& c,
                                const std::vector<SpeciesParams>& params, double gamma,
                                const Grid& g) {
  if (c.empty()) return ScalarField(g, g.is_torus() ? 0.0 : gamma);
  return poisson::solve_poisson(charge_density(c, params), gamma);
}

inline void refresh_potential(SystemState& s) {
  s.phi = potential_of(s.c, s.params, s.potential_gamma, s.grid());
}

namespace detail {

inline double min_over_species(const std::vector<ScalarField>& c) {
  double m = std::numeric_limits<double>::infinity();
  for (const auto& ci : c)
    for (double v : ci.values()) m = std::min(m, v);
  return c.empty() ? 0.0 : m;
}

// ---------------------------------------------------------------- torus

inline double k2_of(const SpectralCoefficients& c, int col, int row) {
  return double(c.kx(col)) * c.kx(col) + double(c.ky(row)) * c.ky(row);
}

/// Spectral divergence of (a, b), accumulated into `out` with weight w.
inline void add_spectral_divergence(SpectralCoefficients& out, const ScalarField& a,
                                    const ScalarField& b, double w) {
  auto ca = forward_transform(a);
  auto cb = forward_transform(b);
  const Complex ik(0.0, 1.0);
  for (int r = 0; r < out.rows(); ++r)
    for (int col = 0; col < out.cols(); ++col)
      out.at(col, r) +=
          w * ik * (ca.kx_deriv(col) * ca.at(col, r) + ca.ky_deriv(r) * cb.at(col, r));
}

inline ScalarField torus_concentration_update(const ScalarField& c, const SpeciesParams& p,
                                              const VectorField& u, const VectorField& grad_phi,
                                              double dt, bool nonlinear) {
  auto hat = forward_transform(c);
  if (nonlinear) {
    SpectralCoefficients n(c.grid());
    add_spectral_divergence(n, u.x * c, u.y * c, -1.0);
    if (p.z != 0.0) add_spectral_divergence(n, c * grad_phi.x, c * grad_phi.y, p.D * p.z);
    n *= dt;
    hat += n;
  }
  const int cx = c.grid().nx() / 3, cy = c.grid().ny() / 3;
  hat.for_each([&](int col, int row, Complex& z) {
    if (hat.kx(col) > cx || std::abs(hat.ky(row)) > cy)
      z = 0.0;
    else
      z /= 1.0 + p.D * k2_of(hat, col, row) * dt;
  });
  return inverse_transform(hat);
}

/// P (1 - dt Laplace)^{-1} w with 2/3 truncation.
inline VectorField torus_velocity_update(const VectorField& w, double dt) {
  auto cx = forward_transform(w.x);
  auto cy = forward_transform(w.y);
  const int ncx = w.grid().nx() / 3, ncy = w.grid().ny() / 3;
  for (int r = 0; r < cx.rows(); ++r)
    for (int col = 0; col < cx.cols(); ++col) {
      if (cx.kx(col) > ncx || std::abs(cx.ky(r)) > ncy) {
        cx.at(col, r) = 0.0;
        cy.at(col, r) = 0.0;
        continue;
      }
      double kx = cx.kx_deriv(col), ky = cx.ky_deriv(r);
      double kd2 = kx * kx + ky * ky;
      if (kd2 > 0) {
        Complex dot = (kx * cx.at(col, r) + ky * cy.at(col, r)) / kd2;
        cx.at(col, r) -= kx * dot;
        cy.at(col, r) -= ky * dot;
      }
      double m = 1.0 / (1.0 + k2_of(cx, col, r) * dt);
      cx.at(col, r) *= m;
      cy.at(col, r) *= m;
    }
  return {inverse_transform(cx), inverse_transform(cy)};
}

// --------------------------------------------------------------- square

/// Control-volume weights: 1 in the interior, 1/2 on boundary lines.
inline double cv(int i, int n) { return (i == 0 || i == n - 1) ? 0.5 : 1.0; }

/// Sum of explicit outward face fluxes (advection + electromigration)
/// per node, scaled by face length. Faces only join nodes inside the
/// square, so blocking species see zero flux through the boundary.
inline std::vector<double> square_explicit_outflow(const ScalarField& c, const SpeciesParams& p,
                                                   const VectorField& u, const ScalarField& phi,
                                                   bool nonlinear) {
  const Grid& g = c.grid();
  const int n = g.nx();
  const double h = g.dx();
  std::vector<double> out(g.size(), 0.0);
  if (!nonlinear) return out;
  auto face = [&](int i0, int j0, int i1, int j1, double ucomp0, double ucomp1, double len) {
    double cbar = 0.5 * (c(i0, j0) + c(i1, j1));
    double jflux = -p.D * p.z * cbar * (phi(i1, j1) - phi(i0, j0)) / h + 0.5 * (ucomp0 + ucomp1) * cbar;
    double F = jflux * len;
    out[g.index(i0, j0)] += F;
    out[g.index(i1, j1)] -= F;
  };
  for (int j = 0; j < n; ++j)
    for (int i = 0; i + 1 < n; ++i) face(i, j, i + 1, j, u.x(i, j), u.x(i + 1, j), cv(j, n) * h);
  for (int j = 0; j + 1 < n; ++j)
    for (int i = 0; i < n; ++i) face(i, j, i, j + 1, u.y(i, j), u.y(i, j + 1), cv(i, n) * h);
  return out;
}

inline ScalarField square_concentration_update(const ScalarField& c, const SpeciesParams& p,
                                               const VectorField& u, const ScalarField& phi,
                                               double dt, bool nonlinear) {
  const Grid& g = c.grid();
  const int n = g.nx();
  const double h = g.dx();
  const bool blocking = p.bc == BoundaryKind::Blocking;
  auto unknown = [&](int i, int j) { return blocking || !g.on_boundary(i, j); };
  auto area = [&](int i, int j) { return cv(i, n) * cv(j, n) * h * h; };
  const double a = dt * p.D;

  auto outflow = square_explicit_outflow(c, p, u, phi, nonlinear);
  std::vector<double> b(g.size(), 0.0), x(c.raw());
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      if (!unknown(i, j)) {
        x[g.index(i, j)] = 0;
        continue;
      }
      double rhs = area(i, j) * c(i, j) - dt * outflow[g.index(i, j)];
      // known Dirichlet neighbours move to the right-hand side
      if (!blocking) {
        if (g.on_boundary(i + 1, j)) rhs += a * cv(j, n) * p.gamma;
        if (g.on_boundary(i - 1, j)) rhs += a * cv(j, n) * p.gamma;
        if (g.on_boundary(i, j + 1)) rhs += a * cv(i, n) * p.gamma;
        if (g.on_boundary(i, j - 1)) rhs += a * cv(i, n) * p.gamma;
      }
      b[g.index(i, j)] = rhs;
    }
  auto apply = [&](std::span<const double> in, std::span<double> out) {
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) {
        const std::size_t k = g.index(i, j);
        if (!unknown(i, j)) {
          out[k] = 0;
          continue;
        }
        double v = in[k];
        double acc = area(i, j) * v;
        auto nb = [&](int p2, int q2, double w) {
          if (p2 < 0 || q2 < 0 || p2 >= n || q2 >= n) return;
          double other = unknown(p2, q2) ? in[g.index(p2, q2)] : 0.0;
          acc += a * w * (v - other);
          if (!unknown(p2, q2)) acc += 0.0;  // boundary value already on the rhs
        };
        nb(i + 1, j, cv(j, n));
        nb(i - 1, j, cv(j, n));
        nb(i, j + 1, cv(i, n));
        nb(i, j - 1, cv(i, n));
        out[k] = acc;
      }
  };
  double bn = std::sqrt(linalg::dot(b, b));
  auto res = linalg::conjugate_gradient(apply, b, x, 1e-15 * std::max(bn, 1e-300), 50 * n);
  if (!res.converged && res.residual > 1e-11 * bn)
    throw SolverError("implicit concentration solve did not converge", res.residual, res.iterations);
  ScalarField out(g, std::move(x));
  if (blocking) {
    // The exact update conserves sum(area * c); drop the solver residual's
    // component along the constants.
    double before = 0, after = 0, total_area = 0;
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) {
        before += area(i, j) * c(i, j);
        after += area(i, j) * out(i, j);
        total_area += area(i, j);
      }
    out += (before - after) / total_area;
  } else {
    for (int k = 0; k < n; ++k) {
      out(k, 0) = p.gamma;
      out(k, n - 1) = p.gamma;
      out(0, k) = p.gamma;
      out(n - 1, k) = p.gamma;
    }
  }
  return out;
}

inline VectorField square_velocity_update(const VectorField& w, double dt) {
  VectorField v(stokes::helmholtz_solve(w.x, dt), stokes::helmholtz_solve(w.y, dt));
  return stokes::project(v);
}

}  // namespace detail

// ------------------------------------------------------------- operators

/// D div(grad c + z c grad Phi). On the square this is the node-wise
/// flux divergence of the finite-volume scheme (zero total flux through
/// the boundary for blocking species; boundary rows of Dirichlet species
/// are zero).
inline ScalarField ionic_flux_divergence(const ScalarField& c, const ScalarField& phi,
                                         const SpeciesParams& p) {
  const Grid& g = c.grid();
  require_same_grid(g, phi.grid());
  if (g.is_torus()) {
    auto grad = fields::gradient(phi);
    auto hat = forward_transform(c);
    hat.for_each([&](int col, int row, Complex& z) { z *= -detail::k2_of(hat, col, row); });
    if (p.z != 0.0) detail::add_spectral_divergence(hat, c * grad.x, c * grad.y, p.z);
    hat *= p.D;
    return inverse_transform(fields::dealias(hat));
  }
  const int n = g.nx();
  const double h = g.dx();
  SpeciesParams migration = p;
  auto outflow = detail::square_explicit_outflow(c, migration, VectorField(g), phi, true);
  ScalarField out(g);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      if (p.bc != BoundaryKind::Blocking && g.on_boundary(i, j)) continue;
      double diff = 0;
      auto nb = [&](int a, int b, double w) {
        if (a < 0 || b < 0 || a >= n || b >= n) return;
        diff += w * (c(a, b) - c(i, j));
      };
      nb(i + 1, j, detail::cv(j, n));
      nb(i - 1, j, detail::cv(j, n));
      nb(i, j + 1, detail::cv(i, n));
      nb(i, j - 1, detail::cv(i, n));
      double area = detail::cv(i, n) * detail::cv(j, n) * h * h;
      out(i, j) = (p.D * diff - outflow[g.index(i, j)]) / area;
    }
  return out;
}

/// Leray-projected -u.grad u - rho grad Phi + f.
inline VectorField navier_stokes_explicit_rhs(const VectorField& u, const ScalarField& rho,
                                              const ScalarField& phi, const VectorField& f,
                                              bool nonlinear = true) {
  const Grid& g = u.grid();
  VectorField F = f;
  if (nonlinear) {
    auto gx = fields::gradient(u.x);
    auto gy = fields::gradient(u.y);
    auto gp = fields::gradient(phi);
    F.x -= u.x * gx.x + u.y * gx.y + rho * gp.x;
    F.y -= u.x * gy.x + u.y * gy.y + rho * gp.y;
  }
  if (g.is_torus()) return fields::dealias(fields::leray_project(F));
  return stokes::project(F);
}

inline VectorField navier_stokes_explicit_rhs(const SystemState& s, const ScalarField& phi) {
  ScalarField rho = s.c.empty() ? ScalarField(s.grid()) : charge_density(s);
  return navier_stokes_explicit_rhs(s.u, rho, phi, s.f, s.options.nonlinear);
}

inline VectorField noise_field(const NoiseSpec& noise, std::span<const double> dW, const Grid& g) {
  VectorField xi(g);
  for (std::size_t k = 0; k < noise.size(); ++k) xi.axpy(noise.amplitudes[k] * dW[k], noise.mode(k));
  return xi;
}

inline VectorField velocity_update(const VectorField& w, double dt) {
  return w.grid().is_torus() ? detail::torus_velocity_update(w, dt)
                             : detail::square_velocity_update(w, dt);
}

inline ScalarField concentration_update(const ScalarField& c, const SpeciesParams& p,
                                        const VectorField& u, const ScalarField& phi, double dt,
                                        bool nonlinear) {
  if (c.grid().is_torus())
    return detail::torus_concentration_update(c, p, u, fields::gradient(phi), dt, nonlinear);
  return detail::square_concentration_update(c, p, u, phi, dt, nonlinear);
}

/// Relaxation of a shadow velocity toward a target on the first n modes,
/// lambda P_n (target - u), integrated implicitly over the step.
struct VelocityControl {
  const ModeBasis* basis = nullptr;
  std::size_t n_modes = 0;
  double lambda = 0;
  const VectorField* target = nullptr;
};

// ----------------------------------------------------------------- steps

inline double max_speed(const VectorField& u) { return fields::lp_norm(u, INFINITY); }

inline double cfl_limit(const SystemState& s) {
  return 0.25 * s.grid().spacing() / std::max(1.0, max_speed(s.u));
}

/// One IMEX Euler-Maruyama update with the given Brownian increments;
/// no positivity policy.
inline SystemState advance(const SystemState& s, double dt, std::span<const double> dW,
                           const VelocityControl* control = nullptr) {
  SystemState next = s;
  const bool nl = s.options.nonlinear;
  const Grid& g = s.grid();
  ScalarField rho = s.c.empty() ? ScalarField(g) : charge_density(s);

  if (g.is_torus()) {
    VectorField grad_phi = fields::gradient(s.phi);
    for (std::size_t i = 0; i < s.c.size(); ++i)
      next.c[i] = detail::torus_concentration_update(s.c[i], s.params[i], s.u, grad_phi, dt, nl);
  } else {
    for (std::size_t i = 0; i < s.c.size(); ++i)
      next.c[i] = detail::square_concentration_update(s.c[i], s.params[i], s.u, s.phi, dt, nl);
  }

  VectorField w = s.u;
  w.axpy(dt, navier_stokes_explicit_rhs(s.u, rho, s.phi, s.f, nl));
  if (s.noise.size() > 0) w += noise_field(s.noise, dW, g);
  next.u = velocity_update(w, dt);

  if (control && control->lambda > 0 && control->n_modes > 0) {
    const double theta = control->lambda * dt / (1.0 + control->lambda * dt);
    VectorField gap = *control->target;
    gap -= next.u;
    next.u.axpy(theta, control->basis->project(gap, control->n_modes));
  }

  refresh_potential(next);
  next.t = s.t + dt;
  return next;
}

namespace detail {

enum class Health { Ok, NonFinite, Negative };

inline Health check_health(const SystemState& s) {
  if (!s.u.all_finite()) return Health::NonFinite;
  for (const auto& ci : s.c) {
    if (!ci.all_finite()) return Health::NonFinite;
    double mx = 0, mn = 0;
    for (double v : ci.values()) {
      mx = std::max(mx, std::abs(v));
      mn = std::min(mn, v);
    }
    if (mx > 0 && mn < -1e-8 * mx) return Health::Negative;
  }
  return Health::Ok;
}

inline void clamp_negative(SystemState& s) {
  for (auto& ci : s.c)
    for (double& v : ci.raw()) v = std::max(v, 0.0);
  refresh_potential(s);
  s.clamped = true;
}

/// Brownian bridge split of increments over [0, dt] at dt/2.
inline void bridge_split(std::span<const double> dW, double dt, RngStream& rng,
                         std::vector<double>& first, std::vector<double>& second) {
  first.resize(dW.size());
  second.resize(dW.size());
  const double sd = std::sqrt(dt / 4.0);
  for (std::size_t k = 0; k < dW.size(); ++k) {
    first[k] = 0.5 * dW[k] + sd * rng.normal();
    second[k] = dW[k] - first[k];
  }
}

inline SystemState advance_guarded(const SystemState& s, double dt, std::span<const double> dW,
                                   int depth, RngStream& rng) {
  SystemState cand = advance(s, dt, dW);
  auto h = check_health(cand);
  if (h == Health::Ok) return cand;
  if (h == Health::NonFinite)
    throw BlowUpError("non-finite values at step " + std::to_string(s.steps + 1), s.steps + 1);
  if (s.options.clamp_negative) {
    clamp_negative(cand);
    return cand;
  }
  if (depth >= s.options.max_halvings)
    throw BlowUpError("concentration positivity lost at step " + std::to_string(s.steps + 1) +
                          " after " + std::to_string(depth) + " halvings",
                      s.steps + 1);
  std::vector<double> a, b;
  bridge_split(dW, dt, rng, a, b);
  SystemState mid = advance_guarded(s, dt / 2, a, depth + 1, rng);
  return advance_guarded(mid, dt / 2, b, depth + 1, rng);
}

inline std::vector<double> draw_increments(RngStream& rng, std::size_t n, double dt) {
  std::vector<double> dW(n);
  const double sd = std::sqrt(dt);
  for (auto& w : dW) w = sd * rng.normal();
  return dW;
}

inline void require_step(const SystemState& s, double dt) {
  if (!(dt > 0)) throw ArgumentError("time step must be positive");
  double lim = cfl_limit(s);
  if (dt > lim)
    throw StepRejectedError("CFL guard violated: dt = " + std::to_string(dt) +
                                " exceeds 0.25*h/max(1,|u|_inf) = " + std::to_string(lim),
                            lim);
}

inline void finish_step(SystemState& next, const SystemState& prev, const RngStream& rng) {
  next.rng = rng;
  next.steps = prev.steps + 1;
  next.min_concentration = min_over_species(next.c);
}

}  // namespace detail

/// One step of the coupled system on either domain, with the
/// reject-and-halve positivity policy.
inline SystemState step(const SystemState& s, double dt) {
  detail::require_step(s, dt);
  RngStream rng = s.rng;
  auto dW = detail::draw_increments(rng, s.noise.size(), dt);
  SystemState next = detail::advance_guarded(s, dt, dW, 0, rng);
  detail::finish_step(next, s, rng);
  return next;
}

inline SystemState step_bounded(const SystemState& s, double dt) {
  require_square(s.grid(), "step_bounded");
  return step(s, dt);
}

// ---------------------------------------------------- shadow (coupled) step

/// Feedback lambda P_n (u - u_shadow) switched off once the running
/// integral of ||P_n (u - u_shadow)||^2 reaches the budget.
struct ShadowControl {
  std::shared_ptr<const ModeBasis> basis;
  std::size_t n_modes = 0;
  double lambda = 0;
  double budget = INFINITY;
  double integral = 0;  // left-endpoint quadrature
  bool fired = false;
  double fired_at = INFINITY;
};

namespace detail {

inline void advance_pair_guarded(SystemState& p, SystemState& s, double dt,
                                 std::span<const double> dW, const VelocityControl* ctrl_proto,
                                 int depth, RngStream& rng) {
  SystemState pc = advance(p, dt, dW);
  SystemState sc = s;
  if (ctrl_proto) {
    VelocityControl ctrl = *ctrl_proto;
    ctrl.target = &pc.u;
    sc = advance(s, dt, dW, &ctrl);
  } else {
    sc = advance(s, dt, dW);
  }
  auto hp = check_health(pc), hs = check_health(sc);
  if (hp == Health::NonFinite || hs == Health::NonFinite)
    throw BlowUpError("non-finite values in coupled step " + std::to_string(p.steps + 1), p.steps + 1);
  if (hp == Health::Ok && hs == Health::Ok) {
    p = std::move(pc);
    s = std::move(sc);
    return;
  }
  if (p.options.clamp_negative) {
    if (hp != Health::Ok) clamp_negative(pc);
    if (hs != Health::Ok) clamp_negative(sc);
    p = std::move(pc);
    s = std::move(sc);
    return;
  }
  if (depth >= p.options.max_halvings)
    throw BlowUpError("positivity lost in coupled step " + std::to_string(p.steps + 1), p.steps + 1);
  std::vector<double> a, b;
  bridge_split(dW, dt, rng, a, b);
  advance_pair_guarded(p, s, dt / 2, a, ctrl_proto, depth + 1, rng);
  advance_pair_guarded(p, s, dt / 2, b, ctrl_proto, depth + 1, rng);
}

}  // namespace detail

/// Advances the primary and the controlled shadow over one step with the
/// same Brownian increments. The stopping-time indicator is evaluated
/// before the step; the budget integral uses the left endpoint.
inline void shadow_step(SystemState& primary, SystemState& shadow, double dt, ShadowControl& ctrl) {
  detail::require_step(primary, dt);
  detail::require_step(shadow, dt);
  double gap_sq = 0;
  if (ctrl.basis && ctrl.n_modes > 0) {
    VectorField gap = primary.u;
    gap -= shadow.u;
    gap_sq = ctrl.basis->projected_norm_sq(gap, ctrl.n_modes);
  }
  if (!ctrl.fired && ctrl.integral >= ctrl.budget) {
    ctrl.fired = true;
    ctrl.fired_at = primary.t;
  }
  const bool active = !ctrl.fired && ctrl.lambda > 0 && ctrl.basis;
  VelocityControl vc{ctrl.basis.get(), ctrl.n_modes, ctrl.lambda, nullptr};

  RngStream rng = primary.rng;
  auto dW = detail::draw_increments(rng, primary.noise.size(), dt);
  SystemState p0 = primary, s0 = shadow;
  detail::advance_pair_guarded(primary, shadow, dt, dW, active ? &vc : nullptr, 0, rng);
  detail::finish_step(primary, p0, rng);
  detail::finish_step(shadow, s0, rng);
  if (active) ctrl.integral += gap_sq * dt;
}

}  // namespace esnp
