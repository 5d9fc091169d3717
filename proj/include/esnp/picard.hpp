#pragma once

#include <cmath>
#include <vector>

#include "esnp/dynamics.hpp"

namespace esnp {

struct PicardResult {
  std::vector<double> distances;  // distances[m-1] = sup_n dist(iterate m, iterate m-1)
  bool converged = false;
  int iterations = 0;
  std::vector<SystemState> limit;  // last iterate at every time level
};

namespace detail {

struct PicardPath {
  std::vector<VectorField> u;
  std::vector<std::vector<ScalarField>> c;
  std::vector<ScalarField> phi;
};

inline double path_distance(const PicardPath& a, const PicardPath& b) {
  double worst = 0;
  for (std::size_t n = 0; n < a.u.size(); ++n) {
    VectorField du = a.u[n];
    du -= b.u[n];
    double d = fields::inner(du, du);
    for (std::size_t i = 0; i < a.c[n].size(); ++i) {
      ScalarField dc = a.c[n][i];
      dc -= b.c[n][i];
      d += fields::inner(dc, dc);
    }
    worst = std::max(worst, std::sqrt(d));
  }
  return worst;
}

}  // namespace detail

/// Fixed-point iteration on [0, T0] over one noise path. The stochastic
/// convolution G is integrated once with the same implicit recursion as
/// step(); iterate m advances v = u - G with its own convection and the
/// electric force of iterate m-1, then the concentrations (linear) with
/// velocity m and potential m-1. Iterate 0 is zero. The fixed point is
/// the step() trajectory at the same dt and noise path.
inline PicardResult picard_solve(const SystemState& initial, double T0, double dt, int m_max,
                                 double tol) {
  if (!(T0 > 0) || !(dt > 0)) throw ArgumentError("picard_solve: T0 and dt must be positive");
  if (m_max < 1) throw ArgumentError("picard_solve: m_max must be at least 1");
  const Grid& g = initial.grid();
  const int M = int(std::llround(T0 / dt));
  if (M < 1) throw ArgumentError("picard_solve: T0 shorter than one step");
  const bool nl = initial.options.nonlinear;
  const std::size_t N = initial.c.size();

  RngStream rng = initial.rng;
  std::vector<std::vector<double>> dW(M);
  for (auto& w : dW) w = detail::draw_increments(rng, initial.noise.size(), dt);

  std::vector<VectorField> G(M + 1, VectorField(g));
  for (int n = 0; n < M; ++n) {
    VectorField w = G[n];
    if (initial.noise.size() > 0) w += noise_field(initial.noise, dW[n], g);
    G[n + 1] = velocity_update(w, dt);
  }

  ScalarField phi_zero = potential_of({}, initial.params, initial.potential_gamma, g);
  detail::PicardPath prev;
  prev.u.assign(M + 1, VectorField(g));
  prev.c.assign(M + 1, std::vector<ScalarField>(N, ScalarField(g)));
  prev.phi.assign(M + 1, phi_zero);

  PicardResult res;
  for (int m = 1; m <= m_max; ++m) {
    detail::PicardPath cur;
    cur.u.reserve(M + 1);
    cur.c.reserve(M + 1);
    cur.phi.reserve(M + 1);
    VectorField v = initial.u;  // v = u - G, G(0) = 0
    cur.u.push_back(initial.u);
    cur.c.push_back(initial.c);
    cur.phi.push_back(initial.phi);
    for (int n = 0; n < M; ++n) {
      const VectorField& un = cur.u[n];
      ScalarField rho_prev = N ? charge_density(prev.c[n], initial.params) : ScalarField(g);
      VectorField w = v;
      w.axpy(dt, navier_stokes_explicit_rhs(un, rho_prev, prev.phi[n], initial.f, nl));
      v = velocity_update(w, dt);
      VectorField u_next = v;
      u_next += G[n + 1];

      std::vector<ScalarField> c_next;
      c_next.reserve(N);
      for (std::size_t i = 0; i < N; ++i)
        c_next.push_back(concentration_update(cur.c[n][i], initial.params[i], un, prev.phi[n], dt, nl));
      cur.phi.push_back(potential_of(c_next, initial.params, initial.potential_gamma, g));
      cur.u.push_back(std::move(u_next));
      cur.c.push_back(std::move(c_next));
    }
    double d = detail::path_distance(cur, prev);
    res.distances.push_back(d);
    res.iterations = m;
    prev = std::move(cur);
    if (d < tol) {
      res.converged = true;
      break;
    }
  }

  res.limit.reserve(M + 1);
  for (int n = 0; n <= M; ++n) {
    SystemState s = initial;
    s.u = prev.u[n];
    s.c = prev.c[n];
    s.phi = prev.phi[n];
    s.t = initial.t + n * dt;
    s.steps = initial.steps + n;
    res.limit.push_back(std::move(s));
  }
  return res;
}

}  // namespace esnp
