#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "esnp/dynamics.hpp"

namespace esnp {

namespace presets {

/// Divergence-free field from a stream function: (d_y psi, -d_x psi),
/// projected onto the discrete divergence-free space.
inline VectorField curl_of(const ScalarField& psi) {
  VectorField g = fields::gradient(psi);
  VectorField v{g.y, g.x};
  v.y *= -1.0;
  if (psi.grid().is_torus()) return fields::dealias(fields::leray_project(v));
  for (int k = 0; k < psi.grid().nx(); ++k) {
    int n = psi.grid().nx() - 1;
    for (auto* c : {&v.x, &v.y}) {
      (*c)(k, 0) = 0;
      (*c)(k, n) = 0;
      (*c)(0, k) = 0;
      (*c)(n, k) = 0;
    }
  }
  return stokes::project(v);
}

inline VectorField scaled_to_max(VectorField v, double amplitude) {
  double m = fields::lp_norm(v, INFINITY);
  if (m > 0) v *= amplitude / m;
  return v;
}

/// (cos x sin y, -sin x cos y) on the torus.
inline VectorField taylor_green(const Grid& g, double amplitude) {
  require_torus(g, "taylor_green");
  return VectorField::sample(g, [&](double x, double y) {
    return std::pair{amplitude * std::cos(x) * std::sin(y), -amplitude * std::sin(x) * std::cos(y)};
  });
}

/// amplitude (ky, -kx)/|k| cos(k.x) on the torus.
inline VectorField single_mode(const Grid& g, int kx, int ky, double amplitude) {
  require_torus(g, "single_mode");
  if (kx == 0 && ky == 0) throw ArgumentError("single_mode needs a nonzero wavevector");
  double kn = std::hypot(double(kx), double(ky));
  return VectorField::sample(g, [&](double x, double y) {
    double c = amplitude * std::cos(kx * x + ky * y);
    return std::pair{c * ky / kn, -c * kx / kn};
  });
}

/// Curl of a localized bump, peak speed `amplitude`.
inline VectorField bump(const Grid& g, double amplitude) {
  ScalarField psi = ScalarField::sample(g, [&](double x, double y) {
    if (g.is_torus()) {
      const double pi = std::numbers::pi;
      return std::exp(-((x - pi) * (x - pi) + (y - pi) * (y - pi)));
    }
    double b = x * (1 - x) * y * (1 - y);
    return b * b;
  });
  return scaled_to_max(curl_of(psi), amplitude);
}

/// Random smooth low-mode scalar with max |p| = 1. Torus: mean zero;
/// square: `vanishing` selects sine modes (zero on the boundary),
/// otherwise cosine modes with the discrete mean removed.
inline ScalarField random_low_mode(const Grid& g, std::uint64_t seed, bool vanishing = false) {
  ScalarField p(g);
  if (g.is_torus()) {
    p = poisson::random_band_limited(g, 3, seed);
  } else {
    RngStream rng(seed);
    const double pi = std::numbers::pi;
    for (int a = 0; a <= 3; ++a)
      for (int b = 0; b <= 3; ++b) {
        if (vanishing && (a == 0 || b == 0)) continue;
        if (!vanishing && a == 0 && b == 0) continue;
        double w = rng.normal();
        p += ScalarField::sample(g, [&](double x, double y) {
          return vanishing ? w * std::sin(a * pi * x) * std::sin(b * pi * y)
                           : w * std::cos(a * pi * x) * std::cos(b * pi * y);
        });
      }
    if (!vanishing) p += -fields::mean(p);
  }
  double m = fields::lp_norm(p, INFINITY);
  if (m > 0) p *= 1.0 / m;
  return p;
}

/// Lowest mode: cos x (torus), sin(pi x) sin(pi y) (vanishing) or
/// cos(pi x) (square, mean zero).
inline ScalarField lowest_mode(const Grid& g, bool vanishing = false) {
  const double pi = std::numbers::pi;
  return ScalarField::sample(g, [&](double x, double y) {
    if (g.is_torus()) return std::cos(x);
    return vanishing ? std::sin(pi * x) * std::sin(pi * y) : std::cos(pi * x);
  });
}

inline VectorField random_velocity(const Grid& g, double amplitude, std::uint64_t seed) {
  ScalarField psi = random_low_mode(g, seed, false);
  if (!g.is_torus()) {
    psi = psi * ScalarField::sample(g, [](double x, double y) {
      double b = x * (1 - x) * y * (1 - y);
      return b * b;
    });
  }
  return scaled_to_max(curl_of(psi), amplitude);
}

}  // namespace presets

enum class InitialKind { Neutral, SteadyPlusPerturbation, TwoSpeciesPaper };
enum class PerturbationShape { Random, LowestMode };

struct InitialDataConfig {
  std::vector<SpeciesParams> params;
  std::vector<double> means;  // per species; Dirichlet species use gamma
  double epsilon = 0.1;       // relative perturbation size, < 1
  PerturbationShape shape = PerturbationShape::Random;
  std::vector<int> perturbed;  // species indices (0-based); empty = all
  double velocity_amplitude = 0;
  double potential_gamma = 0;
  std::uint64_t seed = 0;
};

namespace detail {

inline bool perturbed(const InitialDataConfig& cfg, std::size_t i) {
  if (cfg.perturbed.empty()) return true;
  return std::find(cfg.perturbed.begin(), cfg.perturbed.end(), int(i)) != cfg.perturbed.end();
}

/// Adjusts the last charged non-Dirichlet species so that
/// sum z gamma (Dirichlet) + sum z mean (others) = 0.
inline void enforce_neutral_means(std::vector<double>& means, const std::vector<SpeciesParams>& p) {
  double total = 0;
  int last = -1;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i].bc == BoundaryKind::Dirichlet) {
      total += p[i].z * p[i].gamma;
    } else {
      total += p[i].z * means[i];
      if (p[i].z != 0) last = int(i);
    }
  }
  if (total == 0) return;
  if (last < 0)
    throw ConfigError("electroneutrality cannot be met: no charged species with a free mean");
  means[last] -= total / p[last].z;
  if (!(means[last] > 0))
    throw ConfigError("electroneutrality forces species " + std::to_string(last + 1) +
                      " to a nonpositive mean " + std::to_string(means[last]));
}

}  // namespace detail

/// Builds an initial state. Concentrations are mean + epsilon * mean * p
/// with |p| <= 1 smooth. The state carries no noise, force or RNG yet.
inline SystemState make_initial_data(InitialKind kind, const Grid& g, InitialDataConfig cfg) {
  if (kind == InitialKind::TwoSpeciesPaper) {
    double D = cfg.params.empty() ? 1.0 : cfg.params[0].D;
    double m = cfg.means.empty() ? 1.0 : cfg.means[0];
    cfg.params = {{D, 1.0, BoundaryKind::Periodic, 0.0}, {D, -1.0, BoundaryKind::Periodic, 0.0}};
    if (!g.is_torus())
      for (auto& p : cfg.params) p.bc = BoundaryKind::Blocking;
    cfg.means = {m, m};
  }
  validate_species(cfg.params, g.domain());
  const std::size_t N = cfg.params.size();
  cfg.means.resize(N, 1.0);
  for (std::size_t i = 0; i < N; ++i) {
    if (cfg.params[i].bc == BoundaryKind::Dirichlet) cfg.means[i] = cfg.params[i].gamma;
    if (cfg.means[i] < 0) throw ConfigError("species " + std::to_string(i + 1) + ": negative mean");
  }
  if (!(cfg.epsilon >= 0 && cfg.epsilon < 1)) throw ConfigError("perturbation size must lie in [0, 1)");
  if (N > 0) detail::enforce_neutral_means(cfg.means, cfg.params);

  SystemState s(g);
  s.params = cfg.params;
  s.potential_gamma = cfg.potential_gamma;
  s.rng = RngStream(cfg.seed);
  RngStream seeds = RngStream::derive(cfg.seed, 0xC0FFEE);
  for (std::size_t i = 0; i < N; ++i) {
    const bool dirichlet = cfg.params[i].bc == BoundaryKind::Dirichlet;
    const double m = cfg.means[i];
    ScalarField c(g, m);
    const std::uint64_t sub = seeds.next_u64();
    if (cfg.epsilon > 0 && detail::perturbed(cfg, i)) {
      ScalarField p = cfg.shape == PerturbationShape::LowestMode
                          ? presets::lowest_mode(g, dirichlet)
                          : presets::random_low_mode(g, sub, dirichlet);
      if (dirichlet && m == 0) {
        p = p * p;  // nonnegative bump above a zero boundary datum
        c.axpy(cfg.epsilon, p);
      } else {
        c.axpy(cfg.epsilon * m, p);
      }
      if (!dirichlet && !g.is_torus()) c += m - fields::mean(c);
    }
    s.c.push_back(std::move(c));
  }
  if (cfg.velocity_amplitude > 0)
    s.u = presets::random_velocity(g, cfg.velocity_amplitude, seeds.next_u64());
  refresh_potential(s);
  s.min_concentration = detail::min_over_species(s.c);
  return s;
}

}  // namespace esnp
