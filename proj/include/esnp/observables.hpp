#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "esnp/dynamics.hpp"
#include "esnp/fields.hpp"
#include "esnp/poisson.hpp"

namespace esnp {

/// Time-stamped scalar diagnostic.
class ObservableSeries {
 public:
  struct Sample {
    double t;
    double value;
  };

  ObservableSeries() = default;
  ObservableSeries(std::string name, std::string run_id = {})
      : name_(std::move(name)), run_id_(std::move(run_id)) {}

  void push(double t, double value) {
    if (!std::isfinite(t) || !std::isfinite(value))
      throw ArgumentError("series '" + name_ + "': non-finite sample at t = " + std::to_string(t));
    if (!samples_.empty() && !(t > samples_.back().t))
      throw ArgumentError("series '" + name_ + "': times must be strictly increasing");
    samples_.push_back({t, value});
  }

  const std::string& name() const noexcept { return name_; }
  const std::string& run_id() const noexcept { return run_id_; }
  void set_run_id(std::string id) { run_id_ = std::move(id); }
  const std::vector<Sample>& samples() const noexcept { return samples_; }
  std::size_t size() const noexcept { return samples_.size(); }
  bool empty() const noexcept { return samples_.empty(); }
  const Sample& operator[](std::size_t i) const { return samples_[i]; }
  const Sample& back() const { return samples_.back(); }

  double max_abs() const {
    double m = 0;
    for (const auto& s : samples_) m = std::max(m, std::abs(s.value));
    return m;
  }

 private:
  std::string name_;
  std::string run_id_;
  std::vector<Sample> samples_;
};

/// CSV with a '#'-prefixed JSON header line.
inline void write_csv(const ObservableSeries& s, const std::filesystem::path& path,
                      const nlohmann::json& meta = nlohmann::json::object()) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  nlohmann::json head = meta;
  head["name"] = s.name();
  head["run_id"] = s.run_id();
  out << "# " << head.dump() << "\n";
  out << "t," << s.name() << "\n";
  char buf[64];
  for (const auto& x : s.samples()) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", x.t, x.value);
    out << buf;
  }
}

inline ObservableSeries read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path.string());
  std::string line;
  std::getline(in, line);
  if (line.rfind("# ", 0) != 0) throw Error(path.string() + ": missing header line");
  auto head = nlohmann::json::parse(line.substr(2));
  ObservableSeries s(head.value("name", std::string{}), head.value("run_id", std::string{}));
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto comma = line.find(',');
    s.push(std::stod(line.substr(0, comma)), std::stod(line.substr(comma + 1)));
  }
  return s;
}

namespace obs {

// ---------------------------------------------------------------- energies

inline double kinetic_energy(const VectorField& u) {
  double n = fields::l2_norm(u);
  return n * n;
}
inline double kinetic_energy(const SystemState& s) { return kinetic_energy(s.u); }

inline double potential_energy(const ScalarField& phi) {
  return kinetic_energy(fields::gradient(phi));
}
inline double potential_energy(const SystemState& s) { return potential_energy(s.phi); }

struct EntropyValue {
  double value = 0;
  bool floored = false;
};

/// sum_i int (c log(c / cbar) - c + cbar), entries below 1e-14 floored.
inline EntropyValue entropy(const std::vector<ScalarField>& c) {
  constexpr double floor_value = 1e-14;
  EntropyValue out;
  for (const auto& ci : c) {
    ScalarField w = ci;
    for (double& v : w.raw())
      if (v < floor_value) {
        v = floor_value;
        out.floored = true;
      }
    const double cbar = fields::mean(w);
    ScalarField integrand(w.grid());
    for (std::size_t k = 0; k < w.values().size(); ++k) {
      double v = w.values()[k];
      integrand.raw()[k] = v * std::log(v / cbar) - v + cbar;
    }
    out.value += fields::integral(integrand);
  }
  return out;
}
inline EntropyValue entropy(const SystemState& s) { return entropy(s.c); }

inline double deviation_sq(const std::vector<ScalarField>& c) {
  double total = 0;
  for (const auto& ci : c) {
    ScalarField d = ci;
    d += -fields::mean(ci);
    double n = fields::l2_norm(d);
    total += n * n;
  }
  return total;
}

inline double charge_sq(const SystemState& s) {
  if (s.c.empty()) return 0;
  double n = fields::l2_norm(charge_density(s));
  return n * n;
}

/// ||u||^2 + sum ||c_i||^2.
inline double state_distance_sq(const SystemState& a, const SystemState& b) {
  VectorField du = a.u;
  du -= b.u;
  double total = kinetic_energy(du);
  for (std::size_t i = 0; i < a.c.size(); ++i) {
    ScalarField dc = a.c[i];
    dc -= b.c[i];
    double n = fields::l2_norm(dc);
    total += n * n;
  }
  return total;
}

// -------------------------------------------------------------- identities

struct IdentityResidual {
  double residual = 0;
  double lhs = 0;
  double rhs = 0;
  bool precondition_ok = true;  // velocity divergence-free
};

/// |<rho grad Phi, u> + <u . grad rho, Phi>|, normalized by
/// 1 + ||rho grad Phi|| ||u|| + ||u . grad rho|| ||Phi||.
inline IdentityResidual cancellation_residual_velocity(const VectorField& u, const ScalarField& rho,
                                                       const ScalarField& phi) {
  require_same_grid(u.grid(), rho.grid());
  require_same_grid(u.grid(), phi.grid());
  IdentityResidual r;
  VectorField gp = fields::gradient(phi);
  VectorField force{rho * gp.x, rho * gp.y};
  ScalarField adv = fields::advect(u, rho);
  double a = fields::inner(force, u);
  double b = fields::inner(adv, phi);
  double scale = 1.0 + fields::l2_norm(force) * fields::l2_norm(u) +
                 fields::l2_norm(adv) * fields::l2_norm(phi);
  r.lhs = a + b;
  r.rhs = 0;
  r.residual = std::abs(a + b) / scale;
  double div = fields::l2_norm(fields::divergence(u));
  r.precondition_ok = div <= 1e-10 * (1.0 + fields::h1_norm(u));
  return r;
}

/// (div(sigma grad Phi), rho) + (div(rho grad Phi), sigma) against
/// -(rho^2, sigma). Products are truncated before differentiation on the
/// torus.
inline IdentityResidual two_species_identity_residual(const ScalarField& rho,
                                                      const ScalarField& sigma,
                                                      const ScalarField& phi) {
  require_same_grid(rho.grid(), sigma.grid());
  require_same_grid(rho.grid(), phi.grid());
  const bool torus = rho.grid().is_torus();
  VectorField gp = fields::gradient(phi);
  auto flux = [&](const ScalarField& w) {
    VectorField v{w * gp.x, w * gp.y};
    return torus ? fields::dealias(v) : v;
  };
  VectorField fs = flux(sigma), fr = flux(rho);
  double a = fields::inner(fields::divergence(fs), rho);
  double b = fields::inner(fields::divergence(fr), sigma);
  double c = -fields::inner(rho * rho, sigma);
  double scale = 1.0 + fields::l2_norm(fs) * fields::h_seminorm(rho, 1) +
                 fields::l2_norm(fr) * fields::h_seminorm(sigma, 1) +
                 fields::l2_norm(rho * rho) * fields::l2_norm(sigma);
  IdentityResidual r;
  r.lhs = a + b;
  r.rhs = c;
  r.residual = std::abs(a + b - c) / scale;
  return r;
}

namespace detail {

inline void require_two_species(const SystemState& s) {
  if (s.c.size() != 2 || s.params[0].z != -s.params[1].z || s.params[0].z == 0 ||
      s.params[0].D != s.params[1].D)
    throw ArgumentError("two-species observable needs valences (z, -z) and equal diffusivities");
}

struct TwoSpeciesParts {
  double energy;
  double dissipation;
};

inline TwoSpeciesParts two_species_parts(const SystemState& s) {
  const double z = std::abs(s.params[0].z);
  ScalarField rho = s.c[0];
  rho -= s.c[1];
  ScalarField sigma = s.c[0];
  sigma += s.c[1];
  ScalarField dev = sigma;
  dev += -fields::mean(sigma);
  double nr = fields::l2_norm(rho), ns = fields::l2_norm(dev);
  double grho = fields::h_seminorm(rho, 1), gsig = fields::h_seminorm(sigma, 1);
  double weighted = fields::inner(sigma, rho * rho);
  return {0.5 * (nr * nr + ns * ns), s.params[0].D * (grho * grho + gsig * gsig + z * weighted)};
}

}  // namespace detail

/// Per-step residual of d/dt 1/2(||rho||^2 + ||sigma - mean||^2)
/// + D(||grad rho||^2 + ||grad sigma||^2 + ||sqrt(sigma) rho||^2) = 0 with
/// a forward difference and the trapezoid average of the dissipation.
/// Here rho = c1 - c2 and sigma = c1 + c2.
inline ObservableSeries dissipation_balance_two_species(std::span<const SystemState> states) {
  ObservableSeries out("dissipation_residual");
  if (states.size() < 2) return out;
  detail::require_two_species(states[0]);
  auto prev = detail::two_species_parts(states[0]);
  for (std::size_t n = 1; n < states.size(); ++n) {
    auto cur = detail::two_species_parts(states[n]);
    double dt = states[n].t - states[n - 1].t;
    double res = (cur.energy - prev.energy) / dt + 0.5 * (cur.dissipation + prev.dissipation);
    out.push(states[n].t, res);
    prev = cur;
  }
  return out;
}

// ----------------------------------------------------------- decay fitting

struct DecayFit {
  double rate = 0;
  double r_squared = 1;
  std::size_t points = 0;
};

/// Least-squares slope of log(value) against t on [t0, t1]; rate = -slope.
inline DecayFit fit_decay_rate(const ObservableSeries& s, double t0 = -INFINITY,
                               double t1 = INFINITY) {
  std::vector<double> ts, ys;
  for (const auto& x : s.samples()) {
    if (x.t < t0 || x.t > t1) continue;
    if (!(x.value > 0))
      throw PreconditionError("fit_decay_rate: non-positive value " + std::to_string(x.value) +
                              " at t = " + std::to_string(x.t));
    ts.push_back(x.t);
    ys.push_back(std::log(x.value));
  }
  if (ts.size() < 2) throw ArgumentError("fit_decay_rate: fewer than two samples in window");
  const double n = double(ts.size());
  double mt = 0, my = 0;
  for (std::size_t k = 0; k < ts.size(); ++k) {
    mt += ts[k];
    my += ys[k];
  }
  mt /= n;
  my /= n;
  double stt = 0, sty = 0, syy = 0;
  for (std::size_t k = 0; k < ts.size(); ++k) {
    stt += (ts[k] - mt) * (ts[k] - mt);
    sty += (ts[k] - mt) * (ys[k] - my);
    syy += (ys[k] - my) * (ys[k] - my);
  }
  DecayFit fit;
  fit.points = ts.size();
  double slope = sty / stt;
  fit.rate = -slope;
  if (syy > 0) {
    double sse = 0;
    for (std::size_t k = 0; k < ts.size(); ++k) {
      double e = ys[k] - (my + slope * (ts[k] - mt));
      sse += e * e;
    }
    fit.r_squared = 1.0 - sse / syy;
  }
  return fit;
}

/// sum_i ||c_i - target_i||_{L^p} along a trajectory.
inline ObservableSeries lp_decay_series(std::span<const SystemState> states, double p,
                                        const std::vector<double>& targets) {
  if (!(p >= 1)) throw ArgumentError("lp_decay_series: p must be >= 1");
  ObservableSeries out("lp_deviation_p" + std::to_string(int(p)));
  for (const auto& s : states) {
    if (targets.size() != s.c.size()) throw ArgumentError("lp_decay_series: one target per species");
    double total = 0;
    for (std::size_t i = 0; i < s.c.size(); ++i) {
      ScalarField d = s.c[i];
      d += -targets[i];
      total += fields::lp_norm(d, p);
    }
    out.push(s.t, total);
  }
  return out;
}

/// Means (torus, blocking) or Dirichlet data, the natural decay targets.
inline std::vector<double> equilibrium_targets(const SystemState& s) {
  std::vector<double> t;
  for (std::size_t i = 0; i < s.c.size(); ++i)
    t.push_back(s.params[i].bc == BoundaryKind::Dirichlet ? s.params[i].gamma : fields::mean(s.c[i]));
  return t;
}

// ------------------------------------------------------ Lipschitz estimate

struct LipschitzReport {
  ObservableSeries ratio{"distance_ratio"};
  ObservableSeries bound{"exp_kappa"};
  bool exact_match = false;  // identical initial data
  bool holds = true;
  double worst_margin = 0;  // max of ratio / (C exp(kappa))
};

/// Integrand of the growth exponent: sum_i (||c1_i||^2 + ||c1_i||^4
/// + ||c2_i||_{L^4}^4) + ||grad Phi2||_inf^2 + ||grad u2||^2.
inline double lipschitz_integrand(const SystemState& a, const SystemState& b) {
  double v = 0;
  for (std::size_t i = 0; i < a.c.size(); ++i) {
    double n2 = fields::l2_norm(a.c[i]);
    double n4 = fields::lp_norm(b.c[i], 4.0);
    v += n2 * n2 + n2 * n2 * n2 * n2 + n4 * n4 * n4 * n4;
  }
  double gphi = fields::lp_norm(fields::gradient(b.phi), INFINITY);
  double gu = fields::h_seminorm(b.u, 1);
  return v + gphi * gphi + gu * gu;
}

/// r(t) = ||w1 - w2||^2 / ||w1(0) - w2(0)||^2 against C exp(kappa(t)),
/// kappa the trapezoid integral of the integrand (integrand constant 1).
inline LipschitzReport lipschitz_growth_check(std::span<const SystemState> traj1,
                                              std::span<const SystemState> traj2,
                                              double C = 2.0) {
  if (traj1.size() != traj2.size() || traj1.empty())
    throw ArgumentError("lipschitz_growth_check: trajectories must be nonempty and aligned");
  LipschitzReport rep;
  const double d0 = state_distance_sq(traj1[0], traj2[0]);
  if (d0 == 0) {
    rep.exact_match = true;
    for (std::size_t n = 0; n < traj1.size(); ++n)
      if (state_distance_sq(traj1[n], traj2[n]) != 0) rep.holds = false;
    return rep;
  }
  double kappa = 0;
  double prev = lipschitz_integrand(traj1[0], traj2[0]);
  for (std::size_t n = 0; n < traj1.size(); ++n) {
    if (n > 0) {
      double cur = lipschitz_integrand(traj1[n], traj2[n]);
      kappa += 0.5 * (prev + cur) * (traj1[n].t - traj1[n - 1].t);
      prev = cur;
    }
    double r = state_distance_sq(traj1[n], traj2[n]) / d0;
    double b = std::exp(kappa);
    rep.ratio.push(traj1[n].t, r);
    rep.bound.push(traj1[n].t, std::isfinite(b) ? b : std::numeric_limits<double>::max());
    double margin = r / (C * b);
    rep.worst_margin = std::max(rep.worst_margin, margin);
    if (margin > 1.0) rep.holds = false;
  }
  return rep;
}

}  // namespace obs
}  // namespace esnp
