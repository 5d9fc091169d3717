#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "esnp/dynamics.hpp"
#include "esnp/observables.hpp"
#include "esnp/parallel.hpp"

namespace esnp::ergo {

// -------------------------------------------------------------- averages

/// (1/T) times the trapezoid integral of the series over [0, T], with
/// linear interpolation at T.
inline double time_average(const ObservableSeries& s, double T) {
  if (!(T > 0)) throw ArgumentError("time_average: T must be positive");
  if (s.size() < 2 || s[0].t > 1e-12 * T || s.back().t < T * (1 - 1e-12))
    throw PreconditionError("time_average: series does not cover [0, " + std::to_string(T) + "]");
  double acc = 0;
  for (std::size_t k = 1; k < s.size(); ++k) {
    double a = s[k - 1].t, b = s[k].t;
    if (a >= T) break;
    double va = s[k - 1].value, vb = s[k].value;
    if (b > T) {
      vb = va + (vb - va) * (T - a) / (b - a);
      b = T;
    }
    acc += 0.5 * (va + vb) * (b - a);
  }
  return acc / T;
}

/// W1 between two empirical distributions of equal size: the mean
/// absolute difference of sorted samples. Longer lists are truncated.
inline double empirical_wasserstein_1d(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw ArgumentError("empirical_wasserstein_1d: empty sample list");
  const std::size_t n = std::min(a.size(), b.size());
  a.resize(n);
  b.resize(n);
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double s = 0;
  for (std::size_t k = 0; k < n; ++k) s += std::abs(a[k] - b[k]);
  return s / double(n);
}

// ----------------------------------------------------------- observables

enum class Observable { KineticEnergy, ChargeSq, DeviationSq, Entropy };

inline std::string to_string(Observable o) {
  switch (o) {
    case Observable::KineticEnergy: return "kinetic_energy";
    case Observable::ChargeSq: return "charge_sq";
    case Observable::DeviationSq: return "deviation_sq";
    case Observable::Entropy: return "entropy";
  }
  return "?";
}

inline double evaluate(Observable o, const SystemState& s) {
  switch (o) {
    case Observable::KineticEnergy: return obs::kinetic_energy(s);
    case Observable::ChargeSq: return obs::charge_sq(s);
    case Observable::DeviationSq: return obs::deviation_sq(s.c);
    case Observable::Entropy: return obs::entropy(s).value;
  }
  return 0;
}

inline const std::vector<Observable>& all_observables() {
  static const std::vector<Observable> v{Observable::KineticEnergy, Observable::ChargeSq,
                                         Observable::DeviationSq, Observable::Entropy};
  return v;
}

/// Advances `s` over `steps` steps, calling on_sample(state) at the start
/// and after every `every` steps.
template <class F>
SystemState run_recording(SystemState s, double dt, long steps, long every, F&& on_sample) {
  on_sample(s);
  for (long n = 1; n <= steps; ++n) {
    s = step(s, dt);
    if (n % every == 0) on_sample(s);
  }
  return s;
}

inline long steps_for(double T, double dt) {
  long n = std::lround(T / dt);
  if (std::abs(double(n) * dt - T) > 1e-9 * std::max(1.0, T))
    throw ArgumentError("horizon " + std::to_string(T) + " is not a multiple of dt");
  return n;
}

inline double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
}

inline double stderr_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0;
  double m = mean_of(v), ss = 0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / double(v.size() - 1) / double(v.size()));
}

// -------------------------------------------------------- Krylov-Bogoliubov

struct KbConfig {
  std::optional<SystemState> initial_a, initial_b;
  std::vector<double> T_list;
  std::size_t n_paths = 1;
  std::uint64_t seed = 0;
  double dt = 0.01;
  long sample_every = 1;
  unsigned threads = 1;
  std::vector<Observable> observables = all_observables();
};

struct KbEntry {
  double T;
  double mean_a;
  double mean_b;
  double discrepancy;  // |mean_a - mean_b|
  double std_error;  // of the paired difference
};

struct KbObservableReport {
  Observable observable;
  std::vector<KbEntry> entries;
  double long_run_mean = 0;  // average of both means at the largest T
};

struct KbReport {
  std::vector<KbObservableReport> observables;
  std::size_t n_paths = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> failures;
};

/// Time averages mu_T(phi) from two initial states. Path p drives both
/// initial states with the same noise stream derived from (seed, p).
inline KbReport kb_convergence_experiment(const KbConfig& cfg) {
  if (!cfg.initial_a || !cfg.initial_b) throw ArgumentError("kb experiment needs two initial states");
  if (cfg.T_list.empty()) throw ArgumentError("kb experiment needs a nonempty T list");
  for (std::size_t k = 1; k < cfg.T_list.size(); ++k)
    if (!(cfg.T_list[k] > cfg.T_list[k - 1])) throw ArgumentError("T list must be increasing");
  const double Tmax = cfg.T_list.back();
  const long steps = steps_for(Tmax, cfg.dt);
  const std::size_t nobs = cfg.observables.size(), nT = cfg.T_list.size();

  // mu[path][side][obs][T]
  using PathResult = std::vector<std::vector<std::vector<double>>>;
  std::vector<PathResult> mu(cfg.n_paths);
  std::vector<std::string> err(cfg.n_paths);
  parallel_for(cfg.n_paths, cfg.threads, [&](std::size_t p) {
    try {
      PathResult r(2, std::vector<std::vector<double>>(nobs, std::vector<double>(nT)));
      for (int side = 0; side < 2; ++side) {
        SystemState s = side == 0 ? *cfg.initial_a : *cfg.initial_b;
        s.rng = RngStream::derive(cfg.seed, p);
        std::vector<ObservableSeries> series;
        for (auto o : cfg.observables) series.emplace_back(to_string(o));
        run_recording(s, cfg.dt, steps, cfg.sample_every, [&](const SystemState& x) {
          for (std::size_t k = 0; k < nobs; ++k) series[k].push(x.t - s.t, evaluate(cfg.observables[k], x));
        });
        for (std::size_t k = 0; k < nobs; ++k)
          for (std::size_t j = 0; j < nT; ++j) r[side][k][j] = time_average(series[k], cfg.T_list[j]);
      }
      mu[p] = std::move(r);
    } catch (const Error& e) {
      err[p] = e.what();
    }
  });

  KbReport rep;
  rep.n_paths = cfg.n_paths;
  rep.seed = cfg.seed;
  for (std::size_t p = 0; p < cfg.n_paths; ++p)
    if (!err[p].empty()) rep.failures.push_back("path " + std::to_string(p) + ": " + err[p]);
  for (std::size_t k = 0; k < nobs; ++k) {
    KbObservableReport o{cfg.observables[k], {}, 0};
    for (std::size_t j = 0; j < nT; ++j) {
      std::vector<double> a, b, d;
      for (std::size_t p = 0; p < cfg.n_paths; ++p) {
        if (!err[p].empty()) continue;
        a.push_back(mu[p][0][k][j]);
        b.push_back(mu[p][1][k][j]);
        d.push_back(a.back() - b.back());
      }
      if (a.empty()) throw BlowUpError("every kb path failed", 0);
      double ma = mean_of(a), mb = mean_of(b);
      o.entries.push_back({cfg.T_list[j], ma, mb, std::abs(ma - mb), stderr_of(d)});
    }
    o.long_run_mean = 0.5 * (o.entries.back().mean_a + o.entries.back().mean_b);
    rep.observables.push_back(std::move(o));
  }
  return rep;
}

// ---------------------------------------------------------------- coupling

/// Q = ||U||^2 + ||R||^2 + ||S||^2 + ||grad Psi||^2 for two-species
/// pairs (R, S the charge and total-concentration gaps), otherwise
/// ||U||^2 + sum ||C_i||^2.
inline double coupling_energy(const SystemState& a, const SystemState& b) {
  VectorField du = a.u;
  du -= b.u;
  double q = obs::kinetic_energy(du);
  const bool two = a.c.size() == 2 && a.params[0].z == -a.params[1].z && a.params[0].z != 0;
  if (two) {
    ScalarField d1 = a.c[0], d2 = a.c[1];
    d1 -= b.c[0];
    d2 -= b.c[1];
    ScalarField R = d1, S = d1;
    R -= d2;
    S += d2;
    R *= a.params[0].z;  // z-weighted charge gap
    ScalarField dphi = a.phi;
    dphi -= b.phi;
    double nr = fields::l2_norm(R), ns = fields::l2_norm(S);
    q += nr * nr + ns * ns + obs::potential_energy(dphi);
  } else {
    for (std::size_t i = 0; i < a.c.size(); ++i) {
      ScalarField d = a.c[i];
      d -= b.c[i];
      double n = fields::l2_norm(d);
      q += n * n;
    }
  }
  return q;
}

struct CouplingConfig {
  std::optional<SystemState> primary, shadow;
  double lambda = 0;
  std::size_t n_modes = 0;
  double k_budget = INFINITY;
  double T = 1;
  double dt = 0.01;
  std::size_t n_paths = 64;
  std::uint64_t seed = 0;
  double threshold = 1e-6;
  long record_every = 1;
  unsigned threads = 1;
};

struct CouplingPath {
  ObservableSeries Q{"Q"};
  double q0 = 0, qT = 0;
  bool contracted = false;
  bool fired = false;
  double tau = INFINITY;
  double control_integral = 0;  // running integral compared against the budget
  std::string failure;
};

struct CouplingReport {
  std::vector<CouplingPath> paths;
  double fraction_contracted = 0;
  double fired_fraction = 0;
  std::size_t failed = 0;
};

inline CouplingReport coupling_experiment(const CouplingConfig& cfg) {
  if (!cfg.primary || !cfg.shadow) throw ArgumentError("coupling experiment needs a primary and a shadow state");
  const long steps = steps_for(cfg.T, cfg.dt);
  std::shared_ptr<const ModeBasis> basis;
  if (cfg.n_modes > 0) {
    if (cfg.primary->noise.basis && cfg.primary->noise.basis->modes.size() >= cfg.n_modes)
      basis = cfg.primary->noise.basis;
    else
      basis = std::make_shared<const ModeBasis>(mode_basis(cfg.primary->grid(), int(cfg.n_modes)));
  }
  CouplingReport rep;
  rep.paths.resize(cfg.n_paths);
  parallel_for(cfg.n_paths, cfg.threads, [&](std::size_t p) {
    CouplingPath& out = rep.paths[p];
    try {
      SystemState a = *cfg.primary, b = *cfg.shadow;
      a.rng = RngStream::derive(cfg.seed, p);
      b.noise = a.noise;
      ShadowControl ctrl{basis, cfg.n_modes, cfg.lambda, cfg.k_budget};
      out.q0 = coupling_energy(a, b);
      out.Q.push(0.0, out.q0);
      for (long n = 1; n <= steps; ++n) {
        shadow_step(a, b, cfg.dt, ctrl);
        if (n % cfg.record_every == 0 || n == steps) out.Q.push(a.t - cfg.primary->t, coupling_energy(a, b));
      }
      out.qT = out.Q.back().value;
      out.fired = ctrl.fired;
      out.control_integral = ctrl.integral;
      out.tau = ctrl.fired_at;
      out.contracted = out.qT < cfg.threshold * out.q0;
    } catch (const Error& e) {
      out.failure = e.what();
    }
  });
  std::size_t ok = 0, contracted = 0, fired = 0;
  for (const auto& p : rep.paths) {
    if (!p.failure.empty()) {
      ++rep.failed;
      continue;
    }
    ++ok;
    contracted += p.contracted;
    fired += p.fired;
  }
  // failed paths count against contraction
  rep.fraction_contracted = cfg.n_paths ? double(contracted) / double(cfg.n_paths) : 0;
  rep.fired_fraction = ok ? double(fired) / double(ok) : 0;
  return rep;
}

// --------------------------------------------------- exponential ergodicity

struct ExpErgoConfig {
  std::optional<SystemState> start;      // omega
  std::optional<SystemState> reference;  // seed state for the long-run chains
  Observable observable = Observable::KineticEnergy;
  std::vector<double> t_grid;
  std::size_t n_paths = 100;
  double burn_in = 50;
  double spacing = 1;
  std::size_t reference_chains = 8;
  double dt = 0.01;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  bool stationarity_control = true;
  std::size_t floor_splits = 20;
};

struct ExpErgoReport {
  ObservableSeries W{"wasserstein"};
  ObservableSeries W_control{"wasserstein_stationary"};
  double noise_floor = 0;       // mean W1 between independent stationary sample sets
  double noise_floor_band = 0;  // mean + 3 sd over splits
  obs::DecayFit fit;
  bool fit_valid = false;
  bool decreasing_beyond_floor = false;
  bool control_at_floor = false;
  std::vector<double> reference_samples;
};

namespace detail {

/// 2n stationary samples from `chains` chains after burn-in, spaced by
/// `spacing`; chain c uses the stream derived from (seed, 1e6 + c).
inline std::vector<double> long_run_samples(const ExpErgoConfig& cfg, std::size_t count) {
  const std::size_t chains = std::max<std::size_t>(1, cfg.reference_chains);
  const std::size_t per = (count + chains - 1) / chains;
  const long burn = steps_for(cfg.burn_in, cfg.dt), gap = steps_for(cfg.spacing, cfg.dt);
  std::vector<std::vector<double>> got(chains);
  parallel_for(chains, cfg.threads, [&](std::size_t c) {
    SystemState s = *cfg.reference;
    s.rng = RngStream::derive(cfg.seed, 1000000 + c);
    for (long n = 0; n < burn; ++n) s = step(s, cfg.dt);
    for (std::size_t k = 0; k < per; ++k) {
      for (long n = 0; n < gap; ++n) s = step(s, cfg.dt);
      got[c].push_back(evaluate(cfg.observable, s));
    }
  });
  // interleave so any prefix mixes all chains
  std::vector<double> out;
  for (std::size_t k = 0; k < per; ++k)
    for (std::size_t c = 0; c < chains; ++c) out.push_back(got[c][k]);
  out.resize(count);
  return out;
}

/// One long-run state to start the stationarity control from.
inline SystemState long_run_state(const ExpErgoConfig& cfg) {
  SystemState s = *cfg.reference;
  s.rng = RngStream::derive(cfg.seed, 2000000);
  const long burn = steps_for(cfg.burn_in, cfg.dt);
  for (long n = 0; n < burn; ++n) s = step(s, cfg.dt);
  s.t = cfg.start ? cfg.start->t : 0.0;
  return s;
}

inline std::vector<std::vector<double>> transition_samples(const ExpErgoConfig& cfg,
                                                           const SystemState& from,
                                                           std::uint64_t stream_offset) {
  const std::size_t nt = cfg.t_grid.size();
  std::vector<long> at;
  for (double t : cfg.t_grid) at.push_back(steps_for(t, cfg.dt));
  std::vector<std::vector<double>> per_path(cfg.n_paths, std::vector<double>(nt));
  parallel_for(cfg.n_paths, cfg.threads, [&](std::size_t p) {
    SystemState s = from;
    s.rng = RngStream::derive(cfg.seed, stream_offset + p);
    long done = 0;
    for (std::size_t j = 0; j < nt; ++j) {
      for (; done < at[j]; ++done) s = step(s, cfg.dt);
      per_path[p][j] = evaluate(cfg.observable, s);
    }
  });
  std::vector<std::vector<double>> by_time(nt, std::vector<double>(cfg.n_paths));
  for (std::size_t p = 0; p < cfg.n_paths; ++p)
    for (std::size_t j = 0; j < nt; ++j) by_time[j][p] = per_path[p][j];
  return by_time;
}

}  // namespace detail

/// W1(t) between the observable's law under P_t(omega, .) and its
/// long-run law, on the 1D marginal. The floor is W1 between two
/// disjoint stationary sample sets of the same size; the rate is fitted
/// on the points above the floor band.
inline ExpErgoReport exp_ergodicity_experiment(const ExpErgoConfig& cfg) {
  if (!cfg.start || !cfg.reference) throw ArgumentError("expergo needs start and reference states");
  if (cfg.n_paths < 100)
    throw UnderpoweredError("exp_ergodicity_experiment needs at least 100 samples per time, got " +
                            std::to_string(cfg.n_paths));
  if (cfg.t_grid.empty()) throw ArgumentError("expergo needs a nonempty time grid");
  for (std::size_t k = 1; k < cfg.t_grid.size(); ++k)
    if (!(cfg.t_grid[k] > cfg.t_grid[k - 1])) throw ArgumentError("time grid must be increasing");

  ExpErgoReport rep;
  const std::size_t n = cfg.n_paths;
  auto pool = detail::long_run_samples(cfg, 2 * n);
  std::vector<double> ref(pool.begin(), pool.begin() + std::ptrdiff_t(n));
  rep.reference_samples = ref;

  // noise floor from random disjoint halves of the pooled stationary samples
  std::vector<double> floors;
  RngStream shuffle(cfg.seed ^ 0x5eedf100d);
  for (std::size_t s = 0; s < cfg.floor_splits; ++s) {
    std::vector<double> v = pool;
    for (std::size_t i = v.size() - 1; i > 0; --i)
      std::swap(v[i], v[std::size_t(shuffle.uniform() * double(i + 1)) % (i + 1)]);
    floors.push_back(empirical_wasserstein_1d({v.begin(), v.begin() + std::ptrdiff_t(n)},
                                              {v.begin() + std::ptrdiff_t(n), v.end()}));
  }
  rep.noise_floor = mean_of(floors);
  rep.noise_floor_band = rep.noise_floor + 3 * stderr_of(floors) * std::sqrt(double(floors.size()));

  auto samples = detail::transition_samples(cfg, *cfg.start, 0);
  for (std::size_t j = 0; j < cfg.t_grid.size(); ++j)
    rep.W.push(cfg.t_grid[j], empirical_wasserstein_1d(samples[j], ref));

  bool dec = true;
  ObservableSeries above("w_above_floor");
  for (std::size_t j = 0; j < rep.W.size(); ++j) {
    bool at_floor = rep.W[j].value <= rep.noise_floor_band;
    if (!at_floor) above.push(rep.W[j].t, rep.W[j].value);
    if (j > 0 && !at_floor && !(rep.W[j].value < rep.W[j - 1].value)) dec = false;
    if (j > 0 && rep.W[j - 1].value <= rep.noise_floor_band && !at_floor) dec = false;
  }
  rep.decreasing_beyond_floor = dec;
  if (above.size() >= 2) {
    rep.fit = obs::fit_decay_rate(above);
    rep.fit_valid = true;
  } else if (above.size() == 1 && rep.W.size() >= 2) {
    // one point above the floor: secant to the first point at the floor
    ObservableSeries two("secant");
    two.push(above[0].t, above[0].value);
    for (std::size_t j = 0; j < rep.W.size(); ++j)
      if (rep.W[j].t > above[0].t) {
        two.push(rep.W[j].t, std::max(rep.W[j].value, 1e-300));
        break;
      }
    if (two.size() == 2) {
      rep.fit = obs::fit_decay_rate(two);
      rep.fit_valid = true;
    }
  }

  if (cfg.stationarity_control) {
    auto ctrl_samples = detail::transition_samples(cfg, detail::long_run_state(cfg), 3000000);
    rep.control_at_floor = true;
    for (std::size_t j = 0; j < cfg.t_grid.size(); ++j) {
      double w = empirical_wasserstein_1d(ctrl_samples[j], ref);
      rep.W_control.push(cfg.t_grid[j], w);
      if (w > rep.noise_floor_band) rep.control_at_floor = false;
    }
  }
  return rep;
}

// ---------------------------------------------------------- moment monitor

enum class MomentKind { EnergyLinear, EnergyQuartic, ChargeExp, TorusQuadratic, LogH1 };

inline std::string to_string(MomentKind k) {
  switch (k) {
    case MomentKind::EnergyLinear: return "energy_linear";
    case MomentKind::EnergyQuartic: return "energy_quartic";
    case MomentKind::ChargeExp: return "charge_exp";
    case MomentKind::TorusQuadratic: return "torus_quadratic";
    case MomentKind::LogH1: return "log_h1";
  }
  return "?";
}

/// Upper limit of eta for the charge exponential moment:
/// 1 / (4 ||(-Laplace)^{-1/2} g||^2).
inline double charge_exp_eta_cap(const NoiseSpec& g) {
  double v = g.inverse_sqrt_laplacian_norm_sq();
  return v > 0 ? 1.0 / (4.0 * v) : INFINITY;
}

struct MomentConfig {
  std::optional<SystemState> initial;
  MomentKind kind = MomentKind::EnergyLinear;
  double eta = 0;  // ChargeExp only
  double T = 1;
  double dt = 0.01;
  long record_every = 1;
  std::size_t n_paths = 64;
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

struct MomentReport {
  ObservableSeries mean{"ensemble_mean"};
  ObservableSeries std_error{"ensemble_stderr"};
  double slope = 0;  // of the mean (ChargeExp: of log mean)
  double slope_stderr = 0;
  std::size_t failed = 0;
  std::vector<std::vector<double>> paths;  // per path, per record
};

namespace detail {

inline double min_diffusivity(const SystemState& s) {
  double d = INFINITY;
  for (const auto& p : s.params) d = std::min(d, p.D);
  return std::isfinite(d) ? d : 0.0;
}

inline double energy(const SystemState& s) { return obs::kinetic_energy(s) + obs::potential_energy(s); }

inline double ols_slope(const std::vector<double>& t, const std::vector<double>& y) {
  double mt = mean_of(t), my = mean_of(y), stt = 0, sty = 0;
  for (std::size_t k = 0; k < t.size(); ++k) {
    stt += (t[k] - mt) * (t[k] - mt);
    sty += (t[k] - mt) * (y[k] - my);
  }
  return stt > 0 ? sty / stt : 0.0;
}

}  // namespace detail

/// Ensemble estimate of E[quantity](t) and its fitted growth slope, with a
/// bootstrap standard error (200 deterministic resamples over paths).
inline MomentReport moment_monitor(const MomentConfig& cfg) {
  if (!cfg.initial) throw ArgumentError("moment monitor needs an initial state");
  const long steps = steps_for(cfg.T, cfg.dt);
  const double D = detail::min_diffusivity(*cfg.initial);
  std::vector<std::vector<double>> vals(cfg.n_paths);
  std::vector<double> times;
  for (long n = 0; n <= steps; n += cfg.record_every) times.push_back(double(n) * cfg.dt);
  std::vector<char> ok(cfg.n_paths, 0);
  parallel_for(cfg.n_paths, cfg.threads, [&](std::size_t p) {
    try {
      SystemState s = *cfg.initial;
      s.rng = RngStream::derive(cfg.seed, p);
      double integral = 0;
      auto f_int = [&](const SystemState& x) {
        if (cfg.kind == MomentKind::ChargeExp) return obs::charge_sq(x);
        return 0.5 * std::pow(fields::h_seminorm(x.u, 1), 2) + D * obs::charge_sq(x);
      };
      double prev = f_int(s);
      auto record = [&](const SystemState& x) {
        switch (cfg.kind) {
          case MomentKind::EnergyLinear: return detail::energy(x);
          case MomentKind::EnergyQuartic: return std::pow(detail::energy(x), 2);
          case MomentKind::ChargeExp: return std::exp(0.5 * cfg.eta * D * integral);
          case MomentKind::TorusQuadratic: return integral;
          case MomentKind::LogH1: return std::log1p(std::pow(fields::h_seminorm(x.u, 1), 2));
        }
        return 0.0;
      };
      std::vector<double>& v = vals[p];
      v.push_back(record(s));
      for (long n = 1; n <= steps; ++n) {
        s = step(s, cfg.dt);
        double cur = f_int(s);
        integral += 0.5 * (prev + cur) * cfg.dt;
        prev = cur;
        if (n % cfg.record_every == 0) v.push_back(record(s));
      }
      ok[p] = 1;
    } catch (const Error&) {
    }
  });

  MomentReport rep;
  std::vector<std::size_t> good;
  for (std::size_t p = 0; p < cfg.n_paths; ++p) {
    if (ok[p])
      good.push_back(p);
    else
      ++rep.failed;
  }
  if (good.empty()) throw BlowUpError("every moment path failed", 0);
  const bool log_scale = cfg.kind == MomentKind::ChargeExp;
  auto curve = [&](const std::vector<std::size_t>& idx) {
    std::vector<double> m(times.size(), 0.0);
    for (std::size_t p : idx)
      for (std::size_t j = 0; j < times.size(); ++j) m[j] += vals[p][j] / double(idx.size());
    if (log_scale)
      for (double& x : m) x = std::log(x);
    return m;
  };
  auto m = curve(good);
  for (std::size_t j = 0; j < times.size(); ++j) {
    std::vector<double> col;
    for (std::size_t p : good) col.push_back(vals[p][j]);
    rep.mean.push(times[j], mean_of(col));
    rep.std_error.push(times[j], stderr_of(col));
  }
  rep.slope = detail::ols_slope(times, m);
  RngStream boot(cfg.seed ^ 0xB007);
  std::vector<double> slopes;
  for (int b = 0; b < 200; ++b) {
    std::vector<std::size_t> idx(good.size());
    for (auto& i : idx) i = good[std::min(good.size() - 1, std::size_t(boot.uniform() * double(good.size())))];
    slopes.push_back(detail::ols_slope(times, curve(idx)));
  }
  rep.slope_stderr = stderr_of(slopes) * std::sqrt(double(slopes.size()));
  for (std::size_t p : good) rep.paths.push_back(vals[p]);
  return rep;
}

// ------------------------------------------------------ equal valence decay

struct EqualValenceReport {
  ObservableSeries series{"decay_quantity"};
  bool monotone = true;
  obs::DecayFit fit;
};

/// f = g = 0 and equal |z_i|, equal D_i: on the square ||rho||^2 must
/// decay monotonically; on the torus sum ||c_i - mean||^2. The fit uses
/// the second half of the run.
inline EqualValenceReport equal_valence_decay_check(SystemState s, double dt, double T) {
  if (s.c.empty()) throw ArgumentError("equal valence check needs species");
  const double z = std::abs(s.params[0].z), D = s.params[0].D;
  for (const auto& p : s.params)
    if (std::abs(p.z) != z || p.D != D)
      throw ArgumentError("equal valence check needs equal |z_i| and equal D_i");
  if (s.noise.size() > 0)
    for (double a : s.noise.amplitudes)
      if (a != 0) throw ArgumentError("equal valence check needs g = 0");
  if (fields::l2_norm(s.f) != 0) throw ArgumentError("equal valence check needs f = 0");
  const bool torus = s.grid().is_torus();
  auto q = [&](const SystemState& x) { return torus ? obs::deviation_sq(x.c) : obs::charge_sq(x); };
  EqualValenceReport rep;
  const long steps = steps_for(T, dt);
  double prev = q(s);
  rep.series.push(s.t, prev);
  const double t0 = s.t;
  for (long n = 1; n <= steps; ++n) {
    s = step(s, dt);
    double v = q(s);
    if (v > prev * (1 + 1e-12)) rep.monotone = false;
    rep.series.push(s.t, v);
    prev = v;
  }
  if (rep.series[0].value > 0 && rep.series.back().value > 0)
    rep.fit = obs::fit_decay_rate(rep.series, t0 + 0.5 * T, t0 + T);
  return rep;
}

}  // namespace esnp::ergo
