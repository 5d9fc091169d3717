#pragma once

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "esnp/dynamics.hpp"
#include "esnp/ergodicity.hpp"
#include "esnp/harness/checkpoint.hpp"
#include "esnp/harness/config.hpp"
#include "esnp/harness/plot.hpp"
#include "esnp/initial_data.hpp"
#include "esnp/observables.hpp"
#include "esnp/picard.hpp"
#include "esnp/poisson.hpp"

namespace esnp::harness {

enum ExitCode : int { kSuccess = 0, kNumericalFailure = 1, kConfigFailure = 2 };

/// Timestamped, append-only log. The only place wall-clock time appears.
class RunLog {
 public:
  explicit RunLog(const std::filesystem::path& path) : out_(path, std::ios::app) {}

  void operator()(const std::string& msg) {
    auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    out_ << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ") << " " << msg << "\n";
    out_.flush();
  }

 private:
  std::ofstream out_;
};

// ------------------------------------------------------------ state builder

inline VectorField body_force(const Grid& g, const ForceSpec& f) {
  if (f.kind == "taylor_green") return presets::taylor_green(g, f.amplitude);
  if (f.kind == "single_mode") return presets::single_mode(g, f.kx, f.ky, f.amplitude);
  if (f.kind == "bump") return presets::bump(g, f.amplitude);
  return VectorField(g);
}

inline std::filesystem::path mode_cache_dir() {
  const char* dir = std::getenv("ESNP_CACHE_DIR");
  return dir ? std::filesystem::path(dir) : std::filesystem::path{};
}

/// Initial state for `init`, carrying the configured noise, force, model
/// options and the noise stream derived from the run seed.
inline SystemState build_state(const RunConfig& c, const InitSpec& init) {
  Grid g(c.nx, c.ny, c.domain);
  InitialDataConfig idc;
  idc.params = c.species;
  idc.means = c.means;
  idc.epsilon = init.epsilon;
  idc.shape = init.shape;
  idc.perturbed = init.perturbed;
  idc.velocity_amplitude = init.velocity;
  idc.potential_gamma = c.potential_gamma;
  idc.seed = init.seed;
  SystemState s = make_initial_data(init.kind, g, idc);
  if (c.noise_modes > 0) s.noise = make_noise(g, c.noise_amplitudes, mode_cache_dir());
  s.f = body_force(g, c.force);
  s.options = c.model;
  s.rng = RngStream::derive(c.seed, 0);
  return s;
}

// ------------------------------------------------------------------ outputs

class Outputs {
 public:
  Outputs(const RunConfig& cfg, std::filesystem::path dir) : cfg_(cfg), dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
  }

  const std::filesystem::path& dir() const { return dir_; }

  nlohmann::json meta() const {
    return {{"config_hash", config_hash(cfg_)},
            {"seed", cfg_.seed},
            {"experiment", to_string(cfg_.experiment)},
            {"clamp_negative", cfg_.model.clamp_negative},
            {"nonlinear", cfg_.model.nonlinear}};
  }

  void series(const ObservableSeries& s) const {
    ObservableSeries copy = s;
    copy.set_run_id(config_hash(cfg_));
    write_csv(copy, dir_ / (s.name() + ".csv"), meta());
  }

  /// Multi-column table; rows are written with %.17g.
  void table(const std::string& name, const std::vector<std::string>& columns,
             const std::vector<std::vector<double>>& rows) const {
    std::ofstream out(dir_ / (name + ".csv"));
    if (!out) throw Error("cannot write " + (dir_ / (name + ".csv")).string());
    nlohmann::json head = meta();
    head["name"] = name;
    out << "# " << head.dump() << "\n";
    for (std::size_t k = 0; k < columns.size(); ++k) out << (k ? "," : "") << columns[k];
    out << "\n";
    char buf[40];
    for (const auto& row : rows) {
      for (std::size_t k = 0; k < row.size(); ++k) {
        std::snprintf(buf, sizeof buf, "%.17g", row[k]);
        out << (k ? "," : "") << buf;
      }
      out << "\n";
    }
  }

  void report(const std::string& status, const nlohmann::json& results, const std::string& failure = {}) const {
    nlohmann::json j = meta();
    j["status"] = status;
    j["config"] = cfg_.resolved;
    j["results"] = results;
    if (!failure.empty()) j["failure"] = failure;
    std::ofstream out(dir_ / "report.json");
    if (!out) throw Error("cannot write report.json");
    out << j.dump(2) << "\n";
  }

  void state(const SystemState& s, const std::string& name) const {
    std::vector<ScalarField> f{s.u.x, s.u.y, s.phi};
    for (const auto& c : s.c) f.push_back(c);
    io::write_fields((dir_ / name).string(), f);
  }

 private:
  const RunConfig& cfg_;
  std::filesystem::path dir_;
};

// ---------------------------------------------------------------- simulate

namespace detail {

inline const std::vector<std::string>& simulate_series_names() {
  static const std::vector<std::string> names{"kinetic_energy", "potential_energy", "entropy",
                                              "deviation_sq",   "charge_sq",        "divergence_l2",
                                              "min_concentration"};
  return names;
}

/// The divergence the velocity update keeps at zero: spectral on the
/// torus, the centered interior divergence of the discrete projection on
/// the square.
inline double divergence_norm(const VectorField& u) {
  return fields::l2_norm(u.grid().is_torus() ? fields::divergence(u) : stokes::discrete_divergence(u));
}

inline void record_diagnostics(const SystemState& s, std::vector<ObservableSeries>& series) {
  double v[] = {obs::kinetic_energy(s),
                obs::potential_energy(s),
                s.c.empty() ? 0.0 : obs::entropy(s).value,
                obs::deviation_sq(s.c),
                s.c.empty() ? 0.0 : obs::charge_sq(s),
                divergence_norm(s.u),
                s.c.empty() ? 0.0 : esnp::detail::min_over_species(s.c)};
  for (std::size_t k = 0; k < series.size(); ++k) series[k].push(s.t, v[k]);
}

inline nlohmann::json simulate_loop(const RunConfig& cfg, const Outputs& out, SystemState s,
                                    std::vector<ObservableSeries> series, RunLog& log) {
  const long total = ergo::steps_for(cfg.T, cfg.dt);
  if (series.empty()) {
    for (const auto& n : simulate_series_names()) series.emplace_back(n);
    record_diagnostics(s, series);
  }
  std::string failure;
  try {
    while (s.steps < total) {
      s = step(s, cfg.dt);
      if (s.steps % cfg.record_every == 0 || s.steps == total) record_diagnostics(s, series);
      if (cfg.checkpoint_every > 0 && s.steps % cfg.checkpoint_every == 0 && s.steps < total) {
        write_checkpoint(out.dir() / "checkpoint", cfg, s, series);
        log("checkpoint at step " + std::to_string(s.steps));
      }
    }
  } catch (const Error& e) {
    failure = e.what();
  }
  for (const auto& x : series) out.series(x);
  out.state(s, "final_state.bin");
  nlohmann::json r{{"steps", s.steps}, {"t", s.t}, {"clamped", s.clamped}};
  for (const auto& x : series) r["final"][x.name()] = x.back().value;
  if (!failure.empty()) {
    out.report("numerical_failure", r, failure);
    throw BlowUpError(failure, s.steps);
  }
  out.report("ok", r);
  return r;
}

}  // namespace detail

inline nlohmann::json run_simulate(const RunConfig& cfg, const Outputs& out, RunLog& log) {
  return detail::simulate_loop(cfg, out, build_state(cfg, cfg.init), {}, log);
}

// ------------------------------------------------------------------- decay

inline nlohmann::json run_decay(const RunConfig& cfg, const Outputs& out, RunLog&) {
  SystemState s = build_state(cfg, cfg.init);
  const long steps = ergo::steps_for(cfg.T, cfg.dt);
  const auto targets = obs::equilibrium_targets(s);
  ObservableSeries dev("deviation_sq"), charge("charge_sq"), lp("lp_deviation");
  auto record = [&](const SystemState& x) {
    dev.push(x.t, obs::deviation_sq(x.c));
    charge.push(x.t, obs::charge_sq(x));
    lp.push(x.t, obs::lp_decay_series(std::span<const SystemState>(&x, 1), cfg.decay_p, targets)[0].value);
  };
  record(s);
  for (long n = 1; n <= steps; ++n) {
    s = step(s, cfg.dt);
    if (n % cfg.record_every == 0 || n == steps) record(s);
  }
  out.series(dev);
  out.series(charge);
  out.series(lp);
  nlohmann::json r;
  const double t_half = 0.5 * cfg.T;
  auto fit = obs::fit_decay_rate(dev, t_half, cfg.T);
  r["fit"] = {{"rate", fit.rate}, {"r_squared", fit.r_squared}, {"points", fit.points}};
  double minD = INFINITY;
  for (const auto& p : s.params) minD = std::min(minD, p.D);
  if (s.grid().is_torus() && std::isfinite(minD)) r["heat_rate_lowest_mode"] = 2 * minD;
  bool monotone = true;
  for (std::size_t k = 1; k < lp.size(); ++k)
    if (lp[k].t >= t_half && lp[k].value > lp[k - 1].value) monotone = false;
  r["lp_monotone_second_half"] = monotone;
  out.report("ok", r);
  return r;
}

// ------------------------------------------------------------------ picard

inline nlohmann::json run_picard(const RunConfig& cfg, const Outputs& out, RunLog&) {
  SystemState s0 = build_state(cfg, cfg.init);
  auto res = picard_solve(s0, cfg.picard_T0, cfg.dt, cfg.picard_m_max, cfg.picard_tol);
  std::vector<std::vector<double>> rows;
  for (std::size_t m = 0; m < res.distances.size(); ++m) {
    double ratio = m > 0 && res.distances[m - 1] > 0 ? res.distances[m] / res.distances[m - 1] : NAN;
    rows.push_back({double(m + 1), res.distances[m], ratio});
  }
  out.table("picard_distances", {"iterate", "distance", "ratio"}, rows);

  // direct integrator on the same noise path
  double gap = 0;
  SystemState d = s0;
  for (std::size_t n = 1; n < res.limit.size(); ++n) {
    d = step(d, cfg.dt);
    gap = std::max(gap, std::sqrt(obs::state_distance_sq(d, res.limit[n])));
  }
  nlohmann::json r{{"converged", res.converged},
                   {"iterations", res.iterations},
                   {"sup_l2_gap_to_direct", gap},
                   {"final_distance", res.distances.empty() ? 0.0 : res.distances.back()}};
  out.report("ok", r);
  return r;
}

// -------------------------------------------------------------- identities

inline nlohmann::json run_identities(const RunConfig& cfg, const Outputs& out, RunLog&) {
  std::vector<std::vector<double>> rows;
  double worst_c = 0, worst_t = 0;
  for (int n : cfg.identities_resolutions) {
    Grid g(n, n, Domain::Torus2Pi);
    const int band = n / 4;
    for (int k = 0; k < cfg.identities_samples; ++k) {
      RngStream seeds = RngStream::derive(cfg.seed, std::uint64_t(k));
      VectorField u = presets::curl_of(poisson::random_band_limited(g, band, seeds.next_u64()));
      ScalarField rho = poisson::random_band_limited(g, band, seeds.next_u64());
      ScalarField sigma = poisson::random_band_limited(g, band, seeds.next_u64());
      sigma += 2.0 * fields::lp_norm(sigma, INFINITY);
      ScalarField phi = poisson::solve_poisson_periodic(rho);
      double a = obs::cancellation_residual_velocity(u, rho, phi).residual;
      double b = obs::two_species_identity_residual(rho, sigma, phi).residual;
      rows.push_back({double(n), double(k), a, b});
      worst_c = std::max(worst_c, a);
      worst_t = std::max(worst_t, b);
    }
  }
  out.table("identities", {"resolution", "sample", "cancellation", "two_species"}, rows);
  nlohmann::json r{{"max_cancellation_residual", worst_c}, {"max_two_species_residual", worst_t}};
  out.report("ok", r);
  return r;
}

// ---------------------------------------------------------------- elliptic

inline nlohmann::json run_elliptic(const RunConfig& cfg, const Outputs& out, RunLog&) {
  auto rep = poisson::elliptic_ratio_test(cfg.elliptic_samples, cfg.elliptic_resolutions, cfg.seed,
                                          cfg.elliptic_band);
  std::vector<std::vector<double>> rows;
  for (const auto& s : rep.samples) rows.push_back({double(s.resolution), double(s.sample_index), s.ratio});
  out.table("elliptic_samples", {"resolution", "sample", "ratio"}, rows);
  nlohmann::json r{{"max_ratio", rep.max_ratio}, {"mean_ratio", rep.mean_ratio}};
  double lo = INFINITY, hi = 0;
  for (const auto& [n, m] : rep.max_ratio_by_resolution) {
    r["max_ratio_by_resolution"][std::to_string(n)] = m;
    lo = std::min(lo, m);
    hi = std::max(hi, m);
  }
  r["spread"] = hi / lo;
  out.report("ok", r);
  return r;
}

// ------------------------------------------------------ ergodicity wrappers

inline nlohmann::json run_kb(const RunConfig& cfg, const Outputs& out, RunLog&) {
  ergo::KbConfig k;
  k.initial_a = build_state(cfg, cfg.init);
  k.initial_b = build_state(cfg, cfg.init_b);
  k.T_list = cfg.kb_T_list;
  k.n_paths = cfg.kb_paths;
  k.seed = cfg.seed;
  k.dt = cfg.dt;
  k.sample_every = cfg.kb_sample_every;
  k.threads = cfg.threads;
  auto rep = ergo::kb_convergence_experiment(k);
  nlohmann::json r;
  for (const auto& o : rep.observables) {
    std::vector<std::vector<double>> rows;
    nlohmann::json e = nlohmann::json::array();
    for (const auto& x : o.entries) {
      rows.push_back({x.T, x.mean_a, x.mean_b, x.discrepancy, x.std_error});
      e.push_back({{"T", x.T}, {"mean_a", x.mean_a}, {"mean_b", x.mean_b}, {"discrepancy", x.discrepancy},
                   {"std_error", x.std_error}});
    }
    out.table("kb_" + ergo::to_string(o.observable), {"T", "mean_a", "mean_b", "discrepancy", "std_error"}, rows);
    r["observables"][ergo::to_string(o.observable)] = {{"entries", e}, {"long_run_mean", o.long_run_mean}};
  }
  r["failures"] = rep.failures;
  out.report(rep.failures.empty() ? "ok" : "partial", r);
  return r;
}

inline nlohmann::json run_couple(const RunConfig& cfg, const Outputs& out, RunLog&) {
  ergo::CouplingConfig k;
  k.primary = build_state(cfg, cfg.init);
  k.shadow = build_state(cfg, cfg.init_b);
  k.lambda = cfg.couple_lambda;
  k.n_modes = std::size_t(cfg.couple_modes);
  k.k_budget = cfg.couple_budget;
  k.T = cfg.T;
  k.dt = cfg.dt;
  k.n_paths = cfg.couple_paths;
  k.seed = cfg.seed;
  k.threshold = cfg.couple_threshold;
  k.record_every = cfg.record_every;
  k.threads = cfg.threads;
  auto rep = ergo::coupling_experiment(k);
  std::vector<std::vector<double>> rows;
  for (std::size_t p = 0; p < rep.paths.size(); ++p) {
    const auto& x = rep.paths[p];
    rows.push_back({double(p), x.q0, x.qT, double(x.contracted), double(x.fired), x.tau});
    if (p < 8 && x.failure.empty()) {
      ObservableSeries q = x.Q;
      char name[32];
      std::snprintf(name, sizeof name, "Q_path_%03zu", p);
      ObservableSeries named(name);
      for (const auto& smp : q.samples()) named.push(smp.t, smp.value);
      out.series(named);
    }
  }
  out.table("coupling_paths", {"path", "Q0", "QT", "contracted", "fired", "tau"}, rows);
  nlohmann::json r{{"fraction_contracted", rep.fraction_contracted},
                   {"fired_fraction", rep.fired_fraction},
                   {"failed", rep.failed}};
  out.report("ok", r);
  return r;
}

inline nlohmann::json run_expergo(const RunConfig& cfg, const Outputs& out, RunLog&) {
  ergo::ExpErgoConfig k;
  k.start = build_state(cfg, cfg.init);
  k.reference = build_state(cfg, cfg.init_b);
  k.t_grid = cfg.expergo_t_grid;
  k.n_paths = cfg.expergo_paths;
  k.burn_in = cfg.expergo_burn_in;
  k.spacing = cfg.expergo_spacing;
  k.reference_chains = cfg.expergo_chains;
  k.dt = cfg.dt;
  k.seed = cfg.seed;
  k.threads = cfg.threads;
  auto rep = ergo::exp_ergodicity_experiment(k);
  out.series(rep.W);
  if (!rep.W_control.empty()) out.series(rep.W_control);
  nlohmann::json r{{"noise_floor", rep.noise_floor},
                   {"noise_floor_band", rep.noise_floor_band},
                   {"fit", {{"rate", rep.fit.rate}, {"r_squared", rep.fit.r_squared}}},
                   {"fit_valid", rep.fit_valid},
                   {"decreasing_beyond_floor", rep.decreasing_beyond_floor},
                   {"control_at_floor", rep.control_at_floor},
                   {"metric", "W1 on a one-dimensional observable marginal (lower-bound proxy)"}};
  out.report("ok", r);
  return r;
}

inline nlohmann::json run_moments(const RunConfig& cfg, const Outputs& out, RunLog&) {
  ergo::MomentConfig k;
  k.initial = build_state(cfg, cfg.init);
  k.kind = cfg.moments_kind;
  k.eta = cfg.moments_eta;
  k.T = cfg.T;
  k.dt = cfg.dt;
  k.record_every = cfg.record_every;
  k.n_paths = cfg.moments_paths;
  k.seed = cfg.seed;
  k.threads = cfg.threads;
  auto rep = ergo::moment_monitor(k);
  out.series(rep.mean);
  out.series(rep.std_error);
  nlohmann::json r{{"kind", ergo::to_string(cfg.moments_kind)},
                   {"slope", rep.slope},
                   {"slope_stderr", rep.slope_stderr},
                   {"failed", rep.failed},
                   {"noise_norm_sq", k.initial->noise.norm_sq()}};
  if (cfg.moments_kind == ergo::MomentKind::ChargeExp) r["eta_cap"] = ergo::charge_exp_eta_cap(k.initial->noise);
  out.report("ok", r);
  return r;
}

// --------------------------------------------------------------- dispatch

inline std::filesystem::path output_dir(const RunConfig& cfg) { return cfg.output; }

namespace detail {

inline int guarded(const std::filesystem::path& dir, const std::function<void(RunLog&)>& body,
                   std::ostream& err) {
  std::filesystem::create_directories(dir);
  RunLog log(dir / "run.log");
  try {
    body(log);
    log("finished");
    return kSuccess;
  } catch (const ConfigError& e) {
    log(std::string("config error: ") + e.what());
    err << "config error";
    if (e.line() > 0) err << " (line " << e.line() << ")";
    err << ": " << e.what() << "\n";
    return kConfigFailure;
  } catch (const ArgumentError& e) {
    log(std::string("invalid parameters: ") + e.what());
    err << "invalid parameters: " << e.what() << "\n";
    return kConfigFailure;
  } catch (const Error& e) {
    log(std::string("numerical failure: ") + e.what());
    err << "numerical failure: " << e.what() << "\n";
    return kNumericalFailure;
  }
}

}  // namespace detail

/// Runs the configured experiment, writing CSV series, report.json,
/// plot scripts and run.log under cfg.output.
inline int run(const RunConfig& cfg, std::ostream& err = std::cerr) {
  const auto dir = output_dir(cfg);
  return detail::guarded(
      dir,
      [&](RunLog& log) {
        log("start " + to_string(cfg.experiment) + " config_hash " + config_hash(cfg));
        Outputs out(cfg, dir);
        {
          std::ofstream f(dir / "config.resolved");
          f << cfg.full_text();
        }
        switch (cfg.experiment) {
          case Experiment::Simulate: run_simulate(cfg, out, log); break;
          case Experiment::Decay: run_decay(cfg, out, log); break;
          case Experiment::Picard: run_picard(cfg, out, log); break;
          case Experiment::Identities: run_identities(cfg, out, log); break;
          case Experiment::Elliptic: run_elliptic(cfg, out, log); break;
          case Experiment::Kb: run_kb(cfg, out, log); break;
          case Experiment::Couple: run_couple(cfg, out, log); break;
          case Experiment::Expergo: run_expergo(cfg, out, log); break;
          case Experiment::Moments: run_moments(cfg, out, log); break;
        }
        plot_emit(dir);
      },
      err);
}

/// Continues a simulate run from its checkpoint sidecar. Outputs are the
/// ones the uninterrupted run would have written.
inline int resume(const std::filesystem::path& sidecar, std::ostream& err = std::cerr) {
  nlohmann::json j;
  RunConfig cfg;
  try {
    j = read_checkpoint_json(sidecar);
    cfg = parse_config(j.at("config").get<std::string>());
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigFailure;
  } catch (const nlohmann::json::exception& e) {
    err << "config error: malformed checkpoint: " << e.what() << "\n";
    return kConfigFailure;
  }
  if (cfg.experiment != Experiment::Simulate) {
    err << "config error: only simulate runs are checkpointed\n";
    return kConfigFailure;
  }
  const auto dir = output_dir(cfg);
  return detail::guarded(
      dir,
      [&](RunLog& log) {
        log("resume from " + sidecar.string() + " at step " + std::to_string(j.at("step").get<long>()));
        Outputs out(cfg, dir);
        SystemState s = build_state(cfg, cfg.init);
        restore_state(sidecar, j, s);
        detail::simulate_loop(cfg, out, std::move(s), restore_series(j), log);
        plot_emit(dir);
      },
      err);
}

}  // namespace esnp::harness
