#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "esnp/dynamics.hpp"
#include "esnp/ergodicity.hpp"
#include "esnp/initial_data.hpp"

namespace esnp::harness {

enum class Experiment { Simulate, Decay, Picard, Identities, Elliptic, Kb, Couple, Expergo, Moments };

inline std::string to_string(Experiment e) {
  static const char* names[] = {"simulate", "decay",  "picard",  "identities", "elliptic",
                                "kb",       "couple", "expergo", "moments"};
  return names[int(e)];
}

struct ForceSpec {
  std::string kind = "none";  // none | taylor_green | single_mode | bump
  double amplitude = 0;
  int kx = 1, ky = 0;
};

struct InitSpec {
  InitialKind kind = InitialKind::Neutral;
  double epsilon = 0.1;
  PerturbationShape shape = PerturbationShape::Random;
  std::vector<int> perturbed;  // 1-based in the file, 0-based here
  double velocity = 0;
  std::uint64_t seed = 0;
};

struct RunConfig {
  Experiment experiment = Experiment::Simulate;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  std::string output = "out";

  Domain domain = Domain::Torus2Pi;
  int nx = 64, ny = 64;
  double dt = 1e-3, T = 1.0;
  long record_every = 10;
  long checkpoint_every = 0;

  std::vector<SpeciesParams> species;
  std::vector<double> means;
  double potential_gamma = 0;
  InitSpec init, init_b;
  int noise_modes = 8;
  std::vector<double> noise_amplitudes;
  ForceSpec force;
  ModelOptions model;

  double decay_p = 4;
  double picard_T0 = 0.05, picard_tol = 1e-10;
  int picard_m_max = 30;
  int identities_samples = 50;
  std::vector<int> identities_resolutions{64, 128};
  int elliptic_samples = 100, elliptic_band = 0;
  std::vector<int> elliptic_resolutions{64, 128, 256};
  std::vector<double> kb_T_list{50, 100, 200};
  std::size_t kb_paths = 4;
  long kb_sample_every = 10;
  double couple_lambda = 64, couple_budget = 1, couple_threshold = 1e-6;
  int couple_modes = 16;
  std::size_t couple_paths = 64;
  std::vector<double> expergo_t_grid{1, 2, 4, 8};
  std::size_t expergo_paths = 100, expergo_chains = 8;
  double expergo_burn_in = 50, expergo_spacing = 1;
  ergo::MomentKind moments_kind = ergo::MomentKind::EnergyLinear;
  double moments_eta = 0;
  std::size_t moments_paths = 64;

  /// Every key with its resolved value.
  std::map<std::string, std::string> resolved;

  /// Resolved config without the keys that cannot change a numerical
  /// output (threads, output location, checkpoint cadence). This is the
  /// text behind config_hash.
  std::string canonical_text() const {
    std::string s;
    for (const auto& [k, v] : resolved)
      if (k != "run.threads" && k != "run.output" && k != "time.checkpoint_every") s += k + " = " + v + "\n";
    return s;
  }

  std::string full_text() const {
    std::string s;
    for (const auto& [k, v] : resolved) s += k + " = " + v + "\n";
    return s;
  }
};

/// FNV-1a 64-bit.
inline std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string config_hash(const RunConfig& c) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(c.canonical_text())));
  return buf;
}

namespace detail {

inline std::string trim(const std::string& s) {
  auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return {};
  auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

struct Entry {
  std::string value;
  int line = 0;
};

class Reader {
 public:
  explicit Reader(std::map<std::string, Entry> e) : entries_(std::move(e)) {}

  bool has(const std::string& k) const { return entries_.count(k) > 0; }
  int line(const std::string& k) const { return has(k) ? entries_.at(k).line : 0; }

  std::string str(const std::string& k, const std::string& def) {
    used_.insert(k);
    std::string v = has(k) ? entries_.at(k).value : def;
    resolved_[k] = v;
    return v;
  }

  double real(const std::string& k, double def) {
    std::string v = str(k, fmt(def));
    try {
      std::size_t pos = 0;
      double d = std::stod(v, &pos);
      if (pos != v.size()) throw std::invalid_argument(v);
      return d;
    } catch (const std::exception&) {
      throw ConfigError(k + ": expected a number, got '" + v + "'", line(k));
    }
  }

  long integer(const std::string& k, long def) {
    double d = real(k, double(def));
    if (d != std::floor(d)) throw ConfigError(k + ": expected an integer", line(k));
    return long(d);
  }

  std::uint64_t u64(const std::string& k, std::uint64_t def) {
    std::string v = str(k, std::to_string(def));
    try {
      std::size_t pos = 0;
      auto x = std::stoull(v, &pos);
      if (pos != v.size()) throw std::invalid_argument(v);
      return x;
    } catch (const std::exception&) {
      throw ConfigError(k + ": expected a nonnegative integer, got '" + v + "'", line(k));
    }
  }

  bool boolean(const std::string& k, bool def) {
    std::string v = str(k, def ? "true" : "false");
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError(k + ": expected true or false", line(k));
  }

  std::vector<double> reals(const std::string& k, const std::vector<double>& def) {
    std::string d;
    for (std::size_t i = 0; i < def.size(); ++i) d += (i ? "," : "") + fmt(def[i]);
    std::string v = str(k, d);
    std::vector<double> out;
    for (const auto& item : split_list(v)) {
      try {
        out.push_back(std::stod(item));
      } catch (const std::exception&) {
        throw ConfigError(k + ": bad list item '" + item + "'", line(k));
      }
    }
    std::string norm;
    for (std::size_t i = 0; i < out.size(); ++i) norm += (i ? "," : "") + fmt(out[i]);
    resolved_[k] = norm;
    return out;
  }

  std::vector<int> ints(const std::string& k, const std::vector<int>& def) {
    std::vector<double> d(def.begin(), def.end());
    std::vector<int> out;
    for (double x : reals(k, d)) {
      if (x != std::floor(x)) throw ConfigError(k + ": expected integers", line(k));
      out.push_back(int(x));
    }
    return out;
  }

  template <class E>
  E choice(const std::string& k, const std::string& def, const std::vector<std::pair<std::string, E>>& opts) {
    std::string v = str(k, def);
    for (const auto& [name, e] : opts)
      if (name == v) return e;
    std::string allowed;
    for (const auto& o : opts) allowed += (allowed.empty() ? "" : ", ") + o.first;
    throw ConfigError(k + ": unknown value '" + v + "' (allowed: " + allowed + ")", line(k));
  }

  void reject_unused() const {
    for (const auto& [k, e] : entries_)
      if (!used_.count(k)) throw ConfigError("unknown key '" + k + "'", e.line);
  }

  std::map<std::string, std::string> resolved() const { return resolved_; }

  /// Shortest of %.15g / %.17g that reads back exactly.
  static std::string fmt(double d) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.15g", d);
    if (std::strtod(buf, nullptr) != d) std::snprintf(buf, sizeof buf, "%.17g", d);
    return buf;
  }

 private:
  std::map<std::string, Entry> entries_;
  std::set<std::string> used_;
  std::map<std::string, std::string> resolved_;
};

inline InitSpec read_init(Reader& r, const std::string& sec, const InitSpec& def, std::uint64_t seed) {
  InitSpec s;
  s.kind = r.choice<InitialKind>(sec + ".kind",
                                 def.kind == InitialKind::Neutral                  ? "neutral"
                                 : def.kind == InitialKind::SteadyPlusPerturbation ? "steady_plus_perturbation"
                                                                                   : "two_species_paper",
                                 {{"neutral", InitialKind::Neutral},
                                  {"steady_plus_perturbation", InitialKind::SteadyPlusPerturbation},
                                  {"two_species_paper", InitialKind::TwoSpeciesPaper}});
  s.epsilon = r.real(sec + ".epsilon", def.epsilon);
  s.shape = r.choice<PerturbationShape>(
      sec + ".shape", def.shape == PerturbationShape::Random ? "random" : "lowest_mode",
      {{"random", PerturbationShape::Random}, {"lowest_mode", PerturbationShape::LowestMode}});
  std::vector<int> one_based;
  for (int i : def.perturbed) one_based.push_back(i + 1);
  for (int i : r.ints(sec + ".perturbed", one_based)) s.perturbed.push_back(i - 1);
  s.velocity = r.real(sec + ".velocity", def.velocity);
  s.seed = r.u64(sec + ".seed", seed);
  return s;
}

}  // namespace detail

/// Parses the line-oriented `section.key = value` format. '#' starts a
/// comment; lists are comma-separated. `overrides` replace (or add) keys
/// before defaults are resolved, as the command line does.
inline RunConfig parse_config(const std::string& text,
                              const std::map<std::string, std::string>& overrides = {}) {
  std::map<std::string, detail::Entry> entries;
  std::istringstream in(text);
  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    auto hash = raw.find('#');
    std::string line = detail::trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("expected 'key = value'", lineno);
    std::string key = detail::trim(line.substr(0, eq));
    std::string value = detail::trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("empty key", lineno);
    auto it = entries.find(key);
    if (it != entries.end())
      throw ConfigError("duplicate key '" + key + "' on lines " + std::to_string(it->second.line) +
                            " and " + std::to_string(lineno),
                        lineno);
    entries[key] = {value, lineno};
  }

  for (const auto& [k, v] : overrides) entries[k] = {v, 0};
  detail::Reader r(std::move(entries));
  RunConfig c;
  c.experiment = r.choice<Experiment>("run.experiment", "simulate",
                                      {{"simulate", Experiment::Simulate},
                                       {"decay", Experiment::Decay},
                                       {"picard", Experiment::Picard},
                                       {"identities", Experiment::Identities},
                                       {"elliptic", Experiment::Elliptic},
                                       {"kb", Experiment::Kb},
                                       {"couple", Experiment::Couple},
                                       {"expergo", Experiment::Expergo},
                                       {"moments", Experiment::Moments}});
  c.seed = r.u64("run.seed", 0);
  c.threads = unsigned(r.integer("run.threads", long(default_threads())));
  if (c.threads < 1) throw ConfigError("run.threads must be at least 1", r.line("run.threads"));
  c.output = r.str("run.output", "out");

  c.domain = r.choice<Domain>("grid.domain", "torus",
                              {{"torus", Domain::Torus2Pi}, {"square", Domain::UnitSquareDirichlet}});
  c.nx = int(r.integer("grid.nx", 64));
  c.ny = int(r.integer("grid.ny", c.nx));
  try {
    Grid probe(c.nx, c.ny, c.domain);
  } catch (const Error& e) {
    throw ConfigError(std::string("grid: ") + e.what(), r.line("grid.nx"));
  }

  c.dt = r.real("time.dt", 1e-3);
  c.T = r.real("time.T", 1.0);
  c.record_every = r.integer("time.record_every", 10);
  c.checkpoint_every = r.integer("time.checkpoint_every", 0);
  if (!(c.dt > 0)) throw ConfigError("time.dt must be positive", r.line("time.dt"));
  if (!(c.T >= 0)) throw ConfigError("time.T must be nonnegative", r.line("time.T"));
  if (c.record_every < 1) throw ConfigError("time.record_every must be >= 1", r.line("time.record_every"));
  if (c.checkpoint_every < 0) throw ConfigError("time.checkpoint_every must be >= 0", r.line("time.checkpoint_every"));
  {
    double n = std::round(c.T / c.dt);
    if (std::abs(n * c.dt - c.T) > 1e-9 * std::max(1.0, c.T))
      throw ConfigError("time.T must be a whole number of time.dt steps", r.line("time.T"));
  }

  const bool torus = c.domain == Domain::Torus2Pi;
  const long n_species = r.integer("species.count", 2);
  if (n_species < 0 || n_species > 16) throw ConfigError("species.count must lie in [0, 16]", r.line("species.count"));
  for (long i = 1; i <= n_species; ++i) {
    const std::string p = "species." + std::to_string(i) + ".";
    SpeciesParams sp;
    sp.D = r.real(p + "D", 1.0);
    sp.z = r.real(p + "z", n_species == 2 ? (i == 1 ? 1.0 : -1.0) : 0.0);
    sp.bc = r.choice<BoundaryKind>(p + "bc", torus ? "periodic" : "blocking",
                                   {{"periodic", BoundaryKind::Periodic},
                                    {"dirichlet", BoundaryKind::Dirichlet},
                                    {"blocking", BoundaryKind::Blocking}});
    sp.gamma = r.real(p + "gamma", 0.0);
    c.species.push_back(sp);
    c.means.push_back(r.real(p + "mean", 1.0));
    if (torus && sp.bc != BoundaryKind::Periodic)
      throw ConfigError(p + "bc: torus species must be periodic", r.line(p + "bc"));
    if (!torus && sp.bc == BoundaryKind::Periodic)
      throw ConfigError(p + "bc: square species must be dirichlet or blocking", r.line(p + "bc"));
    if (!(sp.D > 0)) throw ConfigError(p + "D must be positive", r.line(p + "D"));
    if (sp.gamma < 0) throw ConfigError(p + "gamma must be nonnegative", r.line(p + "gamma"));
  }
  c.potential_gamma = r.real("potential.gamma", 0.0);

  InitSpec base;
  c.init = detail::read_init(r, "init", base, c.seed);
  InitSpec alt = c.init;
  c.init_b = detail::read_init(r, "init_b", alt, c.seed + 1);

  c.noise_modes = int(r.integer("noise.modes", 8));
  double amp = r.real("noise.amplitude", 0.0);
  c.noise_amplitudes = r.reals("noise.amplitudes", std::vector<double>(std::size_t(std::max(0, c.noise_modes)), amp));
  if (int(c.noise_amplitudes.size()) != c.noise_modes)
    throw ConfigError("noise.amplitudes must list noise.modes values", r.line("noise.amplitudes"));

  c.force.kind = r.str("force.kind", "none");
  if (c.force.kind != "none" && c.force.kind != "taylor_green" && c.force.kind != "single_mode" &&
      c.force.kind != "bump")
    throw ConfigError("force.kind: unknown preset '" + c.force.kind + "'", r.line("force.kind"));
  c.force.amplitude = r.real("force.amplitude", 0.0);
  c.force.kx = int(r.integer("force.kx", 1));
  c.force.ky = int(r.integer("force.ky", 0));
  if (!torus && (c.force.kind == "taylor_green" || c.force.kind == "single_mode"))
    throw ConfigError("force.kind: periodic preset on the square", r.line("force.kind"));

  c.model.nonlinear = r.boolean("model.nonlinear", true);
  c.model.clamp_negative = r.boolean("model.clamp", false);

  c.decay_p = r.real("decay.p", 4);
  c.picard_T0 = r.real("picard.T0", 0.05);
  c.picard_m_max = int(r.integer("picard.m_max", 30));
  c.picard_tol = r.real("picard.tol", 1e-10);
  c.identities_samples = int(r.integer("identities.samples", 50));
  c.identities_resolutions = r.ints("identities.resolutions", {64, 128});
  c.elliptic_samples = int(r.integer("elliptic.samples", 100));
  c.elliptic_resolutions = r.ints("elliptic.resolutions", {64, 128, 256});
  c.elliptic_band = int(r.integer("elliptic.band", 0));
  c.kb_T_list = r.reals("kb.T_list", {50, 100, 200});
  c.kb_paths = std::size_t(r.integer("kb.paths", 4));
  c.kb_sample_every = r.integer("kb.sample_every", 10);
  c.couple_lambda = r.real("couple.lambda", 64);
  c.couple_modes = int(r.integer("couple.modes", 16));
  c.couple_budget = r.real("couple.budget", 1);
  c.couple_paths = std::size_t(r.integer("couple.paths", 64));
  c.couple_threshold = r.real("couple.threshold", 1e-6);
  c.expergo_t_grid = r.reals("expergo.t_grid", {1, 2, 4, 8});
  c.expergo_paths = std::size_t(r.integer("expergo.paths", 100));
  c.expergo_chains = std::size_t(r.integer("expergo.chains", 8));
  c.expergo_burn_in = r.real("expergo.burn_in", 50);
  c.expergo_spacing = r.real("expergo.spacing", 1);
  c.moments_kind = r.choice<ergo::MomentKind>("moments.kind", "energy_linear",
                                              {{"energy_linear", ergo::MomentKind::EnergyLinear},
                                               {"energy_quartic", ergo::MomentKind::EnergyQuartic},
                                               {"charge_exp", ergo::MomentKind::ChargeExp},
                                               {"torus_quadratic", ergo::MomentKind::TorusQuadratic},
                                               {"log_h1", ergo::MomentKind::LogH1}});
  c.moments_eta = r.real("moments.eta", 0);
  c.moments_paths = std::size_t(r.integer("moments.paths", 64));
  r.reject_unused();
  c.resolved = r.resolved();

  // feasibility of the neutrality relation before any compute
  if (!c.species.empty() && c.init.kind != InitialKind::TwoSpeciesPaper) {
    std::vector<double> m = c.means;
    for (std::size_t i = 0; i < m.size(); ++i)
      if (c.species[i].bc == BoundaryKind::Dirichlet) m[i] = c.species[i].gamma;
    esnp::detail::enforce_neutral_means(m, c.species);
  }
  return c;
}

}  // namespace esnp::harness
