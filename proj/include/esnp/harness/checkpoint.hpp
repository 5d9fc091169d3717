#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <string>

#include "json.hpp"

#include "esnp/dynamics.hpp"
#include "esnp/field_io.hpp"
#include "esnp/harness/config.hpp"
#include "esnp/observables.hpp"

namespace esnp::harness {

namespace detail {

inline nlohmann::json series_json(const ObservableSeries& s) {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& x : s.samples()) a.push_back({x.t, x.value});
  return {{"name", s.name()}, {"samples", a}};
}

inline ObservableSeries series_from_json(const nlohmann::json& j) {
  ObservableSeries s(j.at("name").get<std::string>());
  for (const auto& x : j.at("samples")) s.push(x.at(0).get<double>(), x.at(1).get<double>());
  return s;
}

}  // namespace detail

/// Everything needed to continue a simulate run: the evolving fields
/// (binary, beside the sidecar), the clock, the noise stream position,
/// the resolved config and the diagnostics recorded so far.
inline void write_checkpoint(const std::filesystem::path& dir, const RunConfig& cfg, const SystemState& s,
                             const std::vector<ObservableSeries>& series) {
  std::filesystem::create_directories(dir);
  std::vector<ScalarField> fields{s.u.x, s.u.y, s.phi};
  for (const auto& c : s.c) fields.push_back(c);
  io::write_fields((dir / "checkpoint.bin").string(), fields);

  nlohmann::json j;
  j["config"] = cfg.full_text();
  j["config_hash"] = config_hash(cfg);
  j["fields"] = "checkpoint.bin";
  j["t"] = s.t;
  j["step"] = s.steps;
  j["rng"] = {{"key", s.rng.key()}, {"counter", s.rng.counter()}};
  j["min_concentration"] = s.min_concentration;
  j["clamped"] = s.clamped;
  j["params"] = nlohmann::json::array();
  for (const auto& p : s.params)
    j["params"].push_back({{"D", p.D}, {"z", p.z}, {"bc", to_string(p.bc)}, {"gamma", p.gamma}});
  j["noise"] = s.noise.amplitudes;
  nlohmann::json ser = nlohmann::json::array();
  for (const auto& x : series) ser.push_back(detail::series_json(x));
  j["series"] = ser;

  // write-then-rename keeps the previous checkpoint valid on interruption
  auto tmp = dir / "checkpoint.json.tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw Error("cannot write " + tmp.string());
    out << j.dump(2) << "\n";
  }
  std::filesystem::rename(tmp, dir / "checkpoint.json");
}

inline nlohmann::json read_checkpoint_json(const std::filesystem::path& sidecar) {
  std::ifstream in(sidecar);
  if (!in) throw ConfigError("cannot read checkpoint " + sidecar.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed checkpoint " + sidecar.string() + ": " + e.what());
  }
}

/// Overwrites the evolving parts of `s` (built from the same config) with
/// the checkpointed ones.
inline void restore_state(const std::filesystem::path& sidecar, const nlohmann::json& j, SystemState& s) {
  auto fields = io::read_fields((sidecar.parent_path() / j.at("fields").get<std::string>()).string());
  if (fields.size() != 3 + s.c.size()) throw ConfigError("checkpoint species count does not match its config");
  for (const auto& f : fields)
    if (!(f.grid() == s.grid())) throw ConfigError("checkpoint grid does not match its config");
  s.u.x = fields[0];
  s.u.y = fields[1];
  s.phi = fields[2];
  for (std::size_t i = 0; i < s.c.size(); ++i) s.c[i] = fields[3 + i];
  s.t = j.at("t").get<double>();
  s.steps = j.at("step").get<long>();
  s.rng = RngStream(j.at("rng").at("key").get<std::uint64_t>(), j.at("rng").at("counter").get<std::uint64_t>());
  s.min_concentration = j.at("min_concentration").get<double>();
  s.clamped = j.at("clamped").get<bool>();
}

inline std::vector<ObservableSeries> restore_series(const nlohmann::json& j) {
  std::vector<ObservableSeries> out;
  for (const auto& x : j.at("series")) out.push_back(detail::series_from_json(x));
  return out;
}

}  // namespace esnp::harness
