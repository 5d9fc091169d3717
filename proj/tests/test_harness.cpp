#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "esnp/harness/config.hpp"
#include "esnp/harness/plot.hpp"
#include "esnp/harness/run.hpp"

using namespace esnp;
using namespace esnp::harness;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  fs::path d = fs::temp_directory_path() / ("esnp_harness_" + name);
  fs::remove_all(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int config_error_line(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.line();
  }
  return -1;
}

std::string small_simulation(const fs::path& out, double T, long checkpoint_every = 0) {
  return "run.experiment = simulate\nrun.seed = 5\nrun.output = " + out.string() +
         "\ngrid.nx = 16\ntime.dt = 0.01\ntime.T = " + std::to_string(T) +
         "\ntime.record_every = 2\ntime.checkpoint_every = " + std::to_string(checkpoint_every) +
         "\ninit.kind = steady_plus_perturbation\ninit.epsilon = 0.3\ninit.velocity = 0.5\n"
         "noise.modes = 4\nnoise.amplitude = 0.5\nforce.kind = taylor_green\nforce.amplitude = 0.3\n";
}

}  // namespace

TEST(ParseConfig, MinimalTwoSpeciesTorusFillsDefaults) {
  auto c = parse_config("grid.domain = torus\n");
  EXPECT_EQ(c.experiment, Experiment::Simulate);
  EXPECT_EQ(c.domain, Domain::Torus2Pi);
  ASSERT_EQ(c.species.size(), 2u);
  EXPECT_EQ(c.species[0].z, 1.0);
  EXPECT_EQ(c.species[1].z, -1.0);
  EXPECT_EQ(c.species[0].bc, BoundaryKind::Periodic);
  EXPECT_EQ(c.nx, 64);
  EXPECT_EQ(c.ny, 64);
  EXPECT_EQ(c.noise_amplitudes.size(), 8u);
  EXPECT_GE(c.threads, 1u);
  EXPECT_EQ(c.resolved.at("species.2.z"), "-1");
}

TEST(ParseConfig, BlockingOnTorusRejectedWithLine) {
  EXPECT_EQ(config_error_line("grid.domain = torus\n\nspecies.1.bc = blocking\n"), 3);
}

TEST(ParseConfig, PeriodicOnSquareRejected) {
  EXPECT_EQ(config_error_line("grid.domain = square\nspecies.2.bc = periodic\n"), 2);
}

TEST(ParseConfig, DuplicateKeyNamesBothLines) {
  try {
    parse_config("time.dt = 0.1\n# comment\ntime.dt = 0.2\n");
    FAIL() << "duplicate accepted";
  } catch (const ConfigError& e) {
    std::string msg = e.what();
    EXPECT_NE(msg.find("lines 1 and 3"), std::string::npos) << msg;
    EXPECT_EQ(e.line(), 3);
  }
}

TEST(ParseConfig, UnknownKeysAndBadValuesRejected) {
  EXPECT_EQ(config_error_line("time.dt = 0.1\nspecies.3.D = 1\n"), 2);
  EXPECT_EQ(config_error_line("time.dt = fast\n"), 1);
  EXPECT_EQ(config_error_line("run.experiment = sing\n"), 1);
  EXPECT_EQ(config_error_line("no equals sign\n"), 1);
  EXPECT_EQ(config_error_line("time.dt = 0.3\ntime.T = 1\n"), 2);
  EXPECT_EQ(config_error_line("noise.modes = 3\nnoise.amplitudes = 1, 2\n"), 2);
}

TEST(ParseConfig, InfeasibleNeutralityRejectedBeforeCompute) {
  EXPECT_THROW(parse_config("species.1.mean = 1\nspecies.2.z = 1\n"), ConfigError);
  auto c = parse_config("species.1.mean = 2\nspecies.2.mean = 2\nspecies.2.z = -2\n");
  EXPECT_EQ(c.means[1], 2.0);  // the run adjusts it to 1; the request itself is feasible
}

TEST(ParseConfig, OverridesAndHashIgnoreOutputLocation) {
  auto a = parse_config("run.seed = 1\n");
  auto b = parse_config("run.seed = 1\nrun.output = elsewhere\nrun.threads = 3\n");
  auto c = parse_config("run.seed = 1\n", {{"run.seed", "2"}});
  EXPECT_EQ(config_hash(a), config_hash(b));
  EXPECT_NE(config_hash(a), config_hash(c));
  EXPECT_EQ(c.seed, 2u);
  EXPECT_EQ(c.init.seed, 2u);
  auto d = parse_config("identities.resolutions = 64,   128\n");
  EXPECT_EQ(d.resolved.at("identities.resolutions"), "64,128");
}

TEST(ParseConfig, ResolvedTextParsesBackToItself) {
  auto a = parse_config("grid.domain = square\ngrid.nx = 16\nspecies.count = 3\nspecies.3.bc = dirichlet\n"
                        "species.3.gamma = 0.5\nspecies.3.z = 0\ninit.perturbed = 1,3\n");
  auto b = parse_config(a.full_text());
  EXPECT_EQ(a.resolved, b.resolved);
  EXPECT_EQ(b.init.perturbed, (std::vector<int>{0, 2}));
}

TEST(Fnv1a, KnownVectors) {
  EXPECT_EQ(fnv1a(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(fnv1a("foobar"), 0x85944171f73967e8ULL);
}

TEST(Run, SimulateWithZeroHorizonWritesInitialDiagnosticsOnly) {
  auto dir = fresh_dir("t0");
  std::ostringstream err;
  ASSERT_EQ(run(parse_config(small_simulation(dir, 0)), err), kSuccess) << err.str();
  auto ke = read_csv(dir / "kinetic_energy.csv");
  ASSERT_EQ(ke.size(), 1u);
  EXPECT_EQ(ke[0].t, 0.0);
  EXPECT_GT(ke[0].value, 0.0);
  EXPECT_TRUE(fs::exists(dir / "report.json"));
  EXPECT_FALSE(fs::exists(dir / "checkpoint"));
  fs::remove_all(dir);
}

TEST(Run, OutputsEmbedConfigHash) {
  auto dir = fresh_dir("hash");
  auto cfg = parse_config(small_simulation(dir, 0.04));
  ASSERT_EQ(run(cfg), kSuccess);
  const std::string h = config_hash(cfg);
  for (const auto& e : fs::directory_iterator(dir)) {
    auto ext = e.path().extension();
    if (ext == ".csv" || ext == ".json") EXPECT_NE(slurp(e.path()).find(h), std::string::npos) << e.path();
  }
  EXPECT_EQ(slurp(dir / "run.log").find(h) != std::string::npos, true);
  fs::remove_all(dir);
}

TEST(Run, RerunIsBitwiseIdenticalApartFromLog) {
  auto dir = fresh_dir("rerun");
  auto cfg = parse_config(small_simulation(dir, 0.1));
  ASSERT_EQ(run(cfg), kSuccess);
  std::map<std::string, std::string> first;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().filename() != "run.log") first[e.path().filename().string()] = slurp(e.path());
  ASSERT_EQ(run(cfg), kSuccess);
  EXPECT_GT(first.size(), 10u);
  for (const auto& [name, bytes] : first) EXPECT_EQ(bytes, slurp(dir / name)) << name;
  fs::remove_all(dir);
}

TEST(Run, ThreadCountDoesNotChangeOutputs) {
  auto dir = fresh_dir("threads");
  const std::string text = "run.experiment = couple\nrun.output = " + dir.string() +
                           "\ngrid.nx = 8\ntime.dt = 0.01\ntime.T = 0.05\ninit.epsilon = 0.2\ninit_b.seed = 9\n"
                           "noise.modes = 4\nnoise.amplitude = 0.2\ncouple.modes = 4\ncouple.lambda = 5\n"
                           "couple.paths = 5\n";
  ASSERT_EQ(run(parse_config(text, {{"run.threads", "1"}})), kSuccess);
  auto one = slurp(dir / "coupling_paths.csv");
  ASSERT_EQ(run(parse_config(text, {{"run.threads", "3"}})), kSuccess);
  EXPECT_EQ(one, slurp(dir / "coupling_paths.csv"));
  fs::remove_all(dir);
}

TEST(Run, ResumeFromCheckpointMatchesUninterruptedRun) {
  auto full = fresh_dir("full"), part = fresh_dir("part");
  ASSERT_EQ(run(parse_config(small_simulation(full, 0.2))), kSuccess);
  ASSERT_EQ(run(parse_config(small_simulation(part, 0.2, 8))), kSuccess);
  auto sidecar = part / "checkpoint" / "checkpoint.json";
  ASSERT_TRUE(fs::exists(sidecar));
  EXPECT_EQ(read_checkpoint_json(sidecar).at("step").get<long>(), 16);
  for (const auto& e : fs::directory_iterator(part))
    if (e.is_regular_file() && e.path().filename() != "run.log") fs::remove(e.path());
  std::ostringstream err;
  ASSERT_EQ(resume(sidecar, err), kSuccess) << err.str();
  for (const char* name : {"kinetic_energy.csv", "entropy.csv", "min_concentration.csv", "final_state.bin"})
    EXPECT_EQ(slurp(full / name), slurp(part / name)) << name;
  auto rf = nlohmann::json::parse(slurp(full / "report.json"));
  auto rp = nlohmann::json::parse(slurp(part / "report.json"));
  EXPECT_EQ(rf["results"], rp["results"]);
  EXPECT_EQ(rf["config_hash"], rp["config_hash"]);
  fs::remove_all(full);
  fs::remove_all(part);
}

TEST(Run, IdentitiesResidualsBelowTolerance) {
  auto dir = fresh_dir("identities");
  auto cfg = parse_config("run.experiment = identities\nrun.output = " + dir.string() +
                          "\nidentities.samples = 10\nidentities.resolutions = 32, 64\n");
  ASSERT_EQ(run(cfg), kSuccess);
  std::ifstream in(dir / "identities.csv");
  std::string line;
  std::getline(in, line);
  std::getline(in, line);
  EXPECT_EQ(line, "resolution,sample,cancellation,two_species");
  int rows = 0;
  while (std::getline(in, line)) {
    double n, k, a, b;
    ASSERT_EQ(std::sscanf(line.c_str(), "%lf,%lf,%lf,%lf", &n, &k, &a, &b), 4);
    EXPECT_LT(a, 1e-8);
    EXPECT_LT(b, 1e-8);
    ++rows;
  }
  EXPECT_EQ(rows, 20);
  fs::remove_all(dir);
}

TEST(Run, NumericalFailureExitsWithOne) {
  auto dir = fresh_dir("blowup");
  // velocity 50 on a 16^2 torus with dt 0.1 violates the advective guard
  auto cfg = parse_config("run.output = " + dir.string() +
                          "\ngrid.nx = 16\ntime.dt = 0.1\ntime.T = 0.2\ninit.velocity = 50\n");
  std::ostringstream err;
  EXPECT_EQ(run(cfg, err), kNumericalFailure);
  EXPECT_NE(err.str().find("numerical failure"), std::string::npos);
  auto report = nlohmann::json::parse(slurp(dir / "report.json"));
  EXPECT_EQ(report["status"], "numerical_failure");
  fs::remove_all(dir);
}

TEST(Run, InvalidExperimentParametersExitWithTwo) {
  auto dir = fresh_dir("underpowered");
  auto cfg = parse_config("run.experiment = kb\nrun.output = " + dir.string() +
                          "\ngrid.nx = 8\ntime.dt = 0.01\nkb.T_list = 0.2, 0.1\n");
  std::ostringstream err;
  EXPECT_EQ(run(cfg, err), kConfigFailure);
  fs::remove_all(dir);
}

TEST(Resume, MissingCheckpointIsConfigError) {
  std::ostringstream err;
  EXPECT_EQ(resume(fresh_dir("none") / "checkpoint.json", err), kConfigFailure);
}

TEST(PlotEmit, EmptyDirectoryIsError) {
  auto dir = fresh_dir("plot_empty");
  fs::create_directories(dir);
  EXPECT_THROW(plot_emit(dir), ArgumentError);
  EXPECT_THROW(plot_emit(dir / "missing"), ArgumentError);
  fs::remove_all(dir);
}

TEST(PlotEmit, OneScriptPerSeries) {
  auto dir = fresh_dir("plot");
  fs::create_directories(dir);
  ObservableSeries s("energy");
  s.push(0, 1);
  s.push(1, 2);
  write_csv(s, dir / "energy.csv");
  auto one = plot_emit(dir);
  ASSERT_EQ(one.size(), 1u);
  auto text = slurp(one[0]);
  EXPECT_NE(text.find("'energy.csv' using 1:2"), std::string::npos);
  EXPECT_NE(text.find("set datafile separator ','"), std::string::npos);

  for (const char* name : {"a", "b", "c"}) {
    ObservableSeries x(name);
    x.push(0, 1);
    write_csv(x, dir / (std::string(name) + ".csv"));
  }
  auto many = plot_emit(dir);
  EXPECT_EQ(many.size(), 4u);
  for (const auto& p : many) EXPECT_EQ(p.extension(), ".gp");
  fs::remove_all(dir);
}
