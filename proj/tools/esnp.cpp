#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>

#include "CLI11.hpp"

#include "esnp/harness/config.hpp"
#include "esnp/harness/plot.hpp"
#include "esnp/harness/run.hpp"

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw esnp::ConfigError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int load(const std::string& path, const std::map<std::string, std::string>& overrides,
         esnp::harness::RunConfig& cfg) {
  try {
    cfg = esnp::harness::parse_config(slurp(path), overrides);
    return 0;
  } catch (const esnp::ConfigError& e) {
    std::cerr << path;
    if (e.line() > 0) std::cerr << ":" << e.line();
    std::cerr << ": " << e.what() << "\n";
    return esnp::harness::kConfigFailure;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stochastic Nernst-Planck-Navier-Stokes experiments"};
  app.require_subcommand(1);

  std::string config_path, checkpoint_path, plot_dir;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<unsigned> threads;

  auto* run = app.add_subcommand("run", "Run the experiment named in a config file");
  run->add_option("config", config_path, "Config file")->required()->check(CLI::ExistingFile);
  run->add_option("--seed", seed, "Master seed (overrides run.seed)");
  run->add_option("--out", out_dir, "Output directory (overrides run.output)");
  run->add_option("--threads", threads, "Worker threads (overrides run.threads)")->check(CLI::PositiveNumber);

  auto* verify = app.add_subcommand("verify", "Parse and validate a config file without running it");
  verify->add_option("config", config_path, "Config file")->required()->check(CLI::ExistingFile);

  auto* resume = app.add_subcommand("resume", "Continue a simulate run from its checkpoint.json");
  resume->add_option("checkpoint", checkpoint_path, "Checkpoint sidecar")->required()->check(CLI::ExistingFile);

  auto* plot = app.add_subcommand("plot", "Write gnuplot scripts for the CSV series in a directory");
  plot->add_option("dir", plot_dir, "Report directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : esnp::harness::kConfigFailure;
  }

  using namespace esnp::harness;
  if (*run) {
    std::map<std::string, std::string> overrides;
    if (seed) overrides["run.seed"] = std::to_string(*seed);
    if (out_dir) overrides["run.output"] = *out_dir;
    if (threads) overrides["run.threads"] = std::to_string(*threads);
    RunConfig cfg;
    if (int rc = load(config_path, overrides, cfg)) return rc;
    int rc = esnp::harness::run(cfg);
    if (rc == kSuccess) std::cout << cfg.output << "/report.json\n";
    return rc;
  }
  if (*verify) {
    RunConfig cfg;
    if (int rc = load(config_path, {}, cfg)) return rc;
    std::cout << cfg.full_text() << "# config_hash " << config_hash(cfg) << "\n";
    return kSuccess;
  }
  if (*resume) return esnp::harness::resume(checkpoint_path);
  if (*plot) {
    try {
      for (const auto& p : plot_emit(plot_dir)) std::cout << p.string() << "\n";
      return kSuccess;
    } catch (const esnp::Error& e) {
      std::cerr << e.what() << "\n";
      return kConfigFailure;
    }
  }
  return kSuccess;
}
