// Command-line front end: solve, verify and export-paths.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "cli/config.hpp"
#include "cli/run.hpp"

namespace fs = std::filesystem;
using namespace toll;
using namespace toll::cli;

namespace {

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("toll_transport");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  spdlog::set_level(spdlog::level::info);
  if (const char* env = std::getenv("TOLL_TRANSPORT_LOG")) {
    const std::string v = env;
    if (v == "error") {
      spdlog::set_level(spdlog::level::err);
    } else if (v == "debug") {
      spdlog::set_level(spdlog::level::debug);
    } else if (v != "info") {
      spdlog::warn("TOLL_TRANSPORT_LOG='{}' ignored (error, info or debug)", v);
    }
  }
}

RunConfig load(const std::string& config, const std::string& preset) {
  return preset.empty() ? parse_config(fs::path(config)) : load_preset(preset);
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"Optimal transport through toll constrictions with flow-rate caps"};
  app.require_subcommand(1);

  std::string config, preset, backend, out;
  std::size_t trajectories = 0;
  auto* solve = app.add_subcommand("solve", "Solve a configured problem");
  auto* src = solve->add_option("--config", config, "JSON config file");
  solve->add_option("--preset", preset, "Name of a shipped preset")->excludes(src);
  solve->add_option("--backend", backend, "Override the backend")
      ->check(CLI::IsMember({"lp", "entropic"}));
  solve->add_option("--out", out, "Output directory");
  solve->add_option("--trajectories", trajectories, "Number of sampled paths to export");

  std::vector<std::string> couplings;
  std::string verify_config;
  std::optional<double> tolerance;
  auto* verify = app.add_subcommand("verify", "Check a coupling CSV against its config");
  verify->add_option("--coupling", couplings, "Coupling CSV, one per block")->required();
  verify->add_option("--config", verify_config, "Config the coupling was solved from")
      ->required();
  verify->add_option("--tol", tolerance, "Tolerance (default 1e-9 lp, 1e-6 entropic)");

  std::string path_coupling, path_config, path_out;
  std::size_t samples = 200, times = 41;
  auto* paths = app.add_subcommand("export-paths", "Sample particle paths from a coupling");
  paths->add_option("--coupling", path_coupling, "Coupling CSV")->required();
  paths->add_option("--samples", samples, "Number of particles")->required();
  paths->add_option("--config", path_config,
                    "Config (default: config.json next to the coupling)");
  paths->add_option("--times", times, "Uniform time samples per path");
  paths->add_option("--out", path_out, "Output CSV (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*solve) {
      if (config.empty() == preset.empty()) {
        std::cerr << "solve: exactly one of --config and --preset is required\n";
        return kUsage;
      }
      RunConfig cfg = load(config, preset);
      if (!backend.empty()) cfg.backend = parse_backend(backend);
      if (!out.empty()) cfg.output = out;
      if (trajectories > 0) cfg.trajectories = trajectories;
      const auto result = run(cfg);
      std::cout << result.summary.dump(2) << '\n';
      return result.exit_code;
    }
    if (*verify) {
      const auto cfg = parse_config(fs::path(verify_config));
      const auto report = toll::cli::verify(cfg, couplings, tolerance);
      std::cout << report.format();
      return report.pass() ? kOk : kNotConverged;
    }
    if (*paths) {
      const fs::path cfg_path = path_config.empty()
                                    ? fs::path(path_coupling).parent_path() / "config.json"
                                    : fs::path(path_config);
      const auto cfg = parse_config(cfg_path);
      const auto trs = export_paths(cfg, path_coupling, samples, times);
      if (path_out.empty()) {
        io::write_trajectories_csv(std::cout, trs);
      } else {
        io::write_trajectories_csv(path_out, trs);
      }
      return kOk;
    }
  } catch (const IOError& e) {
    spdlog::error("{}", e.what());
    return kIOError;
  } catch (const ConfigError& e) {
    spdlog::error("config: {}", e.what());
    return kUsage;
  } catch (const Infeasible& e) {
    spdlog::error("infeasible: {}", e.what());
    return kInfeasible;
  } catch (const NotConverged& e) {
    spdlog::error("not converged: {}", e.what());
    return kNotConverged;
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return kUsage;
  }
  return kUsage;
}
