#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "config.hpp"

namespace toll::cli {

enum ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kInfeasible = 2,
  kNotConverged = 3,
  kIOError = 4,
};

/// The coupling problem a config describes, with one CSV name per block.
struct Assembled {
  Inputs inputs;
  CouplingProblem problem;
  std::vector<std::string> files;
  std::optional<SourceSplit> split;
};

Assembled assemble(const RunConfig& cfg);

struct RunResult {
  int exit_code = kOk;
  nlohmann::json summary;
};

/// Solve and write every artifact into cfg.output.
RunResult run(const RunConfig& cfg);

struct VerifyCheck {
  std::string name;
  double value = 0.0;
  double tolerance = 0.0;
  bool pass = true;
  /// Reported but not graded.
  bool info = false;
};

struct VerifyReport {
  std::vector<VerifyCheck> checks;
  bool pass() const;
  std::string format() const;
};

/// Default tolerance: 1e-9 for lp configs, 1e-6 for entropic ones.
double default_tolerance(const RunConfig& cfg);

/// Recomputes marginals, caps and the admissibility mask of coupling CSVs
/// (one per block, in block order).
VerifyReport verify(const RunConfig& cfg, const std::vector<std::string>& couplings,
                    std::optional<double> tolerance = std::nullopt);

/// Trajectories sampled from a coupling CSV written by `run`.
std::vector<Trajectory> export_paths(const RunConfig& cfg, const std::string& coupling,
                                     std::size_t samples, std::size_t times);

}  // namespace toll::cli
