#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "toll_transport/toll_transport.hpp"

namespace toll::cli {

enum class ProblemKind { single, two_toll, partial, schedule };

std::string to_string(ProblemKind k);

/// Exactly one of `csv` and `mixture` is set.
struct MarginalSource {
  std::optional<std::string> csv;
  std::optional<MixtureSpec> mixture;
  std::size_t cells = 60;
  /// Grid range; defaults to the truncation interval.
  double lower = 0.0;
  double upper = 0.0;
};

/// Omitted rate means r = infinity.
struct RateSpec {
  std::optional<double> constant;
  std::optional<std::string> table;
};

struct RunConfig {
  ProblemKind problem = ProblemKind::single;
  MarginalSource mu;
  MarginalSource nu;
  std::vector<double> tolls{0.0};
  double horizon = 1.0;
  /// single: crossing rate. two_toll / partial: first toll. schedule: departures.
  std::optional<RateSpec> rate;
  /// two_toll / partial: second toll. schedule: arrivals.
  std::optional<RateSpec> rate2;
  std::size_t time_cells = 50;
  std::size_t time_cells2 = 50;
  Backend backend = Backend::entropic;
  EntropicConfig entropic;
  bool pin_arrival = false;
  std::size_t trajectories = 0;
  std::size_t trajectory_times = 41;
  std::size_t snapshots = 5;
  std::string output = "out";
  std::uint64_t seed = 0;

  TollConfig toll_config() const { return {tolls, horizon}; }
};

/// Validates and resolves defaults. Relative CSV paths are taken relative
/// to `base_dir`.
RunConfig parse_config(const nlohmann::json& j,
                       const std::filesystem::path& base_dir = {});

/// Throws IOError when the file is missing or not JSON.
RunConfig parse_config(const std::filesystem::path& path);

/// Inverse of parse_config with every default written out.
nlohmann::json to_json(const RunConfig& cfg);

std::filesystem::path preset_dir();
std::filesystem::path preset_path(const std::string& name);
RunConfig load_preset(const std::string& name);

/// Marginals, time grids and caps a config describes.
struct Inputs {
  DiscreteMeasure mu;
  DiscreteMeasure nu;
  RateSchedule rate1;
  RateSchedule rate2;
};

Inputs build_inputs(const RunConfig& cfg);

}  // namespace toll::cli
