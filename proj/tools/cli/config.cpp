#include "config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>

namespace toll::cli {

namespace fs = std::filesystem;
using nlohmann::json;

#ifndef TOLL_TRANSPORT_PRESET_DIR
#define TOLL_TRANSPORT_PRESET_DIR "configs/presets"
#endif

std::string to_string(ProblemKind k) {
  switch (k) {
    case ProblemKind::single: return "single";
    case ProblemKind::two_toll: return "two_toll";
    case ProblemKind::partial: return "partial";
    case ProblemKind::schedule: return "schedule";
  }
  return "single";
}

namespace {

std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

void require_object(const json& j, const std::string& path) {
  if (!j.is_object()) throw ConfigError(path.empty() ? "<root>" : path, "expected an object");
}

void reject_unknown(const json& j, const std::string& path,
                    const std::set<std::string>& allowed) {
  for (const auto& [key, _] : j.items()) {
    if (!allowed.count(key)) throw ConfigError(join(path, key), "unknown field");
  }
}

double number(const json& j, const std::string& path) {
  if (!j.is_number()) throw ConfigError(path, "expected a number");
  return j.get<double>();
}

double positive(const json& j, const std::string& path) {
  const double v = number(j, path);
  if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(path, "must be positive");
  return v;
}

std::size_t count(const json& j, const std::string& path, std::int64_t min) {
  if (!j.is_number_integer()) throw ConfigError(path, "expected an integer");
  const auto v = j.get<std::int64_t>();
  if (v < min) {
    throw ConfigError(path, "must be >= " + std::to_string(min) + ", got " +
                                std::to_string(v));
  }
  return static_cast<std::size_t>(v);
}

std::string text(const json& j, const std::string& path) {
  if (!j.is_string()) throw ConfigError(path, "expected a string");
  return j.get<std::string>();
}

bool flag(const json& j, const std::string& path) {
  if (!j.is_boolean()) throw ConfigError(path, "expected true or false");
  return j.get<bool>();
}

std::pair<double, double> interval(const json& j, const std::string& path) {
  if (!j.is_array() || j.size() != 2) {
    throw ConfigError(path, "expected [lower, upper]");
  }
  const double a = number(j[0], path + "[0]");
  const double b = number(j[1], path + "[1]");
  if (!(a < b)) throw ConfigError(path, "need lower < upper");
  return {a, b};
}

std::string resolve(const std::string& file, const fs::path& base) {
  fs::path p(file);
  if (p.is_relative() && !base.empty()) p = base / p;
  return fs::absolute(p).lexically_normal().string();
}

MixtureSpec parse_mixture(const json& j, const std::string& path) {
  require_object(j, path);
  reject_unknown(j, path, {"components", "interval"});
  MixtureSpec spec;
  const std::string cp = join(path, "components");
  if (!j.contains("components") || !j["components"].is_array() ||
      j["components"].empty()) {
    throw ConfigError(cp, "expected a non-empty list");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < j["components"].size(); ++i) {
    const auto& c = j["components"][i];
    const std::string p = cp + "[" + std::to_string(i) + "]";
    require_object(c, p);
    reject_unknown(c, p, {"mean", "stddev", "weight"});
    for (const char* key : {"mean", "stddev", "weight"}) {
      if (!c.contains(key)) throw ConfigError(join(p, key), "missing");
    }
    MixtureComponent m{number(c["mean"], join(p, "mean")),
                       positive(c["stddev"], join(p, "stddev")),
                       number(c["weight"], join(p, "weight"))};
    if (!(m.weight >= 0.0)) throw ConfigError(join(p, "weight"), "must be >= 0");
    total += m.weight;
    spec.components.push_back(m);
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError(cp, "weights must sum to 1");
  if (!j.contains("interval")) throw ConfigError(join(path, "interval"), "missing");
  std::tie(spec.lower, spec.upper) = interval(j["interval"], join(path, "interval"));
  return spec;
}

MarginalSource parse_marginal(const json& j, const std::string& path,
                              const fs::path& base) {
  require_object(j, path);
  reject_unknown(j, path, {"csv", "mixture", "cells", "range"});
  MarginalSource m;
  if (j.contains("csv") == j.contains("mixture")) {
    throw ConfigError(path, "exactly one of 'csv' and 'mixture' is required");
  }
  if (j.contains("csv")) {
    for (const char* key : {"cells", "range"}) {
      if (j.contains(key)) {
        throw ConfigError(join(path, key), "not used with a CSV source");
      }
    }
    m.csv = resolve(text(j["csv"], join(path, "csv")), base);
    return m;
  }
  m.mixture = parse_mixture(j["mixture"], join(path, "mixture"));
  if (j.contains("cells")) m.cells = count(j["cells"], join(path, "cells"), 2);
  m.lower = m.mixture->lower;
  m.upper = m.mixture->upper;
  if (j.contains("range")) {
    std::tie(m.lower, m.upper) = interval(j["range"], join(path, "range"));
    if (m.lower > m.mixture->lower || m.upper < m.mixture->upper) {
      throw ConfigError(join(path, "range"), "must cover the mixture interval");
    }
  }
  return m;
}

std::optional<RateSpec> parse_rate(const json& j, const std::string& path,
                                   const fs::path& base) {
  if (j.is_null()) return std::nullopt;
  RateSpec r;
  if (j.is_number()) {
    r.constant = positive(j, path);
    return r;
  }
  require_object(j, path);
  reject_unknown(j, path, {"constant", "table"});
  if (j.contains("constant") == j.contains("table")) {
    throw ConfigError(path, "exactly one of 'constant' and 'table' is required");
  }
  if (j.contains("constant")) {
    r.constant = positive(j["constant"], join(path, "constant"));
  } else {
    r.table = resolve(text(j["table"], join(path, "table")), base);
  }
  return r;
}

json rate_json(const std::optional<RateSpec>& r) {
  if (!r) return nullptr;
  if (r->constant) return json{{"constant", *r->constant}};
  return json{{"table", *r->table}};
}

json marginal_json(const MarginalSource& m) {
  if (m.csv) return json{{"csv", *m.csv}};
  json comps = json::array();
  for (const auto& c : m.mixture->components) {
    comps.push_back({{"mean", c.mean}, {"stddev", c.stddev}, {"weight", c.weight}});
  }
  return json{{"mixture",
               {{"components", comps},
                {"interval", {m.mixture->lower, m.mixture->upper}}}},
              {"cells", m.cells},
              {"range", {m.lower, m.upper}}};
}

std::pair<const char*, const char*> rate_keys(ProblemKind k) {
  switch (k) {
    case ProblemKind::single: return {"rate", nullptr};
    case ProblemKind::two_toll:
    case ProblemKind::partial: return {"rate1", "rate2"};
    case ProblemKind::schedule: return {"departure_rate", "arrival_rate"};
  }
  return {"rate", nullptr};
}

DiscreteMeasure load_marginal(const MarginalSource& m) {
  if (m.csv) return normalize(io::read_measure_csv(*m.csv));
  return discretize_mixture(*m.mixture,
                            Grid::uniform(m.lower, m.upper, m.cells));
}

RateSchedule load_rate(const std::optional<RateSpec>& r, const Grid& g) {
  if (!r) return RateSchedule::unbounded(g);
  if (r->constant) return RateSchedule::constant(g, *r->constant);
  return RateSchedule::tabulated(g, io::read_rate_table(*r->table));
}

}  // namespace

RunConfig parse_config(const json& j, const fs::path& base) {
  require_object(j, "");
  RunConfig cfg;
  if (!j.contains("problem")) throw ConfigError("problem", "missing");
  const std::string kind = text(j["problem"], "problem");
  if (kind == "single") {
    cfg.problem = ProblemKind::single;
  } else if (kind == "two_toll") {
    cfg.problem = ProblemKind::two_toll;
  } else if (kind == "partial") {
    cfg.problem = ProblemKind::partial;
  } else if (kind == "schedule") {
    cfg.problem = ProblemKind::schedule;
  } else {
    throw ConfigError("problem", "unknown kind '" + kind + "'");
  }

  const auto [rk1, rk2] = rate_keys(cfg.problem);
  std::set<std::string> allowed{"problem",      "mu",          "nu",
                                "horizon",      "time_cells",  "backend",
                                "entropic",     "trajectories", "trajectory_times",
                                "output",       "seed",        rk1};
  if (rk2) allowed.insert(rk2);
  if (cfg.problem != ProblemKind::single) allowed.insert("time_cells2");
  if (cfg.problem != ProblemKind::schedule) allowed.insert("tolls");
  if (cfg.problem == ProblemKind::schedule) {
    allowed.insert("pin_arrival");
    allowed.insert("snapshots");
  }
  reject_unknown(j, "", allowed);

  for (const char* key : {"mu", "nu"}) {
    if (!j.contains(key)) throw ConfigError(key, "missing");
  }
  cfg.mu = parse_marginal(j["mu"], "mu", base);
  cfg.nu = parse_marginal(j["nu"], "nu", base);

  if (j.contains("horizon")) cfg.horizon = positive(j["horizon"], "horizon");

  const bool two = cfg.problem == ProblemKind::two_toll ||
                   cfg.problem == ProblemKind::partial;
  if (cfg.problem == ProblemKind::schedule) {
    cfg.tolls.clear();
  } else if (j.contains("tolls")) {
    const auto& t = j["tolls"];
    if (!t.is_array()) throw ConfigError("tolls", "expected a list");
    cfg.tolls.clear();
    for (std::size_t i = 0; i < t.size(); ++i) {
      cfg.tolls.push_back(number(t[i], "tolls[" + std::to_string(i) + "]"));
    }
  } else if (two) {
    throw ConfigError("tolls", "missing");
  }
  if (cfg.problem != ProblemKind::schedule) {
    const std::size_t want = two ? 2 : 1;
    if (cfg.tolls.size() != want) {
      throw ConfigError("tolls", "expected " + std::to_string(want) + " position(s)");
    }
    if (two && !(cfg.tolls[0] < cfg.tolls[1])) {
      throw ConfigError("tolls", "positions must be increasing");
    }
  }

  if (j.contains(rk1)) cfg.rate = parse_rate(j[rk1], rk1, base);
  if (rk2 && j.contains(rk2)) cfg.rate2 = parse_rate(j[rk2], rk2, base);
  if (j.contains("time_cells")) cfg.time_cells = count(j["time_cells"], "time_cells", 2);
  cfg.time_cells2 = cfg.time_cells;
  if (j.contains("time_cells2")) {
    cfg.time_cells2 = count(j["time_cells2"], "time_cells2", 2);
  }

  if (j.contains("backend")) {
    const std::string b = text(j["backend"], "backend");
    if (b != "lp" && b != "entropic") {
      throw ConfigError("backend", "expected 'lp' or 'entropic'");
    }
    cfg.backend = parse_backend(b);
  }
  if (j.contains("entropic")) {
    const auto& e = j["entropic"];
    require_object(e, "entropic");
    reject_unknown(e, "entropic", {"epsilon", "tol", "max_iters", "log_domain"});
    if (e.contains("epsilon")) cfg.entropic.epsilon = positive(e["epsilon"], "entropic.epsilon");
    if (e.contains("tol")) cfg.entropic.tol = positive(e["tol"], "entropic.tol");
    if (e.contains("max_iters")) {
      cfg.entropic.max_iters = count(e["max_iters"], "entropic.max_iters", 1);
    }
    if (e.contains("log_domain")) {
      cfg.entropic.log_domain = flag(e["log_domain"], "entropic.log_domain");
    }
  }
  if (j.contains("pin_arrival")) cfg.pin_arrival = flag(j["pin_arrival"], "pin_arrival");
  if (j.contains("trajectories")) {
    cfg.trajectories = count(j["trajectories"], "trajectories", 0);
  }
  if (j.contains("trajectory_times")) {
    cfg.trajectory_times = count(j["trajectory_times"], "trajectory_times", 2);
  }
  if (j.contains("snapshots")) cfg.snapshots = count(j["snapshots"], "snapshots", 2);
  if (j.contains("output")) cfg.output = text(j["output"], "output");
  if (j.contains("seed")) cfg.seed = count(j["seed"], "seed", 0);
  return cfg;
}

RunConfig parse_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IOError("cannot open config '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw IOError("'" + path.string() + "' is not valid JSON: " + e.what());
  }
  return parse_config(j, path.parent_path());
}

json to_json(const RunConfig& cfg) {
  const auto [rk1, rk2] = rate_keys(cfg.problem);
  json j{{"problem", to_string(cfg.problem)},
         {"mu", marginal_json(cfg.mu)},
         {"nu", marginal_json(cfg.nu)},
         {"horizon", cfg.horizon},
         {"time_cells", cfg.time_cells},
         {"backend", to_string(cfg.backend)},
         {"entropic",
          {{"epsilon", cfg.entropic.epsilon},
           {"tol", cfg.entropic.tol},
           {"max_iters", cfg.entropic.max_iters},
           {"log_domain", cfg.entropic.log_domain}}},
         {"trajectories", cfg.trajectories},
         {"trajectory_times", cfg.trajectory_times},
         {"output", cfg.output},
         {"seed", cfg.seed}};
  j[rk1] = rate_json(cfg.rate);
  if (rk2) j[rk2] = rate_json(cfg.rate2);
  if (cfg.problem != ProblemKind::single) j["time_cells2"] = cfg.time_cells2;
  if (cfg.problem != ProblemKind::schedule) j["tolls"] = cfg.tolls;
  if (cfg.problem == ProblemKind::schedule) {
    j["pin_arrival"] = cfg.pin_arrival;
    j["snapshots"] = cfg.snapshots;
  }
  return j;
}

fs::path preset_dir() {
  if (const char* env = std::getenv("TOLL_TRANSPORT_PRESETS")) return env;
  return TOLL_TRANSPORT_PRESET_DIR;
}

fs::path preset_path(const std::string& name) {
  return preset_dir() / (name + ".json");
}

RunConfig load_preset(const std::string& name) {
  const auto path = preset_path(name);
  if (!fs::exists(path)) {
    throw IOError("unknown preset '" + name + "' (looked in " +
                  preset_dir().string() + ")");
  }
  return parse_config(path);
}

Inputs build_inputs(const RunConfig& cfg) {
  auto mu = load_marginal(cfg.mu);
  auto nu = load_marginal(cfg.nu);
  const Grid g1 = Grid::time(cfg.horizon, cfg.time_cells);
  const Grid g2 = Grid::time(cfg.horizon, cfg.time_cells2);
  auto r1 = load_rate(cfg.rate, g1);
  auto r2 = load_rate(cfg.rate2, g2);
  return {std::move(mu), std::move(nu), std::move(r1), std::move(r2)};
}

}  // namespace toll::cli
