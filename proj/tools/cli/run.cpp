#include "run.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <spdlog/spdlog.h>

namespace toll::cli {

namespace fs = std::filesystem;
using nlohmann::json;

Assembled assemble(const RunConfig& cfg) {
  Assembled a{build_inputs(cfg), {}, {}, std::nullopt};
  const auto& in = a.inputs;
  const TollConfig tc = cfg.toll_config();
  switch (cfg.problem) {
    case ProblemKind::single:
      a.problem = single_toll_problem(in.mu, in.nu, in.rate1, tc);
      a.files = {"coupling.csv"};
      break;
    case ProblemKind::two_toll:
      a.problem = two_toll_problem(in.mu, in.nu, in.rate1, in.rate2, tc);
      a.files = {"coupling.csv"};
      break;
    case ProblemKind::partial:
      a.split = split_source(in.mu, cfg.tolls[0]);
      a.problem = partial_problem(*a.split, in.nu, in.rate1, in.rate2, tc);
      if (a.split->m_minus > 0.0) a.files.push_back("coupling_two.csv");
      if (a.split->m_plus > 0.0) a.files.push_back("coupling_one.csv");
      break;
    case ProblemKind::schedule: {
      const auto [grid, caps] = arrival_axis(in.rate2, cfg.pin_arrival);
      a.problem = schedule_problem(in.mu, in.nu, in.rate1, grid, caps);
      a.files = {"coupling.csv"};
      break;
    }
  }
  return a;
}

namespace {

struct Feasibility {
  std::string name;
  double mass = 1.0;
  FeasibilityCheck check;
};

std::vector<Feasibility> feasibility(const RunConfig& cfg, const Assembled& a) {
  const auto& in = a.inputs;
  switch (cfg.problem) {
    case ProblemKind::single:
      return {{"t", 1.0, check_feasibility(in.rate1)}};
    case ProblemKind::two_toll:
      return {{"t1", 1.0, check_feasibility(in.rate1)},
              {"t2", 1.0, check_feasibility(in.rate2)}};
    case ProblemKind::partial: {
      std::vector<Feasibility> out;
      if (a.split->m_minus > 0.0) {
        out.push_back({"t1", a.split->m_minus,
                       check_feasibility(in.rate1, a.split->m_minus)});
      }
      out.push_back({"t2", 1.0, check_feasibility(in.rate2)});
      return out;
    }
    case ProblemKind::schedule: {
      std::vector<Feasibility> out{{"td", 1.0, check_feasibility(in.rate1)}};
      if (!cfg.pin_arrival) out.push_back({"ta", 1.0, check_feasibility(in.rate2)});
      return out;
    }
  }
  return {};
}

json violations_json(const std::vector<ConstraintViolation>& vs) {
  json out = json::object();
  for (const auto& v : vs) {
    out[v.name] = {{"sense", v.sense == MarginalSense::equal ? "equal" : "at_most"},
                   {"l1", v.l1},
                   {"max", v.max}};
  }
  return out;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw IOError("cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
}

void write_sigma(const fs::path& path, const CouplingProblem& p,
                 const std::vector<Coupling>& couplings) {
  auto out = io::open_out(path.string());
  out << "axis,t,mass,density\n";
  for (const auto& c : p.constraints) {
    if (c.sense != MarginalSense::at_most) continue;
    const auto s = constraint_marginal(c, couplings);
    const Grid& g = p.blocks[c.axes.front().block].axes[c.axes.front().axis];
    for (std::size_t k = 0; k < s.size(); ++k) {
      out << c.name << ',' << io::format_double(g.node(k)) << ','
          << io::format_double(s[k]) << ',' << io::format_double(s[k] / g.width(k))
          << '\n';
    }
  }
}

void write_snapshots(const fs::path& path, const SchedulePlan& plan,
                     std::size_t count) {
  auto out = io::open_out(path.string());
  out << "time,position,weight\n";
  for (std::size_t s = 0; s < count; ++s) {
    const double t = plan.horizon * static_cast<double>(s) /
                     static_cast<double>(count - 1);
    for (const auto& wp : schedule_interpolate(plan, t, 0)) {
      out << io::format_double(t) << ',' << io::format_double(wp.position) << ','
          << io::format_double(wp.weight) << '\n';
    }
  }
}

bool one_sided(const RunConfig& cfg, const Inputs& in) {
  const double toll = cfg.tolls.front();
  return in.mu.support().second < toll && in.nu.support().first > toll;
}

std::vector<Trajectory> partial_trajectories(const RunConfig& cfg,
                                             const PartialPlan& plan,
                                             std::size_t n) {
  std::vector<Trajectory> out;
  const auto n_two = static_cast<std::size_t>(
      std::llround(static_cast<double>(n) * plan.split.m_minus));
  if (plan.two) {
    out = export_trajectories(*plan.two, cfg.toll_config(), n_two,
                              cfg.trajectory_times);
  }
  if (plan.one) {
    auto more = export_trajectories(*plan.one, {{cfg.tolls[1]}, cfg.horizon},
                                    n - std::min(n, n_two), cfg.trajectory_times);
    out.insert(out.end(), more.begin(), more.end());
  }
  for (std::size_t i = 0; i < out.size(); ++i) out[i].id = i;
  return out;
}

}  // namespace

RunResult run(const RunConfig& cfg) {
  const fs::path dir(cfg.output);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IOError("cannot create '" + dir.string() + "': " + ec.message());
  write_json(dir / "config.json", to_json(cfg));

  RunResult r;
  json& s = r.summary;
  s["problem"] = to_string(cfg.problem);
  s["backend"] = to_string(cfg.backend);
  s["seed"] = cfg.seed;
  if (cfg.backend == Backend::entropic) s["epsilon"] = cfg.entropic.epsilon;

  const Assembled a = assemble(cfg);
  const auto& in = a.inputs;
  s["grid"] = {{"mu", in.mu.size()}, {"nu", in.nu.size()}};
  for (std::size_t b = 0; b < a.problem.blocks.size(); ++b) {
    s["grid"]["blocks"].push_back(a.problem.blocks[b].shape());
  }

  double deficit = 0.0;
  for (const auto& f : feasibility(cfg, a)) {
    s["feasibility"][f.name] = {{"cap_mass", f.check.cap_mass},
                                {"mass", f.mass},
                                {"margin", f.check.cap_mass - f.mass},
                                {"deficit", f.check.deficit},
                                {"feasible", f.check.feasible}};
    deficit = std::max(deficit, f.check.deficit);
  }
  if (a.split) s["split"] = {{"m_minus", a.split->m_minus}, {"m_plus", a.split->m_plus}};

  auto finish = [&](const char* status, int code) {
    s["status"] = status;
    r.exit_code = code;
    write_json(dir / "summary.json", s);
    return r;
  };
  auto infeasible = [&](double d, const std::string& why) {
    spdlog::error("infeasible: {}", why);
    s["deficit"] = d;
    s["objective"] = nullptr;
    return finish("infeasible", kInfeasible);
  };

  for (const auto& f : feasibility(cfg, a)) {
    if (!f.check.feasible) {
      return infeasible(deficit, "caps on '" + f.name + "' sum to " +
                                     io::format_double(f.check.cap_mass));
    }
  }

  SolverOptions opts;
  opts.backend = cfg.backend;
  opts.entropic = cfg.entropic;
  spdlog::info("solving {} problem with the {} backend", to_string(cfg.problem),
               to_string(cfg.backend));

  Solution sol;
  std::optional<PartialPlan> partial;
  std::optional<SchedulePlan> schedule;
  try {
    switch (cfg.problem) {
      case ProblemKind::single:
        sol = solve_single_toll(in.mu, in.nu, in.rate1, cfg.toll_config(), opts);
        break;
      case ProblemKind::two_toll:
        sol = solve_two_toll(in.mu, in.nu, in.rate1, in.rate2, cfg.toll_config(), opts);
        break;
      case ProblemKind::partial:
        partial = solve_partial(in.mu, in.nu, cfg.toll_config(), in.rate1, in.rate2, opts);
        sol = partial->solution;
        break;
      case ProblemKind::schedule:
        schedule = solve_schedule(in.mu, in.nu, in.rate1, in.rate2, cfg.horizon,
                                  cfg.pin_arrival, opts);
        sol = schedule->solution;
        break;
    }
  } catch (const Infeasible& e) {
    return infeasible(e.deficit(), e.what());
  } catch (const NotConverged& e) {
    spdlog::error("not converged: {}", e.what());
    s["objective"] = e.last().objective;
    s["iterations"] = e.report().iterations;
    s["converged"] = false;
    s["violations"] = violations_json(e.report().violations);
    return finish("not_converged", kNotConverged);
  }

  const auto vs = violations(a.problem, sol.couplings);
  s["objective"] = sol.objective;
  s["violations"] = violations_json(vs);
  double worst = 0.0;
  for (const auto& v : vs) worst = std::max(worst, v.l1);
  s["max_violation"] = worst;
  if (sol.lp) {
    s["iterations"] = sol.lp->iterations;
    s["converged"] = true;
    s["lp"] = {{"primal_residual", sol.lp->primal_residual},
               {"dual_infeasibility", sol.lp->dual_infeasibility},
               {"complementarity", sol.lp->complementarity}};
  } else {
    s["iterations"] = sol.report->iterations;
    s["converged"] = sol.report->converged;
  }
  spdlog::info("objective {} after {} iterations", sol.objective,
               s["iterations"].get<std::size_t>());

  for (std::size_t b = 0; b < a.files.size(); ++b) {
    io::write_coupling_csv((dir / a.files[b]).string(), sol.couplings[b]);
  }
  write_sigma(dir / "sigma.csv", a.problem, sol.couplings);

  std::vector<Trajectory> paths;
  switch (cfg.problem) {
    case ProblemKind::single: {
      const auto& pi = sol.couplings.front();
      const auto mono = verify_monotone_support(pi, 1e-9);
      s["monotonicity"] = {{"x_violation", mono.x_violation},
                           {"y_violation", mono.y_violation}};
      if (one_sided(cfg, in)) {
        s["reference"] = unconstrained_reference(in.mu, in.nu, cfg.toll_config());
        const auto sigma = extract_sigma(pi);
        io::write_maps_csv((dir / "maps.csv").string(),
                           monotone_rearrangement(in.mu, sigma, cfg.tolls[0]),
                           monotone_rearrangement(in.nu, sigma, cfg.tolls[0]));
      }
      if (cfg.trajectories > 0) {
        paths = export_trajectories(pi, cfg.toll_config(), cfg.trajectories,
                                    cfg.trajectory_times);
      }
      break;
    }
    case ProblemKind::two_toll:
      if (cfg.trajectories > 0) {
        paths = export_trajectories(sol.couplings.front(), cfg.toll_config(),
                                    cfg.trajectories, cfg.trajectory_times);
      }
      break;
    case ProblemKind::partial: {
      json split{{"m_minus", partial->split.m_minus},
                 {"m_plus", partial->split.m_plus},
                 {"objective", partial->objective},
                 {"nu_minus", partial->nu_minus.weights()},
                 {"nu_plus", partial->nu_plus.weights()},
                 {"files", a.files}};
      write_json(dir / "split.json", split);
      if (cfg.trajectories > 0) paths = partial_trajectories(cfg, *partial, cfg.trajectories);
      break;
    }
    case ProblemKind::schedule:
      write_snapshots(dir / "snapshots.csv", *schedule, cfg.snapshots);
      if (cfg.trajectories > 0) {
        paths = schedule_trajectories(*schedule, cfg.trajectories, cfg.trajectory_times);
      }
      break;
  }
  if (!paths.empty()) io::write_trajectories_csv((dir / "trajectories.csv").string(), paths);

  const bool converged = s["converged"].get<bool>();
  return finish(converged ? "ok" : "not_converged", converged ? kOk : kNotConverged);
}

bool VerifyReport::pass() const {
  return std::all_of(checks.begin(), checks.end(),
                     [](const VerifyCheck& c) { return c.info || c.pass; });
}

std::string VerifyReport::format() const {
  std::ostringstream out;
  for (const auto& c : checks) {
    out << (c.info ? "INFO" : c.pass ? "PASS" : "FAIL") << "  " << c.name << " = "
        << io::format_double(c.value);
    if (!c.info) out << " (tol " << io::format_double(c.tolerance) << ")";
    out << '\n';
  }
  out << (pass() ? "verify: PASS" : "verify: FAIL") << '\n';
  return out.str();
}

double default_tolerance(const RunConfig& cfg) {
  return cfg.backend == Backend::lp ? 1e-9 : 1e-6;
}

namespace {

struct Loaded {
  Coupling pi;
  double masked = 0.0;
};

Loaded load_block(const CouplingProblem& p, std::size_t b, const std::string& path) {
  auto mass = io::read_coupling_csv(path, p.blocks[b].shape());
  const auto mask = p.mask(b);
  double masked = 0.0;
  for (std::size_t c = 0; c < mass.size(); ++c) {
    if (!mask[c]) {
      masked += mass[c];
      mass[c] = 0.0;
    }
  }
  return {Coupling(p.blocks[b].axes, std::move(mass), mask), masked};
}

std::size_t csv_arity(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IOError("cannot open '" + path + "'");
  std::string header;
  std::getline(in, header);
  const auto cols = io::split(header).size();
  if (cols != 4 && cols != 5) throw IOError("'" + path + "': not a coupling CSV");
  return cols - 1;
}

}  // namespace

VerifyReport verify(const RunConfig& cfg, const std::vector<std::string>& couplings,
                    std::optional<double> tolerance) {
  const double tol = tolerance.value_or(default_tolerance(cfg));
  const Assembled a = assemble(cfg);
  if (couplings.size() != a.files.size()) {
    std::string names;
    for (const auto& f : a.files) names += (names.empty() ? "" : ", ") + f;
    throw DomainError("verify: expected " + std::to_string(a.files.size()) +
                      " coupling file(s): " + names);
  }
  VerifyReport rep;
  auto grade = [&](std::string name, double value) {
    rep.checks.push_back({std::move(name), value, tol, value <= tol, false});
  };

  std::vector<Coupling> pis;
  double total = 0.0;
  for (std::size_t b = 0; b < couplings.size(); ++b) {
    auto loaded = load_block(a.problem, b, couplings[b]);
    grade("mask mass " + a.files[b], loaded.masked);
    total += loaded.pi.total_mass() + loaded.masked;
    pis.push_back(std::move(loaded.pi));
  }
  grade("total mass error", std::abs(total - 1.0));
  for (const auto& v : violations(a.problem, pis)) {
    grade(v.sense == MarginalSense::equal ? "marginal " + v.name + " L1 error"
                                          : "cap " + v.name + " excess",
          v.l1);
  }
  rep.checks.push_back({"objective", objective(a.problem, pis), 0.0, true, true});
  if (cfg.problem == ProblemKind::single) {
    const auto mono = verify_monotone_support(pis.front(), 1e-9);
    rep.checks.push_back({"monotonicity x violation", mono.x_violation, 0.0, true, true});
    rep.checks.push_back({"monotonicity y violation", mono.y_violation, 0.0, true, true});
  }
  return rep;
}

std::vector<Trajectory> export_paths(const RunConfig& cfg, const std::string& coupling,
                                     std::size_t samples, std::size_t times) {
  const Assembled a = assemble(cfg);
  const std::size_t arity = csv_arity(coupling);
  std::size_t block = 0;
  if (cfg.problem == ProblemKind::partial && a.problem.blocks.size() == 2 && arity == 3) {
    block = 1;
  }
  if (a.problem.blocks[block].axes.size() != arity) {
    throw DomainError("export-paths: coupling arity does not match the config");
  }
  const Coupling pi = load_block(a.problem, block, coupling).pi;

  if (cfg.problem == ProblemKind::schedule) {
    SchedulePlan plan{pi, a.inputs.rate1, a.inputs.rate2, cfg.horizon,
                      cfg.pin_arrival, 0.0, {}};
    return schedule_trajectories(plan, samples, times);
  }
  TollConfig tc = cfg.toll_config();
  if (cfg.problem == ProblemKind::partial && arity == 3) tc.tolls = {cfg.tolls[1]};
  return export_trajectories(pi, tc, samples, times);
}

}  // namespace toll::cli
