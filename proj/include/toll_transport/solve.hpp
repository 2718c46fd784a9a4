#pragma once

#include <optional>
#include <span>
#include <string>

#include "toll_transport/coupling.hpp"
#include "toll_transport/entropic_solver.hpp"
#include "toll_transport/lp_solver.hpp"
#include "toll_transport/measures.hpp"

namespace toll {

enum class Backend { lp, entropic };

inline std::string to_string(Backend b) {
  return b == Backend::lp ? "lp" : "entropic";
}

inline Backend parse_backend(const std::string& s) {
  if (s == "lp") return Backend::lp;
  if (s == "entropic") return Backend::entropic;
  throw DomainError("unknown backend '" + s + "'");
}

struct SolverOptions {
  Backend backend = Backend::entropic;
  EntropicConfig entropic;
  LpOptions lp;
};

struct Solution : CouplingSolution {
  Backend backend = Backend::entropic;
  std::optional<LpResult> lp;
  std::optional<SolveReport> report;
};

inline Solution solve(const CouplingProblem& problem,
                      const SolverOptions& options = {}) {
  Solution out;
  out.backend = options.backend;
  if (options.backend == Backend::lp) {
    auto s = solve_coupling_lp(problem, options.lp);
    out.couplings = std::move(s.couplings);
    out.objective = s.objective;
    out.lp = std::move(s.lp);
  } else {
    auto s = solve_entropic(problem, options.entropic);
    out.couplings = std::move(s.couplings);
    out.objective = s.objective;
    out.report = std::move(s.report);
  }
  return out;
}

/// Single toll on the line; axes (x, y, t).
inline Solution solve_single_toll(const DiscreteMeasure& mu,
                                  const DiscreteMeasure& nu,
                                  const RateSchedule& rate,
                                  const TollConfig& cfg,
                                  const SolverOptions& options = {}) {
  require_feasible(rate);
  return solve(single_toll_problem(mu, nu, rate, cfg), options);
}

/// Two tolls in succession; axes (x, y, t1, t2).
inline Solution solve_two_toll(const DiscreteMeasure& mu,
                               const DiscreteMeasure& nu,
                               const RateSchedule& rate1,
                               const RateSchedule& rate2,
                               const TollConfig& cfg,
                               const SolverOptions& options = {}) {
  require_feasible(rate1);
  require_feasible(rate2);
  return solve(two_toll_problem(mu, nu, rate1, rate2, cfg), options);
}

/// Point clouds in R^n through a point toll: solved on the distance laws,
/// with the source distances mirrored to the left of a toll at 0.
inline Solution solve_radial(const PointCloudND& mu, const PointCloudND& nu,
                             std::span<const double> toll,
                             const RateSchedule& rate, double horizon,
                             const SolverOptions& options = {}) {
  const auto mu1 = reflect(normalize(radial_reduce(mu, toll)));
  const auto nu1 = normalize(radial_reduce(nu, toll));
  return solve_single_toll(mu1, nu1, rate, TollConfig{{0.0}, horizon}, options);
}

}  // namespace toll
