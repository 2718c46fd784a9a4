#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include "toll_transport/analysis.hpp"
#include "toll_transport/coupling.hpp"
#include "toll_transport/errors.hpp"
#include "toll_transport/measures.hpp"
#include "toll_transport/solve.hpp"

namespace toll {

/// Restrictions of a source measure to either side of the first toll.
struct SourceSplit {
  DiscreteMeasure minus;  // nodes < toll, unnormalized
  DiscreteMeasure plus;   // nodes > toll, unnormalized
  double m_minus = 0.0;
  double m_plus = 0.0;
};

inline SourceSplit split_source(const DiscreteMeasure& mu, double toll) {
  std::size_t below = 0, above = 0;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    if (mu.node(i) < toll) {
      below = i + 1;
    } else if (mu.node(i) == toll) {
      if (mu.weight(i) > 0.0) {
        throw DomainError("split_source: atom located exactly at the toll");
      }
    }
  }
  above = below;
  while (above < mu.size() && !(mu.node(above) > toll)) ++above;

  auto part = [&](std::size_t b, std::size_t e) {
    return DiscreteMeasure(mu.grid().slice(b, e),
                           {mu.weights().begin() + b, mu.weights().begin() + e});
  };
  SourceSplit s{part(0, below), part(above, mu.size()), 0.0, 0.0};
  s.m_minus = s.minus.mass();
  s.m_plus = s.plus.mass();
  return s;
}

/**
 * @brief Partial transport: the part of the source left of the first toll
 * clears both tolls, the rest clears only the second one.
 *
 * `two` has axes (x-, y, t1, t2), `one` has axes (x+, y, t2); either is
 * absent when its source part carries no mass.
 */
struct PartialPlan {
  std::optional<Coupling> two;
  std::optional<Coupling> one;
  DiscreteMeasure nu_minus;
  DiscreteMeasure nu_plus;
  SourceSplit split;
  double objective = 0.0;
  Solution solution;
};

/// The joint problem. Blocks appear in the order (two, one), skipping an
/// empty part. `fixed_nu_minus`, when given, pins the destination split.
inline CouplingProblem partial_problem(
    const SourceSplit& split, const DiscreteMeasure& nu,
    const RateSchedule& rate1, const RateSchedule& rate2,
    const TollConfig& cfg,
    const std::optional<std::vector<double>>& fixed_nu_minus = std::nullopt) {
  CouplingProblem p;
  std::optional<std::size_t> two, one;
  if (split.m_minus > 0.0) {
    two = p.blocks.size();
    p.blocks.push_back({{split.minus.grid(), nu.grid(), rate1.grid(), rate2.grid()},
                        two_toll_kernel(split.minus.grid(), nu.grid(),
                                        rate1.grid(), rate2.grid(), cfg)
                            .tabulate()});
  }
  if (split.m_plus > 0.0) {
    one = p.blocks.size();
    p.blocks.push_back({{split.plus.grid(), nu.grid(), rate2.grid()},
                        single_toll_kernel(split.plus.grid(), nu.grid(),
                                           rate2.grid(), cfg.tolls[1],
                                           cfg.horizon)
                            .tabulate()});
  }
  if (two) {
    p.constraints.push_back(
        {"x_minus", MarginalSense::equal, {{*two, 0}}, split.minus.weights()});
  }
  if (one) {
    p.constraints.push_back(
        {"x_plus", MarginalSense::equal, {{*one, 0}}, split.plus.weights()});
  }
  if (fixed_nu_minus && two && one) {
    std::vector<double> rest(nu.size());
    for (std::size_t j = 0; j < nu.size(); ++j) {
      rest[j] = std::max(0.0, nu.weight(j) - (*fixed_nu_minus)[j]);
    }
    p.constraints.push_back(
        {"y_minus", MarginalSense::equal, {{*two, 1}}, *fixed_nu_minus});
    p.constraints.push_back({"y_plus", MarginalSense::equal, {{*one, 1}}, rest});
  } else {
    std::vector<AxisRef> ys;
    if (two) ys.push_back({*two, 1});
    if (one) ys.push_back({*one, 1});
    p.constraints.push_back({"y", MarginalSense::equal, ys, nu.weights()});
  }
  if (two) {
    p.constraints.push_back(
        {"t1", MarginalSense::at_most, {{*two, 2}}, rate1.caps()});
  }
  // Both flows cross the second toll and share its rate bound.
  std::vector<AxisRef> t2;
  if (two) t2.push_back({*two, 3});
  if (one) t2.push_back({*one, 2});
  p.constraints.push_back({"t2", MarginalSense::at_most, t2, rate2.caps()});
  return p;
}

inline PartialPlan solve_partial(
    const DiscreteMeasure& mu, const DiscreteMeasure& nu,
    const TollConfig& cfg, const RateSchedule& rate1,
    const RateSchedule& rate2, const SolverOptions& options = {},
    const std::optional<std::vector<double>>& fixed_nu_minus = std::nullopt) {
  cfg.validate();
  if (cfg.tolls.size() != 2) {
    throw DomainError("solve_partial: exactly two tolls required");
  }
  const double xi1 = cfg.tolls[0], xi2 = cfg.tolls[1];
  if (!(nu.support().first > xi2)) {
    throw DomainError("solve_partial: destination must lie right of toll 2");
  }
  if (!(mu.support().second < xi2)) {
    throw DomainError("solve_partial: source must lie left of toll 2");
  }
  if (fixed_nu_minus && fixed_nu_minus->size() != nu.size()) {
    throw DomainError("solve_partial: fixed split has the wrong length");
  }

  PartialPlan plan;
  plan.split = split_source(mu, xi1);
  if (plan.split.m_minus > 0.0) require_feasible(rate1, plan.split.m_minus);
  require_feasible(rate2, mu.mass());

  const auto problem =
      partial_problem(plan.split, nu, rate1, rate2, cfg, fixed_nu_minus);
  plan.solution = solve(problem, options);
  plan.objective = plan.solution.objective;

  std::size_t b = 0;
  if (plan.split.m_minus > 0.0) plan.two = plan.solution.couplings[b++];
  if (plan.split.m_plus > 0.0) plan.one = plan.solution.couplings[b++];
  std::vector<double> zeros(nu.size(), 0.0);
  plan.nu_minus = DiscreteMeasure(nu.grid(), plan.two ? plan.two->marginal(1) : zeros);
  plan.nu_plus = DiscreteMeasure(nu.grid(), plan.one ? plan.one->marginal(1) : zeros);
  return plan;
}

/// Coupling over (x, y, t_d, t_a) with its time caps.
struct SchedulePlan {
  Coupling pi;
  RateSchedule departure_caps;
  RateSchedule arrival_caps;
  double horizon = 1.0;
  bool pin_arrival = false;
  double objective = 0.0;
  Solution solution;
};

inline CouplingProblem schedule_problem(const DiscreteMeasure& mu,
                                        const DiscreteMeasure& nu,
                                        const RateSchedule& departure,
                                        const Grid& arrival_grid,
                                        const std::optional<RateSchedule>& arrival) {
  CouplingProblem p;
  p.blocks.push_back(
      {{mu.grid(), nu.grid(), departure.grid(), arrival_grid},
       departure_arrival_kernel(mu.grid(), nu.grid(), departure.grid(),
                                arrival_grid)
           .tabulate()});
  p.constraints.push_back({"x", MarginalSense::equal, {{0, 0}}, mu.weights()});
  p.constraints.push_back({"y", MarginalSense::equal, {{0, 1}}, nu.weights()});
  p.constraints.push_back(
      {"td", MarginalSense::at_most, {{0, 2}}, departure.caps()});
  if (arrival) {
    p.constraints.push_back(
        {"ta", MarginalSense::at_most, {{0, 3}}, arrival->caps()});
  }
  return p;
}

/// Arrival grid and caps actually imposed: the last cell alone, uncapped,
/// when arrival is pinned.
inline std::pair<Grid, std::optional<RateSchedule>> arrival_axis(
    const RateSchedule& arrival_caps, bool pin_arrival) {
  const Grid& ag = arrival_caps.grid();
  if (!pin_arrival) return {ag, arrival_caps};
  const std::size_t k = ag.size() - 1;
  return {Grid({ag.node(k)}, {ag.width(k)}, AxisKind::time, ag.horizon()),
          std::nullopt};
}

/**
 * @brief Departure/arrival scheduling with cost
 * t_d / x^2 + (y - x)^2 - t_a / y^2 and t_d < t_a.
 *
 * With `pin_arrival` the arrival axis collapses to the last arrival cell and
 * arrival caps are not applied.
 */
inline SchedulePlan solve_schedule(const DiscreteMeasure& mu,
                                   const DiscreteMeasure& nu,
                                   const RateSchedule& departure_caps,
                                   const RateSchedule& arrival_caps,
                                   double horizon, bool pin_arrival,
                                   const SolverOptions& options = {}) {
  for (const auto* m : {&mu, &nu}) {
    for (std::size_t i = 0; i < m->size(); ++i) {
      if (m->weight(i) > 0.0 && m->node(i) == 0.0) {
        throw DomainError("solve_schedule: supports must avoid the origin");
      }
    }
  }
  for (const auto* g : {&departure_caps.grid(), &arrival_caps.grid()}) {
    if (!g->horizon() || std::abs(*g->horizon() - horizon) > 1e-12) {
      throw DomainError("solve_schedule: time grids must span the horizon");
    }
  }
  require_feasible(departure_caps);

  if (!pin_arrival) require_feasible(arrival_caps);
  const auto [arrival_grid, arrival] = arrival_axis(arrival_caps, pin_arrival);

  const auto problem =
      schedule_problem(mu, nu, departure_caps, arrival_grid, arrival);
  auto solution = solve(problem, options);
  SchedulePlan plan{solution.couplings.front(),
                    departure_caps,
                    pin_arrival ? RateSchedule::unbounded(arrival_grid)
                                : arrival_caps,
                    horizon,
                    pin_arrival,
                    solution.objective,
                    std::move(solution)};
  return plan;
}

struct WeightedPosition {
  double position = 0.0;
  double weight = 0.0;
};

namespace detail {

/// Hold at x until t_d, move linearly to reach y at t_a, hold at y after.
inline double schedule_position(double x, double y, double td, double ta,
                                double t) {
  if (t <= td) return x;
  if (t >= ta) return y;
  return x + (t - td) / (ta - td) * (y - x);
}

}  // namespace detail

/**
 * @brief Mass distribution at time t. With n_samples == 0 every support
 * cell contributes its exact mass; otherwise n_samples equally weighted
 * particles are drawn by systematic sampling.
 */
inline std::vector<WeightedPosition> schedule_interpolate(
    const SchedulePlan& plan, double t, std::size_t n_samples) {
  if (!(t >= 0.0 && t <= plan.horizon)) {
    throw DomainError("schedule_interpolate: t outside [0, horizon]");
  }
  const auto sh = plan.pi.shape();
  const auto st = strides_of(sh);
  auto at_cell = [&](std::size_t cell) {
    auto idx = [&](std::size_t a) { return (cell / st[a]) % sh[a]; };
    return detail::schedule_position(
        plan.pi.axis(0).node(idx(0)), plan.pi.axis(1).node(idx(1)),
        plan.pi.axis(2).node(idx(2)), plan.pi.axis(3).node(idx(3)), t);
  };
  std::vector<WeightedPosition> out;
  const auto& mass = plan.pi.mass();
  if (n_samples == 0) {
    for (std::size_t c = 0; c < mass.size(); ++c) {
      if (mass[c] > 0.0) out.push_back({at_cell(c), mass[c]});
    }
    return out;
  }
  const double w = 1.0 / static_cast<double>(n_samples);
  for (std::size_t c : sample_cells(mass, n_samples)) out.push_back({at_cell(c), w});
  return out;
}

/// Paths x -> (hold) -> t_d -> (linear) -> t_a -> (hold) -> y.
inline std::vector<Trajectory> schedule_trajectories(const SchedulePlan& plan,
                                                     std::size_t n_samples,
                                                     std::size_t n_times) {
  const auto sh = plan.pi.shape();
  const auto st = strides_of(sh);
  std::vector<Trajectory> out;
  std::size_t id = 0;
  for (std::size_t cell : sample_cells(plan.pi.mass(), n_samples)) {
    auto idx = [&](std::size_t a) { return (cell / st[a]) % sh[a]; };
    const double x = plan.pi.axis(0).node(idx(0));
    const double y = plan.pi.axis(1).node(idx(1));
    const double td = plan.pi.axis(2).node(idx(2));
    const double ta = plan.pi.axis(3).node(idx(3));
    auto tr = detail::polyline(id++, {{0.0, x}, {td, x}, {ta, y}, {plan.horizon, y}},
                               plan.horizon, n_times);
    tr.crossings = {td, ta};
    out.push_back(std::move(tr));
  }
  return out;
}

/// Mass-weighted mean departure time of each source node (NaN if empty).
inline std::vector<double> mean_departure_by_source(const SchedulePlan& plan) {
  const auto sh = plan.pi.shape();
  const auto st = strides_of(sh);
  std::vector<double> num(sh[0], 0.0), den(sh[0], 0.0);
  const auto& mass = plan.pi.mass();
  for (std::size_t c = 0; c < mass.size(); ++c) {
    if (mass[c] <= 0.0) continue;
    const std::size_t i = (c / st[0]) % sh[0];
    num[i] += mass[c] * plan.pi.axis(2).node((c / st[2]) % sh[2]);
    den[i] += mass[c];
  }
  std::vector<double> out(sh[0], std::numeric_limits<double>::quiet_NaN());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (den[i] > 0.0) out[i] = num[i] / den[i];
  }
  return out;
}

}  // namespace toll
