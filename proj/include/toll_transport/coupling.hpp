#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "toll_transport/cost_kernels.hpp"
#include "toll_transport/errors.hpp"
#include "toll_transport/measures.hpp"

namespace toll {

/// Row-major strides of a dense tensor.
inline std::vector<std::size_t> strides_of(const std::vector<std::size_t>& shape) {
  std::vector<std::size_t> s(shape.size(), 1);
  for (std::size_t a = shape.size(); a-- > 1;) s[a - 1] = s[a] * shape[a];
  return s;
}

inline std::size_t cells_of(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

/// Sum of a dense tensor over every axis except `axis`.
inline std::vector<double> tensor_marginal(const std::vector<double>& data,
                                           const std::vector<std::size_t>& shape,
                                           std::size_t axis) {
  const auto st = strides_of(shape);
  std::vector<double> out(shape[axis], 0.0);
  for (std::size_t cell = 0; cell < data.size(); ++cell) {
    out[(cell / st[axis]) % shape[axis]] += data[cell];
  }
  return out;
}

/**
 * @brief Per-cell bound c_k = r(t_k) * width_k on the crossing-time marginal,
 * attached to the time grid it refers to.
 */
class RateSchedule {
 public:
  RateSchedule(Grid time_grid, std::vector<double> caps)
      : grid_(std::move(time_grid)), caps_(std::move(caps)) {
    if (caps_.size() != grid_.size()) {
      throw DomainError("RateSchedule: one cap per time cell required");
    }
    for (double c : caps_) {
      if (!(c >= 0.0) || !std::isfinite(c)) {
        throw DomainError("RateSchedule: caps must be finite and >= 0");
      }
    }
  }

  static RateSchedule constant(const Grid& g, double rate) {
    if (!(rate > 0.0)) throw DomainError("RateSchedule: rate must be > 0");
    return from_function(g, [rate](double) { return rate; });
  }

  static RateSchedule from_function(const Grid& g,
                                    const std::function<double(double)>& rate) {
    std::vector<double> caps(g.size());
    for (std::size_t k = 0; k < g.size(); ++k) {
      caps[k] = rate(g.node(k)) * g.width(k);
    }
    return RateSchedule(g, std::move(caps));
  }

  /// Piecewise-constant r(t): the value of the last breakpoint <= t, or the
  /// first value before the first breakpoint.
  static RateSchedule tabulated(const Grid& g,
                                std::vector<std::pair<double, double>> table) {
    if (table.empty()) throw DomainError("RateSchedule: empty rate table");
    std::sort(table.begin(), table.end());
    return from_function(g, [table](double t) {
      double r = table.front().second;
      for (const auto& [tb, rb] : table) {
        if (tb <= t) r = rb;
      }
      return r;
    });
  }

  /// Stand-in for r = infinity: every cell can hold twice the total mass.
  static RateSchedule unbounded(const Grid& g, double total_mass = 1.0) {
    return RateSchedule(g, std::vector<double>(g.size(),
                                               2.0 * std::max(1.0, total_mass)));
  }

  const Grid& grid() const { return grid_; }
  const std::vector<double>& caps() const { return caps_; }
  double cap(std::size_t k) const { return caps_[k]; }
  std::size_t size() const { return caps_.size(); }

  double total() const {
    return std::accumulate(caps_.begin(), caps_.end(), 0.0);
  }

 private:
  Grid grid_;
  std::vector<double> caps_;
};

struct FeasibilityCheck {
  bool feasible = false;
  double cap_mass = 0.0;
  /// max(0, mass - cap_mass)
  double deficit = 0.0;
};

/// The caps can absorb the transported mass: sum_k c_k >= mass (1e-12 slack
/// for the rounding in r * width sums).
inline FeasibilityCheck check_feasibility(const RateSchedule& rate,
                                          double mass = 1.0) {
  FeasibilityCheck out;
  out.cap_mass = rate.total();
  out.feasible = out.cap_mass >= mass - 1e-12;
  out.deficit = std::max(0.0, mass - out.cap_mass);
  return out;
}

inline void require_feasible(const RateSchedule& rate, double mass = 1.0) {
  const auto check = check_feasibility(rate, mass);
  if (!check.feasible) {
    throw Infeasible("rate caps sum to " + std::to_string(check.cap_mass) +
                         ", below the transported mass",
                     check.deficit);
  }
}

/**
 * @brief Dense nonnegative tensor over 3 or 4 grids with an admissibility
 * mask. Mass is zero outside the mask.
 */
class Coupling {
 public:
  Coupling() = default;

  Coupling(std::vector<Grid> axes, std::vector<double> mass,
           std::vector<std::uint8_t> mask)
      : axes_(std::move(axes)), mass_(std::move(mass)), mask_(std::move(mask)) {
    if (mass_.size() != cells_of(shape()) || mask_.size() != mass_.size()) {
      throw DomainError("Coupling: tensor size does not match axes");
    }
    for (std::size_t c = 0; c < mass_.size(); ++c) {
      if (!(mass_[c] >= 0.0)) throw DomainError("Coupling: negative mass");
      if (!mask_[c] && mass_[c] != 0.0) {
        throw DomainError("Coupling: mass outside the admissible mask");
      }
    }
  }

  std::size_t arity() const { return axes_.size(); }
  const std::vector<Grid>& axes() const { return axes_; }
  const Grid& axis(std::size_t a) const { return axes_[a]; }
  const std::vector<double>& mass() const { return mass_; }
  const std::vector<std::uint8_t>& mask() const { return mask_; }
  std::size_t cells() const { return mass_.size(); }

  std::vector<std::size_t> shape() const {
    std::vector<std::size_t> s;
    for (const auto& g : axes_) s.push_back(g.size());
    return s;
  }

  double at(std::span<const std::size_t> idx) const {
    const auto st = strides_of(shape());
    std::size_t cell = 0;
    for (std::size_t a = 0; a < idx.size(); ++a) cell += idx[a] * st[a];
    return mass_[cell];
  }

  double total_mass() const {
    return std::accumulate(mass_.begin(), mass_.end(), 0.0);
  }

  std::vector<double> marginal(std::size_t axis) const {
    return tensor_marginal(mass_, shape(), axis);
  }

  /// Marginal on one axis as a measure on that axis' grid (not renormalized).
  DiscreteMeasure marginal_measure(std::size_t axis) const {
    return DiscreteMeasure(axes_[axis], marginal(axis));
  }

  /// Two-axis marginal as a dense (shape[a] x shape[b]) row-major matrix.
  std::vector<double> pair_marginal(std::size_t a, std::size_t b) const {
    const auto sh = shape();
    const auto st = strides_of(sh);
    std::vector<double> out(sh[a] * sh[b], 0.0);
    for (std::size_t cell = 0; cell < mass_.size(); ++cell) {
      const std::size_t ia = (cell / st[a]) % sh[a];
      const std::size_t ib = (cell / st[b]) % sh[b];
      out[ia * sh[b] + ib] += mass_[cell];
    }
    return out;
  }

  Coupling scaled(double factor) const {
    Coupling out = *this;
    for (double& m : out.mass_) m *= factor;
    return out;
  }

 private:
  std::vector<Grid> axes_;
  std::vector<double> mass_;
  std::vector<std::uint8_t> mask_;
};

enum class MarginalSense { equal, at_most };

/// One axis of one block of a coupling problem.
struct AxisRef {
  std::size_t block = 0;
  std::size_t axis = 0;
};

/**
 * @brief Constraint on the summed marginals of one or more block axes.
 * All referenced axes share the same node count, equal to target.size().
 */
struct MarginalConstraint {
  std::string name;
  MarginalSense sense = MarginalSense::equal;
  std::vector<AxisRef> axes;
  std::vector<double> target;
};

/// Dense cost tensor over a set of grids; +inf entries are inadmissible.
struct CouplingBlock {
  std::vector<Grid> axes;
  std::vector<double> cost;

  std::vector<std::size_t> shape() const {
    std::vector<std::size_t> s;
    for (const auto& g : axes) s.push_back(g.size());
    return s;
  }
  std::size_t cells() const { return cost.size(); }
};

/**
 * @brief Linear transport problem over one or more coupling tensors: minimize
 * sum <cost, coupling> subject to marginal equalities and caps. Both solver
 * backends consume this form.
 */
struct CouplingProblem {
  std::vector<CouplingBlock> blocks;
  std::vector<MarginalConstraint> constraints;

  void validate() const {
    if (blocks.empty()) throw DomainError("CouplingProblem: no blocks");
    bool any_admissible = false;
    for (const auto& b : blocks) {
      if (b.cost.size() != cells_of(b.shape())) {
        throw DomainError("CouplingProblem: cost size does not match axes");
      }
      for (double c : b.cost) {
        if (std::isnan(c)) throw DomainError("CouplingProblem: NaN cost");
        if (c < kInfiniteCost) any_admissible = true;
      }
    }
    if (!any_admissible) {
      throw DomainError("CouplingProblem: every cell is masked");
    }
    for (const auto& c : constraints) {
      if (c.axes.empty()) {
        throw DomainError("CouplingProblem: constraint '" + c.name +
                          "' references no axis");
      }
      for (const auto& ref : c.axes) {
        if (ref.block >= blocks.size() ||
            ref.axis >= blocks[ref.block].axes.size() ||
            blocks[ref.block].axes[ref.axis].size() != c.target.size()) {
          throw DomainError("CouplingProblem: constraint '" + c.name +
                            "' references an invalid axis");
        }
      }
      for (double v : c.target) {
        if (!(v >= 0.0) || !std::isfinite(v)) {
          throw DomainError("CouplingProblem: constraint '" + c.name +
                            "' has a non-finite or negative target");
        }
      }
    }
  }

  std::vector<std::uint8_t> mask(std::size_t block) const {
    const auto& cost = blocks[block].cost;
    std::vector<std::uint8_t> m(cost.size());
    for (std::size_t i = 0; i < cost.size(); ++i) m[i] = cost[i] < kInfiniteCost;
    return m;
  }
};

/// Sum over blocks of <cost, mass> on admissible cells.
inline double objective(const CouplingProblem& problem,
                        const std::vector<Coupling>& couplings) {
  double acc = 0.0;
  for (std::size_t b = 0; b < problem.blocks.size(); ++b) {
    const auto& cost = problem.blocks[b].cost;
    const auto& mass = couplings[b].mass();
    for (std::size_t c = 0; c < cost.size(); ++c) {
      if (mass[c] > 0.0) acc += cost[c] * mass[c];
    }
  }
  return acc;
}

struct ConstraintViolation {
  std::string name;
  MarginalSense sense = MarginalSense::equal;
  /// L1 distance to the target (equalities) or summed excess over caps.
  double l1 = 0.0;
  /// Largest single-node deviation (equalities) or excess (caps).
  double max = 0.0;
};

/// Summed marginal of a constraint's axes under the given couplings.
inline std::vector<double> constraint_marginal(
    const MarginalConstraint& c, const std::vector<Coupling>& couplings) {
  std::vector<double> s(c.target.size(), 0.0);
  for (const auto& ref : c.axes) {
    const auto m = couplings[ref.block].marginal(ref.axis);
    for (std::size_t n = 0; n < s.size(); ++n) s[n] += m[n];
  }
  return s;
}

inline std::vector<ConstraintViolation> violations(
    const CouplingProblem& problem, const std::vector<Coupling>& couplings) {
  std::vector<ConstraintViolation> out;
  for (const auto& c : problem.constraints) {
    const auto s = constraint_marginal(c, couplings);
    ConstraintViolation v{c.name, c.sense, 0.0, 0.0};
    for (std::size_t n = 0; n < s.size(); ++n) {
      const double d = c.sense == MarginalSense::equal
                           ? std::abs(s[n] - c.target[n])
                           : std::max(0.0, s[n] - c.target[n]);
      v.l1 += d;
      v.max = std::max(v.max, d);
    }
    out.push_back(v);
  }
  return out;
}

/// Result shared by both backends.
struct CouplingSolution {
  std::vector<Coupling> couplings;
  double objective = 0.0;
};

/// x-marginal = mu, y-marginal = nu, t-marginal <= caps, single-toll
/// cost. Axes are (x, y, t).
inline CouplingProblem single_toll_problem(const DiscreteMeasure& mu,
                                           const DiscreteMeasure& nu,
                                           const RateSchedule& rate,
                                           double toll, double horizon) {
  const Grid& ts = rate.grid();
  CouplingProblem p;
  p.blocks.push_back(
      {{mu.grid(), nu.grid(), ts},
       single_toll_kernel(mu.grid(), nu.grid(), ts, toll, horizon).tabulate()});
  p.constraints.push_back({"x", MarginalSense::equal, {{0, 0}}, mu.weights()});
  p.constraints.push_back({"y", MarginalSense::equal, {{0, 1}}, nu.weights()});
  p.constraints.push_back({"t", MarginalSense::at_most, {{0, 2}}, rate.caps()});
  return p;
}

inline CouplingProblem single_toll_problem(const DiscreteMeasure& mu,
                                           const DiscreteMeasure& nu,
                                           const RateSchedule& rate,
                                           const TollConfig& cfg) {
  cfg.validate();
  return single_toll_problem(mu, nu, rate, cfg.tolls.front(), cfg.horizon);
}

/// Axes (x, y, t1, t2); cells with t2 <= t1 are masked.
inline CouplingProblem two_toll_problem(const DiscreteMeasure& mu,
                                        const DiscreteMeasure& nu,
                                        const RateSchedule& rate1,
                                        const RateSchedule& rate2,
                                        const TollConfig& cfg) {
  cfg.validate();
  if (cfg.tolls.size() != 2) {
    throw DomainError("two_toll_problem: exactly two tolls required");
  }
  CouplingProblem p;
  p.blocks.push_back({{mu.grid(), nu.grid(), rate1.grid(), rate2.grid()},
                      two_toll_kernel(mu.grid(), nu.grid(), rate1.grid(),
                                      rate2.grid(), cfg)
                          .tabulate()});
  p.constraints.push_back({"x", MarginalSense::equal, {{0, 0}}, mu.weights()});
  p.constraints.push_back({"y", MarginalSense::equal, {{0, 1}}, nu.weights()});
  p.constraints.push_back({"t1", MarginalSense::at_most, {{0, 2}}, rate1.caps()});
  p.constraints.push_back({"t2", MarginalSense::at_most, {{0, 3}}, rate2.caps()});
  return p;
}

}  // namespace toll
