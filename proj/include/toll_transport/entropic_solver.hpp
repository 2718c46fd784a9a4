#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "toll_transport/coupling.hpp"
#include "toll_transport/errors.hpp"

namespace toll {

struct EntropicConfig {
  double epsilon = 0.01;
  /// Upper bound on projection cycles, summed over all epsilon stages.
  std::size_t max_iters = 100000;
  /// Stop once every constraint's L1 violation after a full cycle is <= tol.
  double tol = 1e-7;
  /// Stabilized mode: potentials in log space, kernel absorption and
  /// epsilon scaling. Plain mode iterates on exp(-cost / epsilon) directly.
  bool log_domain = true;

  void validate() const {
    if (!(epsilon > 0.0)) throw DomainError("EntropicConfig: epsilon <= 0");
    if (!(tol > 0.0)) throw DomainError("EntropicConfig: tol <= 0");
    if (max_iters == 0) throw DomainError("EntropicConfig: max_iters == 0");
  }
};

struct SolveReport {
  std::size_t iterations = 0;
  std::vector<ConstraintViolation> violations;
  double objective = 0.0;
  bool converged = false;
  /// Smallest and largest total mass seen after any projection of the last
  /// cycle (before the final normalization).
  double cycle_mass_min = 0.0;
  double cycle_mass_max = 0.0;

  double max_violation() const {
    double v = 0.0;
    for (const auto& c : violations) v = std::max(v, c.l1);
    return v;
  }
};

struct EntropicSolution : CouplingSolution {
  SolveReport report;
};

/// Raised when the cycle budget runs out; carries the last iterate.
class NotConverged : public Error {
 public:
  NotConverged(const std::string& what, EntropicSolution last)
      : Error(what), last_(std::move(last)) {}
  const EntropicSolution& last() const { return last_; }
  const SolveReport& report() const { return last_.report; }

 private:
  EntropicSolution last_;
};

/// exp(-cost / epsilon) on admissible cells, exactly 0 on +inf cells.
inline std::vector<double> gibbs_kernel(const CostKernel& cost, double epsilon,
                                        bool log_domain = false) {
  if (!(epsilon > 0.0)) throw DomainError("gibbs_kernel: epsilon <= 0");
  std::vector<double> k = cost.tabulate();
  bool any = false;
  for (double& v : k) {
    v = v < kInfiniteCost ? std::exp(-v / epsilon) : 0.0;
    any = any || v > 0.0;
  }
  if (!any && !log_domain) {
    throw NumericalUnderflow(
        "gibbs_kernel: every entry underflows; use log_domain or a larger "
        "epsilon");
  }
  return k;
}

/**
 * @brief KL projection onto {axis-marginal = target}: each slice along
 * `axis` is rescaled by target_n / current_n.
 */
inline Coupling kl_project_equality(const Coupling& pi, std::size_t axis,
                                    const DiscreteMeasure& target) {
  const auto current = pi.marginal(axis);
  if (target.size() != current.size()) {
    throw DomainError("kl_project_equality: target size mismatch");
  }
  std::vector<double> factor(current.size(), 0.0);
  for (std::size_t n = 0; n < current.size(); ++n) {
    if (target.weight(n) == 0.0) continue;
    if (!(current[n] > 0.0)) {
      throw SupportMismatch("kl_project_equality: zero marginal at node " +
                            std::to_string(n) + " where the target is positive");
    }
    factor[n] = target.weight(n) / current[n];
  }
  const auto shape = pi.shape();
  const auto st = strides_of(shape);
  std::vector<double> mass = pi.mass();
  for (std::size_t c = 0; c < mass.size(); ++c) {
    mass[c] *= factor[(c / st[axis]) % shape[axis]];
  }
  return Coupling(pi.axes(), std::move(mass), pi.mask());
}

/// KL projection onto {axis-marginal <= caps}: slice k scaled by
/// min(1, cap_k / current_k).
inline Coupling kl_project_cap(const Coupling& pi, std::size_t axis,
                               const RateSchedule& caps) {
  const auto current = pi.marginal(axis);
  if (caps.size() != current.size()) {
    throw DomainError("kl_project_cap: cap count mismatch");
  }
  std::vector<double> factor(current.size(), 1.0);
  for (std::size_t k = 0; k < current.size(); ++k) {
    if (current[k] > caps.cap(k)) factor[k] = caps.cap(k) / current[k];
  }
  const auto shape = pi.shape();
  const auto st = strides_of(shape);
  std::vector<double> mass = pi.mass();
  for (std::size_t c = 0; c < mass.size(); ++c) {
    mass[c] *= factor[(c / st[axis]) % shape[axis]];
  }
  return Coupling(pi.axes(), std::move(mass), pi.mask());
}

namespace detail {

/**
 * Iterative KL projections in scaling form. The iterate is
 *
 *   pi = exp((sum_c phi_c - cost) / eps)
 *      = kernel * prod_c u_c,   kernel = exp((sum_c absorbed_c - cost) / eps),
 *
 * with one potential phi_c per constraint node. Equality projections reset
 * phi_c exactly; the cap projection is the Dykstra step for the cap set,
 * which in this form keeps phi_c <= 0. Scalings that drift too far from 1
 * are absorbed into the kernel.
 */
class ScalingEngine {
 public:
  ScalingEngine(const CouplingProblem& problem, const EntropicConfig& cfg)
      : p_(problem), cfg_(cfg) {
    p_.validate();
    cfg_.validate();

    double cmin = kInfiniteCost, cmax = -kInfiniteCost;
    for (const auto& b : p_.blocks) {
      for (double c : b.cost) {
        if (c < kInfiniteCost) {
          cmin = std::min(cmin, c);
          cmax = std::max(cmax, c);
        }
      }
    }
    // A global shift leaves the minimizer unchanged (total mass is fixed).
    shift_ = cfg_.log_domain ? cmin : 0.0;
    spread_ = cmax - cmin;

    blocks_.resize(p_.blocks.size());
    for (std::size_t b = 0; b < p_.blocks.size(); ++b) {
      auto& info = blocks_[b];
      info.shape = p_.blocks[b].shape();
      info.con.assign(info.shape.size(), -1);
      info.marg.resize(info.shape.size());
      for (std::size_t a = 0; a < info.shape.size(); ++a) {
        info.marg[a].assign(info.shape[a], 0.0);
      }
    }
    const std::size_t nc = p_.constraints.size();
    phi_.resize(nc);
    absorbed_.resize(nc);
    u_.resize(nc);
    for (std::size_t c = 0; c < nc; ++c) {
      const auto& con = p_.constraints[c];
      for (const auto& ref : con.axes) {
        auto& slot = blocks_[ref.block].con[ref.axis];
        if (slot >= 0) {
          throw DomainError("solve_entropic: axis bound to two constraints");
        }
        slot = static_cast<long>(c);
      }
      phi_[c].assign(con.target.size(), 0.0);
      absorbed_[c].assign(con.target.size(), 0.0);
      u_[c].assign(con.target.size(), 1.0);
    }
  }

  EntropicSolution run() {
    std::vector<double> stages;
    if (cfg_.log_domain) {
      double e = std::max(cfg_.epsilon, spread_ / 40.0);
      while (e > cfg_.epsilon) {
        stages.push_back(e);
        e *= 0.5;
      }
    }
    stages.push_back(cfg_.epsilon);

    SolveReport report;
    for (std::size_t s = 0; s < stages.size(); ++s) {
      const bool last = s + 1 == stages.size();
      if (s > 0 && cycles_ >= cfg_.max_iters) {
        report.converged = false;
        break;
      }
      eps_ = stages[s];
      absorb();
      const double stage_tol = last ? cfg_.tol : std::max(cfg_.tol, 1e-3);
      const std::size_t budget =
          last ? cfg_.max_iters - std::min(cfg_.max_iters, cycles_)
               : std::min<std::size_t>(500, cfg_.max_iters - std::min(cfg_.max_iters, cycles_));
      report.converged = cycle(stage_tol, budget);
    }
    report.iterations = cycles_;
    report.cycle_mass_min = mass_min_;
    report.cycle_mass_max = mass_max_;

    EntropicSolution out = materialize();
    report.violations = violations(p_, out.couplings);
    report.objective = out.objective;
    out.report = report;
    if (!report.converged) {
      throw NotConverged("solve_entropic: no convergence after " +
                             std::to_string(cycles_) + " cycles (violation " +
                             std::to_string(last_violation_) + ")",
                         std::move(out));
    }
    return out;
  }

 private:
  struct BlockInfo {
    std::vector<std::size_t> shape;
    std::vector<long> con;  // constraint bound to each axis, -1 if none
    std::vector<double> kernel;
    std::vector<std::vector<double>> marg;  // per-axis marginals of last pass
  };

  static constexpr double kAbsorbAt = 50.0;

  /// Cycles until the post-cycle violation is <= tol. Returns true on success.
  bool cycle(double tol, std::size_t budget) {
    pass();
    for (std::size_t it = 0; it < budget; ++it) {
      mass_min_ = kInfiniteCost;
      mass_max_ = -kInfiniteCost;
      for (std::size_t c = 0; c < p_.constraints.size(); ++c) {
        if (c > 0) pass();
        project(c);
      }
      ++cycles_;
      pass();
      last_violation_ = current_violation();
      if (last_violation_ <= tol) return true;
    }
    return false;
  }

  std::vector<double> constraint_marginal(std::size_t c) const {
    const auto& con = p_.constraints[c];
    std::vector<double> s(con.target.size(), 0.0);
    for (const auto& ref : con.axes) {
      const auto& m = blocks_[ref.block].marg[ref.axis];
      for (std::size_t n = 0; n < s.size(); ++n) s[n] += m[n];
    }
    return s;
  }

  double current_violation() const {
    double worst = 0.0;
    for (std::size_t c = 0; c < p_.constraints.size(); ++c) {
      const auto& con = p_.constraints[c];
      const auto s = constraint_marginal(c);
      double l1 = 0.0;
      for (std::size_t n = 0; n < s.size(); ++n) {
        l1 += con.sense == MarginalSense::equal
                  ? std::abs(s[n] - con.target[n])
                  : std::max(0.0, s[n] - con.target[n]);
      }
      worst = std::max(worst, l1);
    }
    return worst;
  }

  double block_mass(std::size_t b) const {
    const auto& info = blocks_[b];
    for (std::size_t a = 0; a < info.shape.size(); ++a) {
      if (info.con[a] >= 0) {
        double m = 0.0;
        for (double v : info.marg[a]) m += v;
        return m;
      }
    }
    return 0.0;
  }

  /// Recompute every per-axis marginal of the current iterate.
  void pass() {
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
      auto& info = blocks_[b];
      const std::size_t arity = info.shape.size();
      const std::size_t last = arity - 1;
      const std::size_t inner = info.shape[last];
      const std::size_t outer = info.kernel.size() / inner;
      for (auto& m : info.marg) std::fill(m.begin(), m.end(), 0.0);

      const double* u_last =
          info.con[last] >= 0 ? u_[info.con[last]].data() : nullptr;
      double* m_last = info.marg[last].data();
      std::vector<std::size_t> idx(arity, 0);
      for (std::size_t o = 0; o < outer; ++o) {
        double pre = 1.0;
        for (std::size_t a = 0; a < last; ++a) {
          if (info.con[a] >= 0) pre *= u_[info.con[a]][idx[a]];
        }
        if (pre != 0.0) {
          const double* k = &info.kernel[o * inner];
          double row = 0.0;
          if (u_last) {
            for (std::size_t l = 0; l < inner; ++l) {
              const double w = k[l] * u_last[l];
              row += w;
              m_last[l] += pre * w;
            }
          } else {
            for (std::size_t l = 0; l < inner; ++l) {
              row += k[l];
              m_last[l] += pre * k[l];
            }
          }
          row *= pre;
          for (std::size_t a = 0; a < last; ++a) info.marg[a][idx[a]] += row;
        }
        for (std::size_t a = last; a-- > 0;) {
          if (++idx[a] < info.shape[a]) break;
          idx[a] = 0;
        }
      }
    }
  }

  void project(std::size_t c) {
    const auto& con = p_.constraints[c];
    const auto s = constraint_marginal(c);
    std::vector<double> factor(s.size(), 1.0);
    bool needs_absorb = false;
    std::vector<std::size_t> starved;

    for (std::size_t n = 0; n < s.size(); ++n) {
      const double target = con.target[n];
      if (con.sense == MarginalSense::equal) {
        if (target == 0.0) {
          factor[n] = 0.0;
          phi_[c][n] = -kInfiniteCost;
          u_[c][n] = 0.0;
          continue;
        }
        if (!(s[n] > 0.0)) {
          starved.push_back(n);
          continue;
        }
        const double lf = std::log(target / s[n]);
        factor[n] = target / s[n];
        phi_[c][n] += eps_ * lf;
        u_[c][n] *= factor[n];
      } else {
        if (target == 0.0) {
          factor[n] = 0.0;
          phi_[c][n] = -kInfiniteCost;
          u_[c][n] = 0.0;
          continue;
        }
        // Dykstra step for the cap: undo the previous cap scaling, then
        // clip to the cap. Keeps phi <= 0.
        const double undo = -phi_[c][n] / eps_;
        const double lf = s[n] > 0.0 ? std::min(undo, std::log(target / s[n]))
                                     : undo;
        factor[n] = std::exp(lf);
        phi_[c][n] += eps_ * lf;
        if (phi_[c][n] > 0.0) phi_[c][n] = 0.0;
        u_[c][n] *= factor[n];
      }
      if (!std::isfinite(u_[c][n])) {
        if (!cfg_.log_domain) {
          throw NumericalUnderflow(
              "solve_entropic: scaling overflow; use log_domain or a larger "
              "epsilon");
        }
        needs_absorb = true;
      } else if (u_[c][n] > 0.0 &&
                 std::abs(std::log(u_[c][n])) > kAbsorbAt) {
        needs_absorb = true;
      }
    }

    track_mass(c, factor);

    if (!starved.empty()) {
      if (!cfg_.log_domain) {
        throw NumericalUnderflow(
            "solve_entropic: marginal '" + con.name +
            "' underflows to zero; use log_domain or a larger epsilon");
      }
      rescue(c, starved);
      needs_absorb = true;
    }
    if (needs_absorb && cfg_.log_domain) absorb();
  }

  void track_mass(std::size_t c, const std::vector<double>& factor) {
    const auto& con = p_.constraints[c];
    std::vector<std::uint8_t> touched(blocks_.size(), 0);
    double total = 0.0;
    for (const auto& ref : con.axes) {
      touched[ref.block] = 1;
      const auto& m = blocks_[ref.block].marg[ref.axis];
      for (std::size_t n = 0; n < m.size(); ++n) total += m[n] * factor[n];
    }
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
      if (!touched[b]) total += block_mass(b);
    }
    mass_min_ = std::min(mass_min_, total);
    mass_max_ = std::max(mass_max_, total);
  }

  /// Log-space equality update for nodes whose marginal underflowed.
  void rescue(std::size_t c, const std::vector<std::size_t>& nodes) {
    const auto& con = p_.constraints[c];
    for (std::size_t n : nodes) {
      double best = -kInfiniteCost;
      std::vector<double> logs;
      for (const auto& ref : con.axes) {
        for_slice_logs(ref, n, [&](double lw) {
          logs.push_back(lw);
          best = std::max(best, lw);
        });
      }
      if (!(best > -kInfiniteCost)) {
        throw SupportMismatch("solve_entropic: constraint '" + con.name +
                              "' node " + std::to_string(n) +
                              " has positive target but no admissible cell");
      }
      double sum = 0.0;
      for (double lw : logs) sum += std::exp(lw - best);
      const double log_marg = best + std::log(sum);
      phi_[c][n] += eps_ * (std::log(con.target[n]) - log_marg);
    }
  }

  /// Calls f(log pi) for every admissible cell of the slice axis == n.
  template <class F>
  void for_slice_logs(const AxisRef& ref, std::size_t n, F&& f) const {
    const auto& info = blocks_[ref.block];
    const auto& cost = p_.blocks[ref.block].cost;
    const auto st = strides_of(info.shape);
    std::vector<std::size_t> idx(info.shape.size());
    for (std::size_t cell = 0; cell < cost.size(); ++cell) {
      if ((cell / st[ref.axis]) % info.shape[ref.axis] != n) continue;
      if (!(cost[cell] < kInfiniteCost)) continue;
      double acc = -(cost[cell] - shift_);
      for (std::size_t a = 0; a < info.shape.size(); ++a) {
        if (info.con[a] < 0) continue;
        acc += phi_[info.con[a]][(cell / st[a]) % info.shape[a]];
      }
      if (acc > -kInfiniteCost) f(acc / eps_);
    }
  }

  /// Fold the potentials into the kernel and reset the scalings.
  void absorb() {
    for (std::size_t c = 0; c < phi_.size(); ++c) {
      for (std::size_t n = 0; n < phi_[c].size(); ++n) {
        absorbed_[c][n] = phi_[c][n];
        u_[c][n] = phi_[c][n] > -kInfiniteCost ? 1.0 : 0.0;
      }
    }
    rebuild_kernels();
  }

  void rebuild_kernels() {
    bool any = false;
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
      auto& info = blocks_[b];
      const auto& cost = p_.blocks[b].cost;
      info.kernel.assign(cost.size(), 0.0);
      const std::size_t arity = info.shape.size();
      std::vector<std::size_t> idx(arity, 0);
      for (std::size_t cell = 0; cell < cost.size(); ++cell) {
        if (cost[cell] < kInfiniteCost) {
          double acc = -(cost[cell] - shift_);
          for (std::size_t a = 0; a < arity; ++a) {
            if (info.con[a] >= 0) acc += absorbed_[info.con[a]][idx[a]];
          }
          if (acc > -kInfiniteCost) {
            info.kernel[cell] = std::exp(acc / eps_);
            any = any || info.kernel[cell] > 0.0;
          }
        }
        for (std::size_t a = arity; a-- > 0;) {
          if (++idx[a] < info.shape[a]) break;
          idx[a] = 0;
        }
      }
    }
    if (!any && !cfg_.log_domain) {
      throw NumericalUnderflow(
          "solve_entropic: Gibbs kernel underflows everywhere; use log_domain "
          "or a larger epsilon");
    }
  }

  /// Normalized couplings of the current iterate.
  EntropicSolution materialize() const {
    EntropicSolution out;
    double total = 0.0;
    std::vector<std::vector<double>> mass(blocks_.size());
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
      const auto& info = blocks_[b];
      const std::size_t arity = info.shape.size();
      mass[b].assign(info.kernel.size(), 0.0);
      std::vector<std::size_t> idx(arity, 0);
      for (std::size_t cell = 0; cell < info.kernel.size(); ++cell) {
        double w = info.kernel[cell];
        for (std::size_t a = 0; a < arity && w != 0.0; ++a) {
          if (info.con[a] >= 0) w *= u_[info.con[a]][idx[a]];
        }
        mass[b][cell] = std::isfinite(w) ? w : 0.0;
        total += mass[b][cell];
        for (std::size_t a = arity; a-- > 0;) {
          if (++idx[a] < info.shape[a]) break;
          idx[a] = 0;
        }
      }
    }
    if (!(total > 0.0)) {
      throw NumericalUnderflow("solve_entropic: iterate has zero mass");
    }
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
      for (double& v : mass[b]) v /= total;
      out.couplings.emplace_back(p_.blocks[b].axes, std::move(mass[b]),
                                 p_.mask(b));
    }
    out.objective = objective(p_, out.couplings);
    return out;
  }

  const CouplingProblem& p_;
  EntropicConfig cfg_;
  double shift_ = 0.0;
  double spread_ = 0.0;
  double eps_ = 1.0;
  std::vector<BlockInfo> blocks_;
  std::vector<std::vector<double>> phi_, absorbed_, u_;
  std::size_t cycles_ = 0;
  double last_violation_ = kInfiniteCost;
  double mass_min_ = 0.0, mass_max_ = 0.0;
};

}  // namespace detail

/**
 * @brief Entropy-regularized solve: cyclic KL projections in the fixed order
 * of `problem.constraints`, with Dykstra corrections on caps.
 *
 * Throws NotConverged (carrying the last iterate), NumericalUnderflow or
 * SupportMismatch.
 */
inline EntropicSolution solve_entropic(const CouplingProblem& problem,
                                       const EntropicConfig& cfg = {}) {
  return detail::ScalingEngine(problem, cfg).run();
}

/// Single-toll convenience: axes (x, y, t).
inline EntropicSolution solve_entropic(const DiscreteMeasure& mu,
                                       const DiscreteMeasure& nu,
                                       const RateSchedule& rate,
                                       const TollConfig& toll,
                                       const EntropicConfig& cfg = {}) {
  require_feasible(rate);
  return solve_entropic(single_toll_problem(mu, nu, rate, toll), cfg);
}

}  // namespace toll
