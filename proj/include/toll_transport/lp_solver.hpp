#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "toll_transport/coupling.hpp"
#include "toll_transport/errors.hpp"

namespace toll {

struct SparseRow {
  std::vector<std::size_t> index;
  std::vector<double> value;
  double rhs = 0.0;
};

/**
 * @brief min c.x  s.t.  equalities (A_eq x = b_eq), inequalities
 * (A_in x <= b_in), x >= 0.
 *
 * When built from a CouplingProblem, `cells[j]` maps variable j back to its
 * (block, cell) position.
 */
struct LinearProgram {
  struct Cell {
    std::size_t block = 0;
    std::size_t cell = 0;
  };

  std::size_t num_vars = 0;
  std::vector<double> objective;
  std::vector<SparseRow> equalities;
  std::vector<SparseRow> inequalities;
  std::vector<Cell> cells;

  void validate() const {
    if (objective.size() != num_vars) {
      throw DomainError("LinearProgram: objective size mismatch");
    }
    auto check = [&](const SparseRow& r) {
      if (r.index.size() != r.value.size() || !std::isfinite(r.rhs)) {
        throw DomainError("LinearProgram: malformed row");
      }
      for (auto j : r.index) {
        if (j >= num_vars) throw DomainError("LinearProgram: bad variable index");
      }
    };
    for (const auto& r : equalities) check(r);
    for (const auto& r : inequalities) check(r);
  }

  /// Number of constraint rows in which each variable appears.
  std::vector<std::size_t> row_counts() const {
    std::vector<std::size_t> n(num_vars, 0);
    for (const auto& r : equalities) for (auto j : r.index) ++n[j];
    for (const auto& r : inequalities) for (auto j : r.index) ++n[j];
    return n;
  }
};

/// One variable per admissible cell; one row per constraint node.
inline LinearProgram to_linear_program(const CouplingProblem& problem) {
  problem.validate();
  LinearProgram lp;
  std::vector<std::vector<std::size_t>> var_of(problem.blocks.size());
  for (std::size_t b = 0; b < problem.blocks.size(); ++b) {
    const auto& cost = problem.blocks[b].cost;
    var_of[b].assign(cost.size(), std::numeric_limits<std::size_t>::max());
    for (std::size_t c = 0; c < cost.size(); ++c) {
      if (cost[c] < kInfiniteCost) {
        var_of[b][c] = lp.num_vars++;
        lp.objective.push_back(cost[c]);
        lp.cells.push_back({b, c});
      }
    }
  }
  if (lp.num_vars == 0) throw DomainError("to_linear_program: empty mask");

  for (const auto& con : problem.constraints) {
    std::vector<SparseRow> rows(con.target.size());
    for (std::size_t n = 0; n < rows.size(); ++n) rows[n].rhs = con.target[n];
    for (const auto& ref : con.axes) {
      const auto& block = problem.blocks[ref.block];
      const auto shape = block.shape();
      const auto st = strides_of(shape);
      for (std::size_t c = 0; c < block.cells(); ++c) {
        const std::size_t j = var_of[ref.block][c];
        if (j == std::numeric_limits<std::size_t>::max()) continue;
        auto& row = rows[(c / st[ref.axis]) % shape[ref.axis]];
        row.index.push_back(j);
        row.value.push_back(1.0);
      }
    }
    auto& dest = con.sense == MarginalSense::equal ? lp.equalities
                                                   : lp.inequalities;
    for (auto& r : rows) dest.push_back(std::move(r));
  }
  return lp;
}

inline LinearProgram build_single_toll_lp(const DiscreteMeasure& mu,
                                          const DiscreteMeasure& nu,
                                          const RateSchedule& rate,
                                          const TollConfig& cfg) {
  return to_linear_program(single_toll_problem(mu, nu, rate, cfg));
}

inline LinearProgram build_two_toll_lp(const DiscreteMeasure& mu,
                                       const DiscreteMeasure& nu,
                                       const RateSchedule& rate1,
                                       const RateSchedule& rate2,
                                       const TollConfig& cfg) {
  return to_linear_program(two_toll_problem(mu, nu, rate1, rate2, cfg));
}

struct LpOptions {
  /// 0 picks a size-dependent default.
  std::size_t max_iterations = 0;
  std::size_t refactor_every = 64;
  /// Consecutive degenerate pivots before pricing falls back to Bland's rule.
  std::size_t degenerate_switch = 50;
  double pivot_tol = 1e-9;
  double dual_tol = 1e-9;
  double feasibility_tol = 1e-9;
};

struct LpResult {
  std::vector<double> x;
  double objective = 0.0;
  std::size_t iterations = 0;
  /// max |A_eq x - b_eq| and max(0, A_in x - b_in).
  double primal_residual = 0.0;
  /// max(0, -d_j) over nonbasic columns.
  double dual_infeasibility = 0.0;
  /// sum_j x_j |d_j|.
  double complementarity = 0.0;
};

namespace detail {

/**
 * Dense-inverse revised simplex on the standard form
 *   [A_eq 0; A_in I] [x; s] = b,  x, s >= 0
 * with one artificial column per row that cannot start on a slack.
 * Rows are sign-normalized so that b >= 0.
 */
class RevisedSimplex {
 public:
  RevisedSimplex(const LinearProgram& lp, const LpOptions& opt)
      : lp_(lp), opt_(opt) {
    n_ = lp.num_vars;
    m_eq_ = lp.equalities.size();
    m_in_ = lp.inequalities.size();
    m_ = m_eq_ + m_in_;
    slack0_ = n_;
    art0_ = n_ + m_in_;
    ncols_ = art0_ + m_;

    rhs_.resize(m_);
    row_sign_.assign(m_, 1.0);
    std::vector<std::vector<std::pair<std::size_t, double>>> cols(n_);
    auto add_row = [&](const SparseRow& r, std::size_t i) {
      row_sign_[i] = r.rhs < 0.0 ? -1.0 : 1.0;
      rhs_[i] = row_sign_[i] * r.rhs;
      for (std::size_t e = 0; e < r.index.size(); ++e) {
        if (r.value[e] != 0.0) {
          cols[r.index[e]].emplace_back(i, row_sign_[i] * r.value[e]);
        }
      }
    };
    for (std::size_t i = 0; i < m_eq_; ++i) add_row(lp.equalities[i], i);
    for (std::size_t i = 0; i < m_in_; ++i) add_row(lp.inequalities[i], m_eq_ + i);

    col_start_.assign(n_ + 1, 0);
    for (std::size_t j = 0; j < n_; ++j) {
      col_start_[j + 1] = col_start_[j] + cols[j].size();
    }
    col_row_.reserve(col_start_[n_]);
    col_val_.reserve(col_start_[n_]);
    for (const auto& c : cols) {
      for (const auto& [i, v] : c) {
        col_row_.push_back(i);
        col_val_.push_back(v);
      }
    }

    max_iter_ = opt.max_iterations ? opt.max_iterations
                                   : std::max<std::size_t>(200000, 20 * (n_ + m_));
  }

  LpResult solve() {
    // Initial basis: slacks where the row sign allows it, artificials elsewhere.
    basis_.resize(m_);
    pos_.assign(ncols_, -1);
    for (std::size_t i = 0; i < m_; ++i) {
      const bool slack_ok = i >= m_eq_ && row_sign_[i] > 0.0;
      basis_[i] = slack_ok ? slack0_ + (i - m_eq_) : art0_ + i;
      pos_[basis_[i]] = static_cast<long>(i);
    }
    refactor();

    // Phase 1.
    cost_.assign(ncols_, 0.0);
    for (std::size_t i = 0; i < m_; ++i) cost_[art0_ + i] = 1.0;
    iterate(/*phase_one=*/true);
    double infeas = 0.0;
    for (std::size_t i = 0; i < m_; ++i) {
      if (basis_[i] >= art0_) infeas += xb_[i];
    }
    if (infeas > opt_.feasibility_tol) {
      throw Infeasible("linear program is infeasible (phase-1 residual " +
                           std::to_string(infeas) + ")",
                       infeas);
    }
    drive_out_artificials();

    // Phase 2.
    cost_.assign(ncols_, 0.0);
    for (std::size_t j = 0; j < n_; ++j) cost_[j] = lp_.objective[j];
    iterate(/*phase_one=*/false);
    refactor();
    return finish();
  }

 private:
  template <class F>
  void for_column(std::size_t j, F&& f) const {
    if (j < n_) {
      for (std::size_t e = col_start_[j]; e < col_start_[j + 1]; ++e) {
        f(col_row_[e], col_val_[e]);
      }
    } else if (j < art0_) {
      const std::size_t i = m_eq_ + (j - slack0_);
      f(i, row_sign_[i]);
    } else {
      f(j - art0_, 1.0);
    }
  }

  void refactor() {
    // Gauss-Jordan inversion of the basis matrix with partial pivoting.
    std::vector<double> a(m_ * m_, 0.0);
    for (std::size_t r = 0; r < m_; ++r) {
      for_column(basis_[r], [&](std::size_t i, double v) { a[i * m_ + r] = v; });
    }
    binv_.assign(m_ * m_, 0.0);
    for (std::size_t i = 0; i < m_; ++i) binv_[i * m_ + i] = 1.0;
    for (std::size_t c = 0; c < m_; ++c) {
      std::size_t p = c;
      for (std::size_t i = c + 1; i < m_; ++i) {
        if (std::abs(a[i * m_ + c]) > std::abs(a[p * m_ + c])) p = i;
      }
      if (std::abs(a[p * m_ + c]) < 1e-12) {
        throw Error("simplex: singular basis during refactorization");
      }
      if (p != c) {
        for (std::size_t k = 0; k < m_; ++k) {
          std::swap(a[p * m_ + k], a[c * m_ + k]);
          std::swap(binv_[p * m_ + k], binv_[c * m_ + k]);
        }
      }
      const double inv = 1.0 / a[c * m_ + c];
      for (std::size_t k = 0; k < m_; ++k) {
        a[c * m_ + k] *= inv;
        binv_[c * m_ + k] *= inv;
      }
      for (std::size_t i = 0; i < m_; ++i) {
        const double f = a[i * m_ + c];
        if (i == c || f == 0.0) continue;
        for (std::size_t k = 0; k < m_; ++k) {
          a[i * m_ + k] -= f * a[c * m_ + k];
          binv_[i * m_ + k] -= f * binv_[c * m_ + k];
        }
      }
    }
    xb_.assign(m_, 0.0);
    for (std::size_t r = 0; r < m_; ++r) {
      double s = 0.0;
      for (std::size_t i = 0; i < m_; ++i) s += binv_[r * m_ + i] * rhs_[i];
      xb_[r] = std::abs(s) < 1e-14 ? 0.0 : s;
    }
    since_refactor_ = 0;
  }

  std::vector<double> duals() const {
    std::vector<double> y(m_, 0.0);
    for (std::size_t r = 0; r < m_; ++r) {
      const double cb = cost_[basis_[r]];
      if (cb == 0.0) continue;
      const double* row = &binv_[r * m_];
      for (std::size_t i = 0; i < m_; ++i) y[i] += cb * row[i];
    }
    return y;
  }

  double reduced_cost(std::size_t j, const std::vector<double>& y) const {
    double d = cost_[j];
    for_column(j, [&](std::size_t i, double v) { d -= y[i] * v; });
    return d;
  }

  std::vector<double> ftran(std::size_t j) const {
    std::vector<double> alpha(m_, 0.0);
    for_column(j, [&](std::size_t i, double v) {
      for (std::size_t r = 0; r < m_; ++r) alpha[r] += binv_[r * m_ + i] * v;
    });
    return alpha;
  }

  void pivot(std::size_t row, std::size_t enter, const std::vector<double>& alpha) {
    const double theta = xb_[row] / alpha[row];
    for (std::size_t r = 0; r < m_; ++r) {
      if (r != row) {
        xb_[r] -= theta * alpha[r];
        if (xb_[r] < 0.0 && xb_[r] > -1e-13) xb_[r] = 0.0;
      }
    }
    xb_[row] = theta;

    double* prow = &binv_[row * m_];
    const double inv = 1.0 / alpha[row];
    for (std::size_t k = 0; k < m_; ++k) prow[k] *= inv;
    for (std::size_t r = 0; r < m_; ++r) {
      const double f = alpha[r];
      if (r == row || f == 0.0) continue;
      double* dst = &binv_[r * m_];
      for (std::size_t k = 0; k < m_; ++k) dst[k] -= f * prow[k];
    }

    pos_[basis_[row]] = -1;
    basis_[row] = enter;
    pos_[enter] = static_cast<long>(row);
    if (++since_refactor_ >= opt_.refactor_every) refactor();
  }

  void iterate(bool phase_one) {
    std::size_t degenerate_run = 0;
    while (true) {
      if (iterations_++ >= max_iter_) {
        throw IterationLimit("simplex: iteration limit reached");
      }
      const auto y = duals();
      const bool bland = degenerate_run >= opt_.degenerate_switch;

      // Pricing: Dantzig (most negative reduced cost), or Bland's first
      // improving index while stalled on a degenerate vertex.
      std::size_t enter = ncols_;
      double best = -opt_.dual_tol;
      for (std::size_t j = 0; j < art0_; ++j) {
        if (pos_[j] >= 0) continue;
        const double d = reduced_cost(j, y);
        if (d < best) {
          best = d;
          enter = j;
          if (bland) break;
        }
      }
      if (enter == ncols_) return;

      const auto alpha = ftran(enter);
      std::size_t leave = m_;
      double theta = std::numeric_limits<double>::infinity();
      for (std::size_t r = 0; r < m_; ++r) {
        const bool zero_artificial = !phase_one && basis_[r] >= art0_;
        if (zero_artificial && std::abs(alpha[r]) > opt_.pivot_tol) {
          // A redundant-row artificial must stay at zero: leave immediately.
          if (leave == m_ || theta > 0.0 || basis_[r] < basis_[leave]) {
            theta = 0.0;
            leave = r;
          }
          continue;
        }
        if (alpha[r] <= opt_.pivot_tol) continue;
        const double ratio = std::max(0.0, xb_[r]) / alpha[r];
        if (ratio < theta - 1e-15 ||
            (ratio <= theta + 1e-15 && leave < m_ &&
             (bland ? basis_[r] < basis_[leave]
                    : alpha[r] > alpha[leave]))) {
          theta = ratio;
          leave = r;
        }
      }
      if (leave == m_) throw Error("simplex: problem is unbounded");
      if (xb_[leave] < 0.0) xb_[leave] = 0.0;

      degenerate_run = theta <= 1e-12 ? degenerate_run + 1 : 0;
      pivot(leave, enter, alpha);
    }
  }

  void drive_out_artificials() {
    for (std::size_t r = 0; r < m_; ++r) {
      if (basis_[r] < art0_) continue;
      const double* row = &binv_[r * m_];
      for (std::size_t j = 0; j < art0_; ++j) {
        if (pos_[j] >= 0) continue;
        double a = 0.0;
        for_column(j, [&](std::size_t i, double v) { a += row[i] * v; });
        if (std::abs(a) > 1e-7) {
          pivot(r, j, ftran(j));
          break;
        }
      }
      // Otherwise the row is redundant and the artificial stays at zero.
    }
  }

  LpResult finish() {
    LpResult out;
    out.iterations = iterations_;
    out.x.assign(n_, 0.0);
    for (std::size_t r = 0; r < m_; ++r) {
      if (basis_[r] < n_) out.x[basis_[r]] = std::max(0.0, xb_[r]);
    }
    for (std::size_t j = 0; j < n_; ++j) {
      out.objective += lp_.objective[j] * out.x[j];
    }

    for (const auto& row : lp_.equalities) {
      double s = 0.0;
      for (std::size_t e = 0; e < row.index.size(); ++e) {
        s += row.value[e] * out.x[row.index[e]];
      }
      out.primal_residual = std::max(out.primal_residual, std::abs(s - row.rhs));
    }
    for (const auto& row : lp_.inequalities) {
      double s = 0.0;
      for (std::size_t e = 0; e < row.index.size(); ++e) {
        s += row.value[e] * out.x[row.index[e]];
      }
      out.primal_residual = std::max(out.primal_residual, s - row.rhs);
    }

    const auto y = duals();
    for (std::size_t j = 0; j < art0_; ++j) {
      const double d = reduced_cost(j, y);
      if (pos_[j] < 0) {
        out.dual_infeasibility = std::max(out.dual_infeasibility, -d);
      }
      if (j < n_) out.complementarity += out.x[j] * std::abs(d);
    }
    return out;
  }

  const LinearProgram& lp_;
  LpOptions opt_;
  std::size_t n_ = 0, m_eq_ = 0, m_in_ = 0, m_ = 0;
  std::size_t slack0_ = 0, art0_ = 0, ncols_ = 0;
  std::size_t max_iter_ = 0, iterations_ = 0, since_refactor_ = 0;
  std::vector<std::size_t> col_start_, col_row_;
  std::vector<double> col_val_, rhs_, row_sign_, cost_, binv_, xb_;
  std::vector<std::size_t> basis_;
  std::vector<long> pos_;
};

}  // namespace detail

/// Deterministic two-phase revised simplex.
inline LpResult solve_lp(const LinearProgram& lp, const LpOptions& options = {}) {
  lp.validate();
  return detail::RevisedSimplex(lp, options).solve();
}

struct LpCouplingSolution : CouplingSolution {
  LpResult lp;
};

/// Solve a coupling problem exactly and map the optimum back to tensors.
inline LpCouplingSolution solve_coupling_lp(const CouplingProblem& problem,
                                            const LpOptions& options = {}) {
  const LinearProgram lp = to_linear_program(problem);
  LpCouplingSolution out;
  out.lp = solve_lp(lp, options);
  std::vector<std::vector<double>> mass(problem.blocks.size());
  for (std::size_t b = 0; b < problem.blocks.size(); ++b) {
    mass[b].assign(problem.blocks[b].cells(), 0.0);
  }
  for (std::size_t j = 0; j < lp.num_vars; ++j) {
    mass[lp.cells[j].block][lp.cells[j].cell] = out.lp.x[j];
  }
  for (std::size_t b = 0; b < problem.blocks.size(); ++b) {
    out.couplings.emplace_back(problem.blocks[b].axes, std::move(mass[b]),
                               problem.mask(b));
  }
  out.objective = out.lp.objective;
  return out;
}

}  // namespace toll
