#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "toll_transport/coupling.hpp"
#include "toll_transport/errors.hpp"
#include "toll_transport/measures.hpp"

namespace toll {

/// Crossing-time marginal of a single-toll coupling (axes x, y, t).
inline DiscreteMeasure extract_sigma(const Coupling& pi, std::size_t axis = 2) {
  if (axis >= pi.arity()) throw DomainError("extract_sigma: bad axis");
  return pi.marginal_measure(axis);
}

/// sigma_k / width_k, the piecewise-constant crossing-time density.
inline std::vector<double> density(const DiscreteMeasure& m) {
  std::vector<double> d(m.size());
  for (std::size_t k = 0; k < m.size(); ++k) {
    d[k] = m.weight(k) / m.grid().width(k);
  }
  return d;
}

/// Map from crossing-time cells to positions, nonincreasing in t.
struct MonotoneMap {
  struct Entry {
    std::size_t time = 0;   // index on the time grid
    std::size_t space = 0;  // index on the space grid
    double mass = 0.0;
  };

  Grid time_grid;
  Grid space_grid;
  /// T(t_k): position matched to the middle of cell k's mass.
  std::vector<double> values;
  /// The monotone coupling itself (north-west corner order), so that
  /// push-forwards are exact even when cells split between atoms.
  std::vector<Entry> plan;

  /// Source mass recovered by pushing sigma through the plan.
  std::vector<double> push_forward() const {
    std::vector<double> out(space_grid.size(), 0.0);
    for (const auto& e : plan) out[e.space] += e.mass;
    return out;
  }

  bool nonincreasing(double tol = 1e-12) const {
    for (std::size_t k = 1; k < values.size(); ++k) {
      if (values[k] > values[k - 1] + tol) return false;
    }
    return true;
  }
};

/**
 * @brief Monotone rearrangement between a one-sided measure and the
 * crossing-time law: earliest crossings take the mass with the largest
 * position. Left of the toll that is the mass nearest the toll; right of it,
 * the farthest destinations.
 */
inline MonotoneMap monotone_rearrangement(const DiscreteMeasure& source,
                                          const DiscreteMeasure& sigma,
                                          double toll = 0.0) {
  const auto [lo, hi] = source.support();
  if (!(hi < toll) && !(lo > toll)) {
    throw DomainError(
        "monotone_rearrangement: support must lie strictly on one side of "
        "the toll");
  }
  const double ms = source.mass();
  const double mt = sigma.mass();
  if (!(mt > 0.0)) throw DomainError("monotone_rearrangement: empty sigma");
  const double scale = ms / mt;

  MonotoneMap map;
  map.time_grid = sigma.grid();
  map.space_grid = source.grid();
  map.values.assign(sigma.size(), 0.0);

  // Atoms in decreasing position order.
  std::vector<std::size_t> atoms;
  for (std::size_t i = source.size(); i-- > 0;) {
    if (source.weight(i) > 0.0) atoms.push_back(i);
  }

  std::size_t a = 0;
  double left_in_atom = source.weight(atoms[0]);
  double consumed = 0.0;  // source mass handed out so far
  for (std::size_t k = 0; k < sigma.size(); ++k) {
    double need = sigma.weight(k) * scale;
    // Value: atom holding the midpoint of this cell's mass interval.
    {
      const double mid = consumed + 0.5 * need;
      double acc = 0.0;
      std::size_t pick = atoms.back();
      for (std::size_t i : atoms) {
        acc += source.weight(i);
        if (acc >= mid - 1e-15 && acc > 0.0) {
          pick = i;
          break;
        }
      }
      map.values[k] = source.node(pick);
    }
    while (need > 0.0 && a < atoms.size()) {
      const double take = std::min(need, left_in_atom);
      if (take > 0.0) map.plan.push_back({k, atoms[a], take});
      need -= take;
      left_in_atom -= take;
      consumed += take;
      if (left_in_atom <= 1e-15 * ms) {
        if (++a < atoms.size()) left_in_atom = source.weight(atoms[a]);
      }
    }
  }
  return map;
}

struct MonotonicityReport {
  double x_violation = 0.0;
  double y_violation = 0.0;
};

namespace detail {

/// Mass-weighted fraction of strictly ordered cell pairs (t < t', p != p')
/// that are increasing (p < p'), over a (space x time) matrix.
inline double increasing_pair_fraction(const std::vector<double>& st,
                                       std::size_t ns, std::size_t nt,
                                       double tol_mass) {
  struct Cell {
    std::size_t p, t;
    double m;
  };
  std::vector<Cell> cells;
  for (std::size_t p = 0; p < ns; ++p) {
    for (std::size_t t = 0; t < nt; ++t) {
      if (st[p * nt + t] > tol_mass) cells.push_back({p, t, st[p * nt + t]});
    }
  }
  double bad = 0.0, total = 0.0;
  for (std::size_t a = 0; a < cells.size(); ++a) {
    for (std::size_t b = 0; b < cells.size(); ++b) {
      if (!(cells[a].t < cells[b].t) || cells[a].p == cells[b].p) continue;
      const double w = cells[a].m * cells[b].m;
      total += w;
      if (cells[a].p < cells[b].p) bad += w;
    }
  }
  return total > 0.0 ? bad / total : 0.0;
}

}  // namespace detail

/**
 * @brief Departure from nonincreasing support on the (x, t) and (y, t)
 * marginals of a single-toll coupling with axes (x, y, t).
 *
 * Cells with mass <= tol_mass are ignored. Each side reports the
 * mass-weighted fraction of ordered pairs in which t and position increase
 * together: 0 on the graph of nonincreasing maps, 1 for a reversed graph.
 */
inline MonotonicityReport verify_monotone_support(const Coupling& pi,
                                                  double tol_mass = 0.0) {
  if (pi.arity() != 3) {
    throw DomainError("verify_monotone_support: needs axes (x, y, t)");
  }
  const auto sh = pi.shape();
  MonotonicityReport r;
  r.x_violation = detail::increasing_pair_fraction(pi.pair_marginal(0, 2),
                                                   sh[0], sh[2], tol_mass);
  r.y_violation = detail::increasing_pair_fraction(pi.pair_marginal(1, 2),
                                                   sh[1], sh[2], tol_mass);
  return r;
}

enum class AssembleMode {
  /// Glue the two monotone plans through sigma (exact marginals).
  glue,
  /// Put sigma_k on the nodes nearest to T^x(t_k) and T^y(t_k).
  snap,
};

/// (T^x, T^y, Id) pushed forward by sigma, as a coupling on (x, y, t).
inline Coupling assemble_coupling(const DiscreteMeasure& sigma,
                                  const MonotoneMap& tx, const MonotoneMap& ty,
                                  AssembleMode mode = AssembleMode::glue) {
  const Grid& xs = tx.space_grid;
  const Grid& ys = ty.space_grid;
  const std::size_t nx = xs.size(), ny = ys.size(), nt = sigma.size();
  if (tx.values.size() != nt || ty.values.size() != nt) {
    throw DomainError("assemble_coupling: maps are not defined on sigma's grid");
  }
  std::vector<double> mass(nx * ny * nt, 0.0);

  if (mode == AssembleMode::snap) {
    for (std::size_t k = 0; k < nt; ++k) {
      const double vx = tx.values[k], vy = ty.values[k];
      if (vx < xs.lower() || vx > xs.upper() || vy < ys.lower() ||
          vy > ys.upper()) {
        throw DomainError("assemble_coupling: map value outside the space grid");
      }
      mass[(xs.nearest(vx) * ny + ys.nearest(vy)) * nt + k] += sigma.weight(k);
    }
  } else {
    std::vector<std::vector<std::pair<std::size_t, double>>> px(nt), py(nt);
    for (const auto& e : tx.plan) px[e.time].emplace_back(e.space, e.mass);
    for (const auto& e : ty.plan) py[e.time].emplace_back(e.space, e.mass);
    for (std::size_t k = 0; k < nt; ++k) {
      double sx = 0.0;
      for (const auto& [i, m] : px[k]) sx += m;
      if (!(sx > 0.0)) continue;
      for (const auto& [i, mi] : px[k]) {
        for (const auto& [j, mj] : py[k]) {
          mass[(i * ny + j) * nt + k] += mi * mj / sx;
        }
      }
    }
  }
  return Coupling({xs, ys, sigma.grid()}, std::move(mass),
                  std::vector<std::uint8_t>(nx * ny * nt, 1));
}

/**
 * @brief Transport cost without a rate bound: the integral over q in [0, 1]
 * of (Q_nu(q) - Q_mu(q))^2, divided by t_f. Valid for mu left of the toll
 * and nu right of it, where the best crossing time turns the toll cost into
 * (y - x)^2 / t_f. Integrated exactly over the merged quantile breakpoints.
 */
inline double unconstrained_reference(const DiscreteMeasure& mu,
                                      const DiscreteMeasure& nu,
                                      const TollConfig& cfg) {
  cfg.validate();
  const double toll = cfg.tolls.front();
  if (!(mu.support().second < toll) || !(nu.support().first > toll)) {
    throw DomainError(
        "unconstrained_reference: mu must lie left of the toll and nu right");
  }
  const auto a = normalize(mu), b = normalize(nu);
  std::size_t i = 0, j = 0;
  auto next_pos = [](const DiscreteMeasure& m, std::size_t k) {
    while (k < m.size() && m.weight(k) <= 0.0) ++k;
    return k;
  };
  i = next_pos(a, 0);
  j = next_pos(b, 0);
  double ra = a.weight(i), rb = b.weight(j), acc = 0.0;
  while (i < a.size() && j < b.size()) {
    const double step = std::min(ra, rb);
    const double d = b.node(j) - a.node(i);
    acc += step * d * d;
    ra -= step;
    rb -= step;
    if (ra <= 1e-15) {
      i = next_pos(a, i + 1);
      if (i < a.size()) ra = a.weight(i);
    }
    if (rb <= 1e-15) {
      j = next_pos(b, j + 1);
      if (j < b.size()) rb = b.weight(j);
    }
  }
  return acc / cfg.horizon;
}

/// Piecewise-linear path of one sampled particle.
struct Trajectory {
  std::size_t id = 0;
  std::vector<double> times;
  std::vector<double> positions;
  std::vector<double> crossings;

  /// Linear interpolation between samples.
  double position_at(double t) const {
    if (t <= times.front()) return positions.front();
    if (t >= times.back()) return positions.back();
    const auto it = std::upper_bound(times.begin(), times.end(), t);
    const std::size_t h = static_cast<std::size_t>(it - times.begin());
    const double w = (t - times[h - 1]) / (times[h] - times[h - 1]);
    return positions[h - 1] + w * (positions[h] - positions[h - 1]);
  }
};

/**
 * @brief Systematic sampling of `n` cells proportional to mass, in row-major
 * cell order. Deterministic.
 */
inline std::vector<std::size_t> sample_cells(const std::vector<double>& mass,
                                             std::size_t n) {
  double total = 0.0;
  for (double m : mass) total += m;
  std::vector<std::size_t> out;
  if (!(total > 0.0) || n == 0) return out;
  out.reserve(n);
  double acc = 0.0;
  std::size_t cell = 0;
  for (std::size_t s = 0; s < n; ++s) {
    const double level = (static_cast<double>(s) + 0.5) / static_cast<double>(n) * total;
    while (cell + 1 < mass.size() && acc + mass[cell] < level) acc += mass[cell++];
    while (mass[cell] <= 0.0 && cell + 1 < mass.size()) acc += mass[cell++];
    out.push_back(cell);
  }
  return out;
}

namespace detail {

/// Path through the given waypoints (time, position); uniform samples on
/// [0, horizon] merged with the waypoint times.
inline Trajectory polyline(std::size_t id,
                           const std::vector<std::pair<double, double>>& knots,
                           double horizon, std::size_t n_times) {
  Trajectory tr;
  tr.id = id;
  std::vector<double> times;
  for (std::size_t s = 0; s < n_times; ++s) {
    times.push_back(n_times > 1 ? horizon * static_cast<double>(s) /
                                      static_cast<double>(n_times - 1)
                                : 0.0);
  }
  for (const auto& k : knots) times.push_back(k.first);
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end()), times.end());

  for (double t : times) {
    double pos = knots.front().second;
    if (t >= knots.back().first) {
      pos = knots.back().second;
    } else {
      for (std::size_t q = 1; q < knots.size(); ++q) {
        if (t <= knots[q].first) {
          const double t0 = knots[q - 1].first, t1 = knots[q].first;
          const double w = t1 > t0 ? (t - t0) / (t1 - t0) : 1.0;
          pos = knots[q - 1].second + w * (knots[q].second - knots[q - 1].second);
          break;
        }
      }
    }
    // Waypoints are hit exactly.
    for (const auto& k : knots) {
      if (k.first == t) pos = k.second;
    }
    tr.times.push_back(t);
    tr.positions.push_back(pos);
  }
  return tr;
}

}  // namespace detail

/**
 * @brief Sample particles from a single-toll (x, y, t) or two-toll
 * (x, y, t1, t2) coupling and return their constant-speed paths between
 * the source, each toll at its crossing time, and the destination.
 */
inline std::vector<Trajectory> export_trajectories(const Coupling& pi,
                                                   const TollConfig& cfg,
                                                   std::size_t n_samples,
                                                   std::size_t n_times) {
  cfg.validate();
  const std::size_t tolls = pi.arity() - 2;
  if (tolls == 0 || tolls > cfg.tolls.size()) {
    throw DomainError("export_trajectories: coupling arity does not match tolls");
  }
  const auto sh = pi.shape();
  const auto st = strides_of(sh);
  std::vector<Trajectory> out;
  std::size_t id = 0;
  for (std::size_t cell : sample_cells(pi.mass(), n_samples)) {
    auto index = [&](std::size_t a) { return (cell / st[a]) % sh[a]; };
    const double x = pi.axis(0).node(index(0));
    const double y = pi.axis(1).node(index(1));
    std::vector<std::pair<double, double>> knots{{0.0, x}};
    std::vector<double> crossings;
    for (std::size_t q = 0; q < tolls; ++q) {
      const double t = pi.axis(2 + q).node(index(2 + q));
      knots.emplace_back(t, cfg.tolls[q]);
      crossings.push_back(t);
    }
    knots.emplace_back(cfg.horizon, y);
    auto tr = detail::polyline(id++, knots, cfg.horizon, n_times);
    tr.crossings = std::move(crossings);
    out.push_back(std::move(tr));
  }
  return out;
}

}  // namespace toll
