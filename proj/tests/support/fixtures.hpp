#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/tools/minima.hpp>

#include "toll_transport/toll_transport.hpp"

namespace toll::testing {

/// Two-bump source left of the toll and two-bump target right of it.
inline MixtureSpec bimodal_source() {
  return {{{-1.3, 0.2, 0.45}, {-0.6, 0.15, 0.55}}, -2.0, -0.05};
}

inline MixtureSpec bimodal_target() {
  return {{{0.5, 0.15, 0.6}, {1.3, 0.2, 0.4}}, 0.05, 2.0};
}

inline DiscreteMeasure on_grid(const MixtureSpec& spec, std::size_t cells) {
  return discretize_mixture(spec, Grid::uniform(spec.lower, spec.upper, cells));
}

/// Atoms at the given positions; widths from the node gaps.
inline DiscreteMeasure atoms(std::vector<double> nodes, std::vector<double> weights) {
  const std::size_t n = nodes.size();
  std::vector<double> widths(n, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (i > 0) widths[i] = std::min(widths[i], nodes[i] - nodes[i - 1]);
    if (i + 1 < n) widths[i] = std::min(widths[i], nodes[i + 1] - nodes[i]);
  }
  return DiscreteMeasure(Grid(std::move(nodes), std::move(widths)), std::move(weights));
}

inline DiscreteMeasure dirac(double x) { return atoms({x}, {1.0}); }

/// Random truncated mixture with 1 to 3 components inside [lo, hi].
inline MixtureSpec random_mixture(std::mt19937_64& rng, double lo, double hi) {
  std::uniform_int_distribution<int> count(1, 3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  MixtureSpec spec{{}, lo, hi};
  const int n = count(rng);
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    const double w = 0.2 + u(rng);
    spec.components.push_back(
        {lo + (hi - lo) * (0.15 + 0.7 * u(rng)), (hi - lo) * (0.05 + 0.2 * u(rng)), w});
    total += w;
  }
  for (auto& c : spec.components) c.weight /= total;
  // Weights must sum to 1 to within 1e-9; fold rounding into the last one.
  double s = 0.0;
  for (std::size_t i = 0; i + 1 < spec.components.size(); ++i) s += spec.components[i].weight;
  spec.components.back().weight = 1.0 - s;
  return spec;
}

/// Random measure on a random strictly increasing grid in [lo, hi].
inline DiscreteMeasure random_measure(std::mt19937_64& rng, std::size_t n, double lo,
                                      double hi, bool allow_zero = true) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> nodes(n);
  for (auto& x : nodes) x = lo + (hi - lo) * u(rng);
  std::sort(nodes.begin(), nodes.end());
  nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
  std::vector<double> w(nodes.size());
  for (auto& v : w) v = (allow_zero && u(rng) < 0.2) ? 0.0 : u(rng) + 0.01;
  if (std::accumulate(w.begin(), w.end(), 0.0) == 0.0) w.front() = 1.0;
  return normalize(atoms(std::move(nodes), std::move(w)));
}

/// Adaptive Gauss-Kronrod integral of f over [a, b].
template <class F>
double integrate(F f, double a, double b) {
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, a, b, 15, 1e-13);
}

/// Brent minimum of f on [a, b]: (argmin, value).
template <class F>
std::pair<double, double> minimize(F f, double a, double b) {
  const auto r = boost::math::tools::brent_find_minima(f, a, b, 50);
  return {r.first, r.second};
}

/// Minimum of the mean pairing cost over all permutations; the optimal
/// transport value between two uniform n-point measures.
inline double best_permutation(const std::vector<std::vector<double>>& cost) {
  const std::size_t n = cost.size();
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += cost[i][perm[i]];
    best = std::min(best, s / static_cast<double>(n));
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

inline double l1_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d += std::abs(a[i] - b[i]);
  return d;
}

inline SolverOptions lp_options() {
  SolverOptions o;
  o.backend = Backend::lp;
  return o;
}

inline SolverOptions entropic_options(double epsilon, double tol = 1e-9) {
  SolverOptions o;
  o.backend = Backend::entropic;
  o.entropic.epsilon = epsilon;
  o.entropic.tol = tol;
  o.entropic.max_iters = 500000;
  return o;
}

}  // namespace toll::testing
