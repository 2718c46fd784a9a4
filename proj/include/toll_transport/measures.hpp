#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "toll_transport/errors.hpp"

namespace toll {

enum class AxisKind { space, time };

/**
 * @brief Discretization of one axis: node positions and the width of the
 * cell each node represents.
 *
 * Time grids carry their horizon and hold interior nodes only, so that
 * 1/t and 1/(t_f - t) stay finite on every node.
 */
class Grid {
 public:
  Grid() = default;

  Grid(std::vector<double> nodes, std::vector<double> widths,
       AxisKind kind = AxisKind::space,
       std::optional<double> horizon = std::nullopt)
      : nodes_(std::move(nodes)),
        widths_(std::move(widths)),
        kind_(kind),
        horizon_(horizon) {
    validate();
  }

  /// `cells` equal cells over [a, b], one node at each cell midpoint.
  static Grid uniform(double a, double b, std::size_t cells,
                      AxisKind kind = AxisKind::space) {
    if (!(a < b) || cells == 0) {
      throw DomainError("Grid::uniform: need a < b and cells > 0");
    }
    const double h = (b - a) / static_cast<double>(cells);
    std::vector<double> nodes(cells);
    for (std::size_t i = 0; i < cells; ++i) {
      nodes[i] = a + (static_cast<double>(i) + 0.5) * h;
    }
    return Grid(std::move(nodes), std::vector<double>(cells, h), kind);
  }

  /// Crossing-time grid t_k = (k + 1/2) t_f / K.
  static Grid time(double horizon, std::size_t cells) {
    if (!(horizon > 0.0) || cells == 0) {
      throw DomainError("Grid::time: need horizon > 0 and cells > 0");
    }
    const double h = horizon / static_cast<double>(cells);
    std::vector<double> nodes(cells);
    for (std::size_t k = 0; k < cells; ++k) {
      nodes[k] = (static_cast<double>(k) + 0.5) * h;
    }
    return Grid(std::move(nodes), std::vector<double>(cells, h),
                AxisKind::time, horizon);
  }

  std::size_t size() const { return nodes_.size(); }
  bool empty() const { return nodes_.empty(); }
  const std::vector<double>& nodes() const { return nodes_; }
  const std::vector<double>& widths() const { return widths_; }
  double node(std::size_t i) const { return nodes_[i]; }
  double width(std::size_t i) const { return widths_[i]; }
  AxisKind kind() const { return kind_; }
  std::optional<double> horizon() const { return horizon_; }

  /// Left edge of the first cell.
  double lower() const { return nodes_.front() - 0.5 * widths_.front(); }
  /// Right edge of the last cell.
  double upper() const { return nodes_.back() + 0.5 * widths_.back(); }

  /// Sub-grid made of nodes [begin, end).
  Grid slice(std::size_t begin, std::size_t end) const {
    if (begin > end || end > size()) {
      throw DomainError("Grid::slice: range out of bounds");
    }
    return Grid({nodes_.begin() + begin, nodes_.begin() + end},
                {widths_.begin() + begin, widths_.begin() + end}, kind_,
                horizon_);
  }

  /// Index of the node closest to x; ties go to the lower index.
  std::size_t nearest(double x) const {
    auto it = std::lower_bound(nodes_.begin(), nodes_.end(), x);
    if (it == nodes_.begin()) return 0;
    if (it == nodes_.end()) return size() - 1;
    const auto hi = static_cast<std::size_t>(it - nodes_.begin());
    return (x - nodes_[hi - 1] <= nodes_[hi] - x) ? hi - 1 : hi;
  }

  bool operator==(const Grid& other) const = default;

 private:
  void validate() const {
    if (nodes_.size() != widths_.size()) {
      throw DomainError("Grid: nodes and widths differ in length");
    }
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      if (!std::isfinite(nodes_[i]) || !(widths_[i] > 0.0)) {
        throw DomainError("Grid: nodes must be finite and widths positive");
      }
      if (i > 0 && !(nodes_[i] > nodes_[i - 1])) {
        throw DomainError("Grid: nodes must be strictly increasing");
      }
    }
    if (kind_ == AxisKind::time) {
      if (!horizon_ || !(*horizon_ > 0.0)) {
        throw DomainError("Grid: time grids need a positive horizon");
      }
      if (!nodes_.empty() &&
          !(nodes_.front() > 0.0 && nodes_.back() < *horizon_)) {
        throw DomainError("Grid: time nodes must lie inside (0, horizon)");
      }
    }
  }

  std::vector<double> nodes_;
  std::vector<double> widths_;
  AxisKind kind_ = AxisKind::space;
  std::optional<double> horizon_;
};

/// Nonnegative weights attached to the nodes of a grid.
class DiscreteMeasure {
 public:
  DiscreteMeasure() = default;

  DiscreteMeasure(Grid grid, std::vector<double> weights)
      : grid_(std::move(grid)), weights_(std::move(weights)) {
    if (weights_.size() != grid_.size()) {
      throw DomainError("DiscreteMeasure: one weight per node required");
    }
    for (double w : weights_) {
      if (!(w >= 0.0) || !std::isfinite(w)) {
        throw DomainError("DiscreteMeasure: weights must be finite and >= 0");
      }
    }
  }

  const Grid& grid() const { return grid_; }
  const std::vector<double>& weights() const { return weights_; }
  std::size_t size() const { return weights_.size(); }
  double node(std::size_t i) const { return grid_.node(i); }
  double weight(std::size_t i) const { return weights_[i]; }

  double mass() const {
    return std::accumulate(weights_.begin(), weights_.end(), 0.0);
  }

  /// Smallest and largest node carrying positive weight.
  std::pair<double, double> support() const {
    std::optional<double> lo, hi;
    for (std::size_t i = 0; i < size(); ++i) {
      if (weights_[i] > 0.0) {
        if (!lo) lo = grid_.node(i);
        hi = grid_.node(i);
      }
    }
    if (!lo) throw DomainError("DiscreteMeasure: empty support");
    return {*lo, *hi};
  }

 private:
  Grid grid_;
  std::vector<double> weights_;
};

inline DiscreteMeasure normalize(const DiscreteMeasure& m) {
  const double total = m.mass();
  if (!(total > 0.0)) throw DomainError("normalize: measure has zero mass");
  std::vector<double> w = m.weights();
  for (double& v : w) v /= total;
  return DiscreteMeasure(m.grid(), std::move(w));
}

/// Right-continuous distribution function.
inline double cdf(const DiscreteMeasure& m, double x) {
  double acc = 0.0;
  for (std::size_t i = 0; i < m.size() && m.node(i) <= x; ++i) {
    acc += m.weight(i);
  }
  return std::min(acc, 1.0);
}

/**
 * @brief Left-continuous generalized inverse of `cdf`:
 * quantile(q) = min { x : cdf(x) >= q }.
 *
 * quantile(0) is the lower end of the support. Cumulative sums are compared
 * with a 1e-12 slack so that partial sums like 0.1 + 0.2 + 0.2 still hit 0.5.
 */
inline double quantile(const DiscreteMeasure& m, double q) {
  if (!(q >= 0.0 && q <= 1.0)) {
    throw DomainError("quantile: level must lie in [0, 1]");
  }
  if (q == 0.0) return m.support().first;
  double acc = 0.0;
  std::optional<double> last;
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (m.weight(i) <= 0.0) continue;
    acc += m.weight(i);
    last = m.node(i);
    if (acc >= q - 1e-12) return m.node(i);
  }
  if (!last) throw DomainError("quantile: empty support");
  return *last;
}

/// Mirror image x -> -x (nodes re-sorted).
inline DiscreteMeasure reflect(const DiscreteMeasure& m) {
  const std::size_t n = m.size();
  std::vector<double> nodes(n), widths(n), weights(n);
  for (std::size_t i = 0; i < n; ++i) {
    nodes[i] = -m.node(n - 1 - i);
    widths[i] = m.grid().width(n - 1 - i);
    weights[i] = m.weight(n - 1 - i);
  }
  return DiscreteMeasure(Grid(std::move(nodes), std::move(widths)),
                         std::move(weights));
}

/// Truncated Gaussian mixture used to generate test marginals.
struct MixtureComponent {
  double mean = 0.0;
  double stddev = 1.0;
  double weight = 1.0;
};

struct MixtureSpec {
  std::vector<MixtureComponent> components;
  double lower = -1.0;
  double upper = 1.0;

  void validate() const {
    if (components.empty()) throw DomainError("MixtureSpec: no components");
    double total = 0.0;
    for (const auto& c : components) {
      if (!(c.stddev > 0.0)) throw DomainError("MixtureSpec: stddev <= 0");
      if (!(c.weight >= 0.0)) throw DomainError("MixtureSpec: weight < 0");
      total += c.weight;
    }
    if (std::abs(total - 1.0) > 1e-9) {
      throw DomainError("MixtureSpec: component weights must sum to 1");
    }
    if (!(lower < upper)) throw DomainError("MixtureSpec: need lower < upper");
  }

  /// Untruncated mixture density.
  double density(double x) const {
    double acc = 0.0;
    for (const auto& c : components) {
      const double z = (x - c.mean) / c.stddev;
      acc += c.weight * std::exp(-0.5 * z * z) /
             (c.stddev * std::sqrt(2.0 * std::numbers::pi));
    }
    return acc;
  }
};

/// Midpoint rule: weight_i proportional to density(node_i) * width_i on the
/// truncation interval, zero outside it.
inline DiscreteMeasure discretize_mixture(const MixtureSpec& spec,
                                          const Grid& grid) {
  spec.validate();
  if (grid.empty() || grid.lower() > spec.lower + 1e-12 ||
      grid.upper() < spec.upper - 1e-12) {
    throw DomainError("discretize_mixture: grid does not cover [" +
                      std::to_string(spec.lower) + ", " +
                      std::to_string(spec.upper) + "]");
  }
  std::vector<double> w(grid.size(), 0.0);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double x = grid.node(i);
    if (x >= spec.lower && x <= spec.upper) {
      w[i] = spec.density(x) * grid.width(i);
    }
  }
  return normalize(DiscreteMeasure(grid, std::move(w)));
}

/// Weighted point set in R^n.
class PointCloudND {
 public:
  PointCloudND(std::vector<std::vector<double>> points,
               std::vector<double> weights)
      : points_(std::move(points)), weights_(std::move(weights)) {
    if (points_.size() != weights_.size() || points_.empty()) {
      throw DomainError("PointCloudND: one weight per point required");
    }
    dim_ = points_.front().size();
    for (const auto& p : points_) {
      if (p.size() != dim_) throw DomainError("PointCloudND: ragged points");
    }
    for (double w : weights_) {
      if (!(w >= 0.0)) throw DomainError("PointCloudND: negative weight");
    }
  }

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return points_.size(); }
  const std::vector<std::vector<double>>& points() const { return points_; }
  const std::vector<double>& weights() const { return weights_; }

 private:
  std::vector<std::vector<double>> points_;
  std::vector<double> weights_;
  std::size_t dim_ = 0;
};

/**
 * @brief Law of the distance to the toll, ||x - toll||, under the cloud.
 *
 * Distances closer than 1e-12 are merged (weights summed). Cell widths are
 * half the gaps to the neighbouring nodes on each side.
 */
inline DiscreteMeasure radial_reduce(const PointCloudND& cloud,
                                     std::span<const double> toll) {
  if (toll.size() != cloud.dim()) {
    throw DomainError("radial_reduce: toll dimension mismatch");
  }
  std::vector<std::pair<double, double>> dw(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    double s = 0.0;
    for (std::size_t d = 0; d < cloud.dim(); ++d) {
      const double diff = cloud.points()[i][d] - toll[d];
      s += diff * diff;
    }
    dw[i] = {std::sqrt(s), cloud.weights()[i]};
  }
  std::stable_sort(dw.begin(), dw.end(), [](const auto& a, const auto& b) {
    return a.first < b.first;
  });

  std::vector<double> nodes, weights;
  for (const auto& [d, w] : dw) {
    if (!nodes.empty() && d - nodes.back() <= 1e-12) {
      weights.back() += w;
    } else {
      nodes.push_back(d);
      weights.push_back(w);
    }
  }

  const std::size_t n = nodes.size();
  std::vector<double> widths(n, 1.0);
  if (n > 1) {
    for (std::size_t i = 0; i < n; ++i) {
      const double left = i > 0 ? nodes[i] - nodes[i - 1] : nodes[1] - nodes[0];
      const double right =
          i + 1 < n ? nodes[i + 1] - nodes[i] : nodes[n - 1] - nodes[n - 2];
      widths[i] = 0.5 * (left + right);
    }
  }
  return DiscreteMeasure(Grid(std::move(nodes), std::move(widths)),
                         std::move(weights));
}

/**
 * @brief 1-Wasserstein distance between two weighted point sets on the line,
 * computed as the L1 distance between their distribution functions.
 */
inline double wasserstein1(std::span<const double> xa, std::span<const double> wa,
                           std::span<const double> xb, std::span<const double> wb) {
  std::vector<std::pair<double, double>> events;
  events.reserve(xa.size() + xb.size());
  for (std::size_t i = 0; i < xa.size(); ++i) events.emplace_back(xa[i], wa[i]);
  for (std::size_t i = 0; i < xb.size(); ++i) events.emplace_back(xb[i], -wb[i]);
  std::sort(events.begin(), events.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  double diff = 0.0, total = 0.0;
  for (std::size_t i = 0; i + 1 < events.size(); ++i) {
    diff += events[i].second;
    total += std::abs(diff) * (events[i + 1].first - events[i].first);
  }
  return total;
}

inline double wasserstein1(const DiscreteMeasure& a, const DiscreteMeasure& b) {
  return wasserstein1(a.grid().nodes(), a.weights(), b.grid().nodes(),
                      b.weights());
}

}  // namespace toll
