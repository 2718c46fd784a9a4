#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include "toll_transport/errors.hpp"
#include "toll_transport/measures.hpp"

namespace toll {

inline constexpr double kInfiniteCost = std::numeric_limits<double>::infinity();

/// Toll positions along the line and the transport horizon t_f.
struct TollConfig {
  std::vector<double> tolls{0.0};
  double horizon = 1.0;

  void validate() const {
    if (!(horizon > 0.0) || !std::isfinite(horizon)) {
      throw DomainError("TollConfig: horizon must be positive and finite");
    }
    if (tolls.empty()) throw DomainError("TollConfig: no toll positions");
    for (std::size_t i = 0; i < tolls.size(); ++i) {
      if (!std::isfinite(tolls[i])) {
        throw DomainError("TollConfig: toll positions must be finite");
      }
      if (i > 0 && !(tolls[i] > tolls[i - 1])) {
        throw DomainError("TollConfig: toll positions must be increasing");
      }
    }
  }
};

/// |toll - x|^2 / t + |y - toll|^2 / (t_f - t), for 0 < t < t_f.
inline double single_toll_cost(double x, double y, double t, double toll,
                               double horizon) {
  if (!(t > 0.0 && t < horizon)) {
    throw DomainError("single_toll_cost: t must lie in (0, t_f)");
  }
  const double a = toll - x;
  const double b = y - toll;
  return a * a / t + b * b / (horizon - t);
}

inline double single_toll_cost(double x, double y, double t,
                               const TollConfig& cfg) {
  return single_toll_cost(x, y, t, cfg.tolls.front(), cfg.horizon);
}

/// Three-leg cost through tolls[0] then tolls[1]; +inf unless t1 < t2.
inline double two_toll_cost(double x, double y, double t1, double t2,
                            const TollConfig& cfg) {
  if (cfg.tolls.size() < 2) {
    throw DomainError("two_toll_cost: configuration needs two tolls");
  }
  if (!(t1 > 0.0 && t1 < cfg.horizon && t2 > 0.0 && t2 < cfg.horizon)) {
    throw DomainError("two_toll_cost: crossing times must lie in (0, t_f)");
  }
  if (t2 <= t1) return kInfiniteCost;
  const double a = cfg.tolls[0] - x;
  const double b = cfg.tolls[1] - cfg.tolls[0];
  const double c = y - cfg.tolls[1];
  return a * a / t1 + b * b / (t2 - t1) + c * c / (cfg.horizon - t2);
}

/// Source-to-toll leg with the toll at the origin: x^2 / t.
inline double xt_leg_cost(double x, double t) {
  if (!(t > 0.0)) throw DomainError("xt_leg_cost: t must be positive");
  return x * x / t;
}

/// Departure/arrival scheduling cost t_d / x^2 + (y - x)^2 - t_a / y^2.
inline double departure_arrival_cost(double x, double y, double t_arrival,
                                     double t_departure) {
  if (x == 0.0 || y == 0.0) {
    throw DomainError("departure_arrival_cost: supports must avoid 0");
  }
  return t_departure / (x * x) + (y - x) * (y - x) - t_arrival / (y * y);
}

/// Minimum over t of the single-toll cost: (|x - toll| + |y - toll|)^2 / t_f.
inline double single_toll_min_cost(double x, double y, double toll,
                                   double horizon) {
  const double d = std::abs(x - toll) + std::abs(y - toll);
  return d * d / horizon;
}

/**
 * @brief Cost over index tuples of a fixed set of axes. Entries may be +inf
 * (forbidden cells) but never NaN.
 */
class CostKernel {
 public:
  using Eval = std::function<double(std::span<const std::size_t>)>;

  CostKernel(std::vector<std::size_t> shape, Eval eval)
      : shape_(std::move(shape)), eval_(std::move(eval)) {}

  std::size_t arity() const { return shape_.size(); }
  const std::vector<std::size_t>& shape() const { return shape_; }

  std::size_t cells() const {
    std::size_t n = 1;
    for (auto d : shape_) n *= d;
    return n;
  }

  double operator()(std::span<const std::size_t> idx) const {
    return eval_(idx);
  }

  /// Dense row-major table of all entries.
  std::vector<double> tabulate() const {
    std::vector<double> out(cells());
    std::vector<std::size_t> idx(arity(), 0);
    for (std::size_t cell = 0; cell < out.size(); ++cell) {
      const double v = eval_(idx);
      if (std::isnan(v)) throw DomainError("CostKernel: NaN entry");
      out[cell] = v;
      for (std::size_t a = arity(); a-- > 0;) {
        if (++idx[a] < shape_[a]) break;
        idx[a] = 0;
      }
    }
    return out;
  }

 private:
  std::vector<std::size_t> shape_;
  Eval eval_;
};

/// Kernel over (x, y, t) node indices.
inline CostKernel single_toll_kernel(const Grid& xs, const Grid& ys,
                                     const Grid& ts, double toll,
                                     double horizon) {
  return CostKernel({xs.size(), ys.size(), ts.size()},
                    [=](std::span<const std::size_t> i) {
                      return single_toll_cost(xs.node(i[0]), ys.node(i[1]),
                                              ts.node(i[2]), toll, horizon);
                    });
}

/// Kernel over (x, y, t1, t2) node indices.
inline CostKernel two_toll_kernel(const Grid& xs, const Grid& ys,
                                  const Grid& t1s, const Grid& t2s,
                                  const TollConfig& cfg) {
  return CostKernel({xs.size(), ys.size(), t1s.size(), t2s.size()},
                    [=](std::span<const std::size_t> i) {
                      return two_toll_cost(xs.node(i[0]), ys.node(i[1]),
                                           t1s.node(i[2]), t2s.node(i[3]), cfg);
                    });
}

/// Kernel over (x, y, t_d, t_a) node indices; +inf unless t_d < t_a.
inline CostKernel departure_arrival_kernel(const Grid& xs, const Grid& ys,
                                           const Grid& tds, const Grid& tas) {
  return CostKernel({xs.size(), ys.size(), tds.size(), tas.size()},
                    [=](std::span<const std::size_t> i) {
                      const double td = tds.node(i[2]);
                      const double ta = tas.node(i[3]);
                      const double x = xs.node(i[0]);
                      const double y = ys.node(i[1]);
                      // Nodes at the origin must carry no mass; forbid them.
                      if (!(td < ta) || x == 0.0 || y == 0.0) {
                        return kInfiniteCost;
                      }
                      return departure_arrival_cost(x, y, ta, td);
                    });
}

}  // namespace toll
