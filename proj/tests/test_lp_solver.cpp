#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "support/fixtures.hpp"

using namespace toll;
using namespace toll::testing;

namespace {

LpCouplingSolution solve_single(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                                const RateSchedule& rate, double horizon = 1.0) {
  return solve_coupling_lp(single_toll_problem(mu, nu, rate, TollConfig{{0.0}, horizon}));
}

/// Grid-restricted pair cost: cheapest admissible crossing time on ts.
double grid_min_cost(double x, double y, const Grid& ts, double horizon) {
  double best = kInfiniteCost;
  for (std::size_t k = 0; k < ts.size(); ++k) {
    best = std::min(best, single_toll_cost(x, y, ts.node(k), 0.0, horizon));
  }
  return best;
}

void expect_kkt(const LpResult& r) {
  EXPECT_LE(r.primal_residual, 1e-9);
  EXPECT_LE(r.dual_infeasibility, 1e-9);
  EXPECT_LE(r.complementarity, 1e-9);
}

}  // namespace

TEST(LinearProgram, SingleTollVariablesAppearInThreeRows) {
  const auto mu = atoms({-1.0, -0.5}, {0.5, 0.5}), nu = atoms({0.5, 1.0}, {0.5, 0.5});
  const auto lp = build_single_toll_lp(mu, nu, RateSchedule::constant(Grid::time(1.0, 3), 2.0),
                                       TollConfig{});
  EXPECT_EQ(lp.num_vars, 12u);
  EXPECT_EQ(lp.equalities.size(), 4u);
  EXPECT_EQ(lp.inequalities.size(), 3u);
  for (auto n : lp.row_counts()) EXPECT_EQ(n, 3u);
}

TEST(LinearProgram, TwoTollVariablesAppearInFourRows) {
  const auto mu = dirac(-1.0), nu = dirac(1.0);
  const auto rate = RateSchedule::constant(Grid::time(1.0, 3), 2.0);
  const auto lp = build_two_toll_lp(mu, nu, rate, rate, TollConfig{{-0.4, 0.4}, 1.0});
  EXPECT_EQ(lp.num_vars, 3u);  // only t1 < t2 cells
  for (auto n : lp.row_counts()) EXPECT_EQ(n, 4u);
}

TEST(LpSolver, SingleCellInstance) {
  const auto s = solve_single(dirac(-1.0), dirac(1.0), RateSchedule::constant(Grid::time(1.0, 1), 2.0));
  EXPECT_NEAR(s.objective, 4.0, 1e-12);
  EXPECT_NEAR(s.couplings[0].mass()[0], 1.0, 1e-12);
}

TEST(LpSolver, DiracsPickTheCheapestTimeCell) {
  const auto s = solve_single(dirac(-1.0), dirac(1.0), RateSchedule::unbounded(Grid::time(1.0, 3)));
  EXPECT_NEAR(s.objective, 4.0, 1e-12);
  const auto sigma = s.couplings[0].marginal(2);
  EXPECT_NEAR(sigma[1], 1.0, 1e-12);
  expect_kkt(s.lp);
}

TEST(LpSolver, BindingCapSplitsTheCrossingTimes) {
  // Caps 0.6 per cell; the early cell is cheaper and fills first.
  const auto s = solve_single(dirac(-0.5), dirac(1.0), RateSchedule::constant(Grid::time(1.0, 2), 1.2));
  const auto sigma = s.couplings[0].marginal(2);
  EXPECT_NEAR(sigma[0], 0.6, 1e-12);
  EXPECT_NEAR(sigma[1], 0.4, 1e-12);
  const double early = 0.25 / 0.25 + 1.0 / 0.75, late = 0.25 / 0.75 + 1.0 / 0.25;
  EXPECT_NEAR(s.objective, 0.6 * early + 0.4 * late, 1e-12);
  expect_kkt(s.lp);
}

TEST(LpSolver, TwoPointInstanceIsMonotone) {
  const auto mu = atoms({-1.0, -0.5}, {0.5, 0.5}), nu = atoms({0.5, 1.5}, {0.5, 0.5});
  const auto rate = RateSchedule::unbounded(Grid::time(1.0, 8));
  const auto s = solve_single(mu, nu, rate);
  const auto& pi = s.couplings[0];
  const auto xy = pi.pair_marginal(0, 1);
  // Far source goes to the near target.
  EXPECT_NEAR(xy[0 * 2 + 0], 0.5, 1e-12);
  EXPECT_NEAR(xy[1 * 2 + 1], 0.5, 1e-12);
  std::vector<std::vector<double>> cost(2, std::vector<double>(2));
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) cost[i][j] = grid_min_cost(mu.node(i), nu.node(j), rate.grid(), 1.0);
  EXPECT_NEAR(s.objective, best_permutation(cost), 1e-12);
}

TEST(LpSolver, UnboundedCapsMatchTheAssignmentOracle) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.05, 2.0);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 2 + trial % 4;
    std::vector<double> xs(n), ys(n);
    for (auto& x : xs) x = -u(rng);
    for (auto& y : ys) y = u(rng);
    std::sort(xs.begin(), xs.end());
    std::sort(ys.begin(), ys.end());
    const std::vector<double> w(n, 1.0 / n);
    const auto mu = atoms(xs, w), nu = atoms(ys, w);
    const auto rate = RateSchedule::unbounded(Grid::time(1.0, 6));
    const auto s = solve_single(mu, nu, rate);
    std::vector<std::vector<double>> cost(n, std::vector<double>(n));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) cost[i][j] = grid_min_cost(xs[i], ys[j], rate.grid(), 1.0);
    EXPECT_NEAR(s.objective, best_permutation(cost), 1e-10) << "trial " << trial;
    expect_kkt(s.lp);
  }
}

TEST(LpSolver, PhaseOneDetectsInfeasibility) {
  // Caps below total mass: the cap rows cannot all hold.
  const auto rate = RateSchedule::constant(Grid::time(1.0, 4), 0.5);
  EXPECT_THROW(solve_single(dirac(-1.0), dirac(1.0), rate), Infeasible);
  EXPECT_THROW(solve_single_toll(dirac(-1.0), dirac(1.0), rate, TollConfig{}, lp_options()),
               Infeasible);
}

TEST(LpSolver, KktResidualsOnRandomMixtures) {
  std::mt19937_64 rng(29);
  for (int trial = 0; trial < 5; ++trial) {
    const auto mu = on_grid(random_mixture(rng, -2.0, -0.1), 6);
    const auto nu = on_grid(random_mixture(rng, 0.1, 2.0), 7);
    const auto s = solve_single(mu, nu, RateSchedule::constant(Grid::time(1.0, 5), 1.3));
    expect_kkt(s.lp);
    for (const auto& v : violations(single_toll_problem(mu, nu,
                                                        RateSchedule::constant(Grid::time(1.0, 5), 1.3),
                                                        TollConfig{}),
                                    s.couplings)) {
      EXPECT_LE(v.l1, 1e-9) << v.name;
    }
  }
}

TEST(LpSolver, ObjectiveIsNonIncreasingInTheRate) {
  const auto mu = on_grid(bimodal_source(), 8), nu = on_grid(bimodal_target(), 8);
  const Grid ts = Grid::time(1.0, 8);
  double prev = -1.0;
  for (double r : {1.05, 1.2, 1.5, 2.0, 4.0}) {
    const double obj = solve_single(mu, nu, RateSchedule::constant(ts, r)).objective;
    if (prev >= 0.0) {
      EXPECT_LE(obj, prev + 1e-12) << "r = " << r;
    }
    prev = obj;
  }
  EXPECT_GE(prev, solve_single(mu, nu, RateSchedule::unbounded(ts)).objective - 1e-12);
}

TEST(LpSolver, IsDeterministic) {
  const auto mu = on_grid(bimodal_source(), 7), nu = on_grid(bimodal_target(), 7);
  const auto rate = RateSchedule::constant(Grid::time(1.0, 6), 1.2);
  const auto a = solve_single(mu, nu, rate), b = solve_single(mu, nu, rate);
  EXPECT_EQ(a.objective, b.objective);
  EXPECT_EQ(a.couplings[0].mass(), b.couplings[0].mass());
  EXPECT_EQ(a.lp.iterations, b.lp.iterations);
}

TEST(LpSolver, TwoTollPlanRespectsOrderingAndCaps) {
  const TollConfig cfg{{-0.4, 0.4}, 1.0};
  const auto mu = atoms({-1.0, -0.7}, {0.5, 0.5}), nu = atoms({0.7, 1.0}, {0.5, 0.5});
  const auto r1 = RateSchedule::constant(Grid::time(1.0, 4), 1.5);
  const auto r2 = RateSchedule::constant(Grid::time(1.0, 4), 3.0);
  const auto p = two_toll_problem(mu, nu, r1, r2, cfg);
  const auto s = solve_coupling_lp(p);
  const auto t12 = s.couplings[0].pair_marginal(2, 3);
  for (std::size_t a = 0; a < 4; ++a)
    for (std::size_t b = 0; b <= a; ++b) EXPECT_EQ(t12[a * 4 + b], 0.0);
  for (const auto& v : violations(p, s.couplings)) EXPECT_LE(v.l1, 1e-9) << v.name;
  expect_kkt(s.lp);
}

TEST(LpSolver, TwoTollWithSourceAtFirstTollReducesToSingleToll) {
  const TollConfig cfg{{-0.4, 0.4}, 1.0};
  const auto nu = atoms({0.6, 0.9, 1.3}, {0.3, 0.3, 0.4});
  const auto r2 = RateSchedule::unbounded(Grid::time(1.0, 6));
  const double delta = 1e-9;
  const RateSchedule r1 = RateSchedule::unbounded(Grid({delta}, {2 * delta}, AxisKind::time, 1.0));
  const auto two = solve_coupling_lp(two_toll_problem(dirac(-0.4), nu, r1, r2, cfg));
  const auto one = solve_coupling_lp(single_toll_problem(dirac(-0.4), nu, r2, 0.4, 1.0));
  EXPECT_NEAR(two.objective, one.objective, 1e-6);
}
