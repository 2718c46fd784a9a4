#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <random>

#include "support/fixtures.hpp"

using namespace toll;
using namespace toll::testing;

namespace {

const TollConfig kTwo{{-0.4, 0.4}, 1.0};

/// First `mass` of nu taken from the left (or right) end.
std::vector<double> quantile_part(const DiscreteMeasure& nu, double mass, bool from_left) {
  std::vector<double> out(nu.size(), 0.0);
  for (std::size_t s = 0; s < nu.size() && mass > 0.0; ++s) {
    const std::size_t j = from_left ? s : nu.size() - 1 - s;
    out[j] = std::min(mass, nu.weight(j));
    mass -= out[j];
  }
  return out;
}

std::map<double, double> aggregate(const std::vector<WeightedPosition>& ps) {
  std::map<double, double> m;
  for (const auto& p : ps) m[p.position] += p.weight;
  return m;
}

}  // namespace

TEST(SplitSource, AtomsOnEitherSide) {
  const auto mu = atoms({-1.0, -0.2, 0.2}, {0.2, 0.3, 0.5});
  const auto s = split_source(mu, -0.4);
  EXPECT_EQ(s.minus.grid().nodes(), (std::vector<double>{-1.0}));
  EXPECT_EQ(s.plus.grid().nodes(), (std::vector<double>{-0.2, 0.2}));
  EXPECT_DOUBLE_EQ(s.m_minus, 0.2);
  EXPECT_DOUBLE_EQ(s.m_plus, 0.8);
}

TEST(SplitSource, MixtureMassesOnEachSide) {
  const MixtureSpec spec{{{-1.0, 0.1, 0.3}, {0.0, 0.1, 0.7}}, -1.6, 0.3};
  const auto s = split_source(on_grid(spec, 200), -0.5);
  EXPECT_NEAR(s.m_minus, 0.3, 1e-3);
  EXPECT_NEAR(s.m_plus, 0.7, 1e-3);
}

TEST(SplitSource, AtomAtTheTollIsRejected) {
  EXPECT_THROW(split_source(atoms({-1.0, -0.4}, {0.5, 0.5}), -0.4), DomainError);
  EXPECT_NO_THROW(split_source(atoms({-1.0, -0.4}, {1.0, 0.0}), -0.4));
}

TEST(PartialTransport, WholeSourceLeftReducesToTwoTolls) {
  const auto mu = atoms({-1.0, -0.7}, {0.5, 0.5}), nu = atoms({0.7, 1.0}, {0.5, 0.5});
  const auto r1 = RateSchedule::constant(Grid::time(1.0, 5), 1.5);
  const auto r2 = RateSchedule::constant(Grid::time(1.0, 5), 3.0);
  const auto plan = solve_partial(mu, nu, kTwo, r1, r2, lp_options());
  EXPECT_FALSE(plan.one.has_value());
  const double two = solve_two_toll(mu, nu, r1, r2, kTwo, lp_options()).objective;
  EXPECT_NEAR(plan.objective, two, 1e-12);
}

TEST(PartialTransport, WholeSourceRightReducesToSecondTollOnly) {
  const auto mu = atoms({-0.3, 0.1}, {0.5, 0.5}), nu = atoms({0.7, 1.0}, {0.5, 0.5});
  const auto r1 = RateSchedule::constant(Grid::time(1.0, 5), 1.5);
  const auto r2 = RateSchedule::constant(Grid::time(1.0, 5), 3.0);
  const auto plan = solve_partial(mu, nu, kTwo, r1, r2, lp_options());
  EXPECT_FALSE(plan.two.has_value());
  const double one = solve_single_toll(mu, nu, r2, TollConfig{{0.4}, 1.0}, lp_options()).objective;
  EXPECT_NEAR(plan.objective, one, 1e-12);
}

TEST(PartialTransport, DestinationSplitIsConserved) {
  std::mt19937_64 rng(43);
  for (int trial = 0; trial < 5; ++trial) {
    const auto mu = on_grid(random_mixture(rng, -1.5, 0.2), 8);
    const auto nu = on_grid(random_mixture(rng, 0.5, 1.8), 7);
    const auto r1 = RateSchedule::constant(Grid::time(1.0, 6), 1.5);
    const auto r2 = RateSchedule::constant(Grid::time(1.0, 6), 1.5);
    const auto plan = solve_partial(mu, nu, kTwo, r1, r2, lp_options());
    for (std::size_t j = 0; j < nu.size(); ++j) {
      EXPECT_NEAR(plan.nu_minus.weight(j) + plan.nu_plus.weight(j), nu.weight(j), 1e-9);
    }
    EXPECT_NEAR(plan.nu_minus.mass(), plan.split.m_minus, 1e-9);
  }
}

TEST(PartialTransport, SecondTollCapIsSharedByBothFlows) {
  const auto mu = atoms({-1.0, -0.1}, {0.5, 0.5}), nu = dirac(1.0);
  const auto r1 = RateSchedule::constant(Grid::time(1.0, 4), 4.0);
  const auto r2 = RateSchedule::constant(Grid::time(1.0, 4), 1.2);
  const auto plan = solve_partial(mu, nu, kTwo, r1, r2, lp_options());
  ASSERT_TRUE(plan.two && plan.one);
  const auto a = plan.two->marginal(3), b = plan.one->marginal(2);
  double binding = 0.0;
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_LE(a[k] + b[k], r2.cap(k) + 1e-9);
    binding = std::max(binding, a[k] + b[k]);
  }
  // Each flow alone would fit, together they saturate some cell.
  EXPECT_NEAR(binding, r2.cap(0), 1e-9);
}

TEST(PartialTransport, JointSolveBeatsFixedSplits) {
  std::mt19937_64 rng(47);
  for (int trial = 0; trial < 3; ++trial) {
    const auto mu = on_grid(random_mixture(rng, -1.5, 0.2), 7);
    const auto nu = on_grid(random_mixture(rng, 0.5, 1.8), 6);
    const auto r1 = RateSchedule::constant(Grid::time(1.0, 6), 1.5);
    const auto r2 = RateSchedule::constant(Grid::time(1.0, 6), 2.0);
    const auto joint = solve_partial(mu, nu, kTwo, r1, r2, lp_options());
    const double m = joint.split.m_minus;
    ASSERT_GT(m, 0.0);
    ASSERT_GT(joint.split.m_plus, 0.0);
    std::vector<double> prop(nu.size());
    for (std::size_t j = 0; j < nu.size(); ++j) prop[j] = m * nu.weight(j);
    for (const auto& fixed : {prop, quantile_part(nu, m, true), quantile_part(nu, m, false)}) {
      const auto f = solve_partial(mu, nu, kTwo, r1, r2, lp_options(), fixed);
      EXPECT_LE(joint.objective, f.objective + 1e-9);
      EXPECT_LT(max_abs_diff(f.nu_minus.weights(), fixed), 1e-9);
    }
  }
}

TEST(PartialTransport, RejectsBadGeometry) {
  const auto r = RateSchedule::constant(Grid::time(1.0, 4), 2.0);
  EXPECT_THROW(solve_partial(dirac(-1.0), dirac(0.2), kTwo, r, r), DomainError);
  EXPECT_THROW(solve_partial(dirac(0.5), dirac(1.0), kTwo, r, r), DomainError);
  EXPECT_THROW(solve_partial(dirac(-1.0), dirac(1.0), TollConfig{}, r, r), DomainError);
}

TEST(Schedule, PinnedArrivalFillsDepartureCellsGreedily) {
  const auto mu = atoms({-1.0, -0.5}, {0.5, 0.5});
  const auto caps = RateSchedule::constant(Grid::time(1.0, 4), 2.0);
  const auto plan = solve_schedule(mu, dirac(1.0), caps, caps, 1.0, true, lp_options());
  EXPECT_EQ(plan.pi.shape(), (std::vector<std::size_t>{2, 1, 4, 1}));
  // The near atom pays 4 per unit time waiting, the far one 1.
  const auto xd = plan.pi.pair_marginal(0, 2);
  EXPECT_NEAR(xd[1 * 4 + 0], 0.5, 1e-12);
  EXPECT_NEAR(xd[0 * 4 + 1], 0.5, 1e-12);
  const double expected = 0.125 * 4 * 0.5 + 0.375 * 1 * 0.5 + 0.5 * 2.25 + 0.5 * 4.0 - 0.875;
  EXPECT_NEAR(plan.objective, expected, 1e-12);
}

TEST(Schedule, CloserSourceLeavesFirst) {
  const auto mu = atoms({-1.0, -0.5}, {0.5, 0.5});
  const auto nu = atoms({0.5, 1.0}, {0.5, 0.5});
  const auto dep = RateSchedule::constant(Grid::time(1.0, 8), 1.5);
  const auto arr = RateSchedule::constant(Grid::time(1.0, 8), 1.5);
  for (bool pin : {true, false}) {
    const auto plan = solve_schedule(mu, nu, dep, arr, 1.0, pin, lp_options());
    const auto mean = mean_departure_by_source(plan);
    EXPECT_LT(mean[1], mean[0]) << "pin " << pin;
  }
}

TEST(Schedule, MaskAndCapsHold) {
  const auto mu = on_grid({{{-1.0, 0.3, 1.0}}, -2.0, -0.3}, 6);
  const auto nu = on_grid({{{1.0, 0.3, 1.0}}, 0.3, 2.0}, 6);
  const auto dep = RateSchedule::constant(Grid::time(1.0, 6), 1.5);
  const auto arr = RateSchedule::constant(Grid::time(1.0, 6), 1.5);
  const auto plan = solve_schedule(mu, nu, dep, arr, 1.0, false, lp_options());
  const auto da = plan.pi.pair_marginal(2, 3);
  for (std::size_t d = 0; d < 6; ++d)
    for (std::size_t a = 0; a <= d; ++a) EXPECT_EQ(da[d * 6 + a], 0.0);
  const auto md = plan.pi.marginal(2), ma = plan.pi.marginal(3);
  for (std::size_t k = 0; k < 6; ++k) {
    EXPECT_LE(md[k], dep.cap(k) + 1e-9);
    EXPECT_LE(ma[k], arr.cap(k) + 1e-9);
  }
}

TEST(Schedule, EndpointSnapshotsReproduceTheMarginals) {
  const auto mu = atoms({-1.0, -0.5}, {0.4, 0.6}), nu = atoms({0.5, 1.0, 1.5}, {0.3, 0.3, 0.4});
  const auto caps = RateSchedule::constant(Grid::time(1.0, 6), 2.0);
  const auto plan = solve_schedule(mu, nu, caps, caps, 1.0, false, lp_options());
  const auto start = aggregate(schedule_interpolate(plan, 0.0, 0));
  const auto end = aggregate(schedule_interpolate(plan, 1.0, 0));
  for (std::size_t i = 0; i < mu.size(); ++i) EXPECT_NEAR(start.at(mu.node(i)), mu.weight(i), 1e-9);
  for (std::size_t j = 0; j < nu.size(); ++j) EXPECT_NEAR(end.at(nu.node(j)), nu.weight(j), 1e-9);
  const auto sampled = schedule_interpolate(plan, 0.0, 500);
  std::vector<double> xs, ws;
  for (const auto& [x, w] : aggregate(sampled)) {
    xs.push_back(x);
    ws.push_back(w);
  }
  EXPECT_LE(wasserstein1(xs, ws, mu.grid().nodes(), mu.weights()), 0.02);
  EXPECT_THROW(schedule_interpolate(plan, 1.5, 0), DomainError);
}

TEST(Schedule, TrajectoriesHoldThenMove) {
  const auto mu = atoms({-1.0, -0.5}, {0.5, 0.5});
  const auto caps = RateSchedule::constant(Grid::time(1.0, 5), 2.0);
  const auto plan = solve_schedule(mu, dirac(1.0), caps, caps, 1.0, false, lp_options());
  for (const auto& tr : schedule_trajectories(plan, 10, 11)) {
    const double td = tr.crossings[0], ta = tr.crossings[1];
    EXPECT_LT(td, ta);
    EXPECT_EQ(tr.position_at(0.5 * td), tr.positions.front());
    EXPECT_EQ(tr.position_at(0.5 * (ta + 1.0)), tr.positions.back());
  }
}

TEST(Schedule, Validation) {
  const auto caps = RateSchedule::constant(Grid::time(1.0, 4), 2.0);
  EXPECT_THROW(solve_schedule(atoms({-1.0, 0.0}, {0.5, 0.5}), dirac(1.0), caps, caps, 1.0, false),
               DomainError);
  EXPECT_THROW(solve_schedule(dirac(-1.0), dirac(1.0), caps, caps, 2.0, false), DomainError);
  const auto thin = RateSchedule::constant(Grid::time(1.0, 4), 0.5);
  EXPECT_THROW(solve_schedule(dirac(-1.0), dirac(1.0), thin, caps, 1.0, false), Infeasible);
  EXPECT_THROW(solve_schedule(dirac(-1.0), dirac(1.0), caps, thin, 1.0, false), Infeasible);
  EXPECT_NO_THROW(solve_schedule(dirac(-1.0), dirac(1.0), caps, thin, 1.0, true, lp_options()));
}
