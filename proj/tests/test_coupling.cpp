#include <gtest/gtest.h>

#include "support/fixtures.hpp"

using namespace toll;
using namespace toll::testing;

TEST(Feasibility, ConstantRateTwoIsFeasibleForAnyResolution) {
  for (std::size_t k : {1u, 3u, 50u, 101u}) {
    const auto check = check_feasibility(RateSchedule::constant(Grid::time(1.0, k), 2.0));
    EXPECT_TRUE(check.feasible);
    EXPECT_NEAR(check.cap_mass, 2.0, 1e-12);
    EXPECT_EQ(check.deficit, 0.0);
  }
}

TEST(Feasibility, RateBelowOneOverHorizonReportsDeficit) {
  const auto rate = RateSchedule::constant(Grid::time(1.0, 50), 0.9);
  const auto check = check_feasibility(rate);
  EXPECT_FALSE(check.feasible);
  EXPECT_NEAR(check.deficit, 0.1, 1e-12);
  try {
    require_feasible(rate);
    FAIL() << "expected Infeasible";
  } catch (const Infeasible& e) {
    EXPECT_NEAR(e.deficit(), 0.1, 1e-12);
  }
}

TEST(Feasibility, IndicatorRateWithTooLittleCapacity) {
  const auto rate = RateSchedule::from_function(Grid::time(1.0, 10),
                                                [](double t) { return t < 0.4 ? 2.0 : 0.0; });
  const auto check = check_feasibility(rate);
  EXPECT_NEAR(check.cap_mass, 0.8, 1e-12);
  EXPECT_FALSE(check.feasible);
  EXPECT_NEAR(check.deficit, 0.2, 1e-12);
}

TEST(Feasibility, ExactBoundaryAndMassArgument) {
  // r * t_f = 1 sums to 1 up to rounding and passes.
  EXPECT_TRUE(check_feasibility(RateSchedule::constant(Grid::time(1.0, 7), 1.0)).feasible);
  const auto rate = RateSchedule::constant(Grid::time(1.0, 10), 0.5);
  EXPECT_TRUE(check_feasibility(rate, 0.5).feasible);
  EXPECT_FALSE(check_feasibility(rate, 0.6).feasible);
}

TEST(RateSchedule, CapsAreCellIntegrated) {
  const Grid g({0.1, 0.4, 0.8}, {0.2, 0.4, 0.4}, AxisKind::time, 1.0);
  const auto r = RateSchedule::constant(g, 1.5);
  EXPECT_DOUBLE_EQ(r.cap(0), 0.3);
  EXPECT_DOUBLE_EQ(r.cap(1), 0.6);
  EXPECT_DOUBLE_EQ(r.total(), 1.5);
}

TEST(RateSchedule, TabulatedStepFunction) {
  const auto r = RateSchedule::tabulated(Grid::time(1.0, 4), {{0.5, 3.0}, {0.0, 1.0}});
  EXPECT_DOUBLE_EQ(r.cap(0), 0.25);
  EXPECT_DOUBLE_EQ(r.cap(1), 0.25);
  EXPECT_DOUBLE_EQ(r.cap(2), 0.75);
  EXPECT_DOUBLE_EQ(r.cap(3), 0.75);
}

TEST(RateSchedule, UnboundedSentinel) {
  const auto r = RateSchedule::unbounded(Grid::time(1.0, 5));
  for (double c : r.caps()) EXPECT_EQ(c, 2.0);
  const auto big = RateSchedule::unbounded(Grid::time(1.0, 5), 3.0);
  for (double c : big.caps()) EXPECT_EQ(c, 6.0);
}

TEST(RateSchedule, Validation) {
  EXPECT_THROW(RateSchedule::constant(Grid::time(1.0, 3), 0.0), DomainError);
  EXPECT_THROW(RateSchedule(Grid::time(1.0, 3), {0.1, 0.1}), DomainError);
  EXPECT_THROW(RateSchedule(Grid::time(1.0, 2), {0.1, -0.1}), DomainError);
}

TEST(Coupling, MassOutsideMaskIsRejected) {
  const Grid g = Grid::uniform(0.0, 1.0, 2);
  EXPECT_THROW(Coupling({g, g}, {0.5, 0.5, 0.0, 0.0}, {1, 0, 1, 1}), DomainError);
  EXPECT_THROW(Coupling({g, g}, {0.5, -0.5, 0.0, 0.0}, {1, 1, 1, 1}), DomainError);
  EXPECT_THROW(Coupling({g, g}, {1.0}, {1}), DomainError);
}

TEST(Coupling, MarginalsOfAProductTensor) {
  const Grid a = Grid::uniform(0.0, 1.0, 2), b = Grid::uniform(0.0, 1.0, 3);
  const std::vector<double> pa{0.25, 0.75}, pb{0.2, 0.3, 0.5};
  std::vector<double> mass;
  for (double x : pa)
    for (double y : pb) mass.push_back(x * y);
  const Coupling pi({a, b}, mass, std::vector<std::uint8_t>(6, 1));
  EXPECT_LT(max_abs_diff(pi.marginal(0), pa), 1e-15);
  EXPECT_LT(max_abs_diff(pi.marginal(1), pb), 1e-15);
  EXPECT_NEAR(pi.total_mass(), 1.0, 1e-15);
  EXPECT_DOUBLE_EQ(pi.scaled(2.0).total_mass(), 2.0);
  const std::array<std::size_t, 2> idx{1, 2};
  EXPECT_DOUBLE_EQ(pi.at(idx), 0.375);
}

TEST(CouplingProblem, SingleTollShapeAndConstraints) {
  const auto mu = atoms({-1.0, -0.5}, {0.5, 0.5});
  const auto nu = atoms({0.5, 1.0, 1.5}, {0.2, 0.3, 0.5});
  const auto rate = RateSchedule::constant(Grid::time(1.0, 4), 2.0);
  const auto p = single_toll_problem(mu, nu, rate, TollConfig{});
  ASSERT_EQ(p.blocks.size(), 1u);
  EXPECT_EQ(p.blocks[0].shape(), (std::vector<std::size_t>{2, 3, 4}));
  ASSERT_EQ(p.constraints.size(), 3u);
  EXPECT_EQ(p.constraints[2].sense, MarginalSense::at_most);
  EXPECT_NO_THROW(p.validate());
}

TEST(CouplingProblem, ViolationsOfAnInfeasiblePlan) {
  const auto mu = atoms({-1.0, -0.5}, {0.5, 0.5});
  const auto nu = dirac(1.0);
  const auto rate = RateSchedule::constant(Grid::time(1.0, 2), 1.0);
  const auto p = single_toll_problem(mu, nu, rate, TollConfig{});
  // All mass from the first atom at the first time cell.
  std::vector<double> mass(4, 0.0);
  mass[0] = 1.0;
  const Coupling pi(p.blocks[0].axes, mass, p.mask(0));
  const auto vs = violations(p, {pi});
  EXPECT_NEAR(vs[0].l1, 1.0, 1e-15);  // (1, 0) vs (0.5, 0.5)
  EXPECT_NEAR(vs[0].max, 0.5, 1e-15);
  EXPECT_EQ(vs[1].l1, 0.0);
  EXPECT_NEAR(vs[2].l1, 0.5, 1e-15);  // cap 0.5 exceeded by 0.5
  const double c = single_toll_cost(-1.0, 1.0, 0.25, 0.0, 1.0);
  EXPECT_DOUBLE_EQ(objective(p, {pi}), c);
}

TEST(CouplingProblem, ValidationCatchesBadReferences) {
  const auto mu = dirac(-1.0), nu = dirac(1.0);
  auto p = single_toll_problem(mu, nu, RateSchedule::constant(Grid::time(1.0, 2), 2.0), TollConfig{});
  p.constraints.push_back({"bad", MarginalSense::equal, {{0, 5}}, {1.0}});
  EXPECT_THROW(p.validate(), DomainError);
}
