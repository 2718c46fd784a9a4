#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "support/fixtures.hpp"
#include "toll_transport/io.hpp"

using namespace toll;
using namespace toll::testing;
namespace fs = std::filesystem;

namespace {

class IoTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("toll_io_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  std::string write(const std::string& name, const std::string& text) const {
    std::ofstream(path(name)) << text;
    return path(name);
  }

  fs::path dir_;
};

}  // namespace

TEST(FormatDouble, RoundTripsExactly) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1e3, 1e3);
  for (int i = 0; i < 1000; ++i) {
    const double v = u(rng) * std::pow(10.0, i % 20 - 10);
    EXPECT_EQ(std::stod(io::format_double(v)), v);
  }
  EXPECT_EQ(io::format_double(0.1), "0.1");
  EXPECT_EQ(io::format_double(1.0), "1");
}

TEST_F(IoTest, MeasureRoundTrip) {
  std::mt19937_64 rng(5);
  const auto m = random_measure(rng, 12, -2.0, 2.0);
  io::write_measure_csv(path("m.csv"), m);
  const auto back = io::read_measure_csv(path("m.csv"));
  EXPECT_EQ(back.grid().nodes(), m.grid().nodes());
  EXPECT_EQ(back.weights(), m.weights());
}

TEST_F(IoTest, MeasureErrors) {
  EXPECT_THROW(io::read_measure_csv(path("missing.csv")), IOError);
  EXPECT_THROW(io::read_measure_csv(write("h.csv", "x,w\n0,1\n")), IOError);
  EXPECT_THROW(io::read_measure_csv(write("n.csv", "position,weight\n0,abc\n")), IOError);
  EXPECT_THROW(io::read_measure_csv(write("c.csv", "position,weight\n0,1,2\n")), IOError);
  EXPECT_THROW(io::read_measure_csv(write("o.csv", "position,weight\n1,1\n0,1\n")), IOError);
  EXPECT_THROW(io::read_measure_csv(write("e.csv", "position,weight\n")), IOError);
}

TEST_F(IoTest, RateTable) {
  const auto t = io::read_rate_table(write("r.csv", "t,rate\n0,1.5\n0.5, 2\n"));
  ASSERT_EQ(t.size(), 2u);
  EXPECT_EQ(t[1].first, 0.5);
  EXPECT_EQ(t[1].second, 2.0);
}

TEST_F(IoTest, CouplingRoundTripKeepsSupportAndMass) {
  const auto s = solve_coupling_lp(single_toll_problem(
      on_grid(bimodal_source(), 6), on_grid(bimodal_target(), 5),
      RateSchedule::constant(Grid::time(1.0, 4), 1.5), TollConfig{}));
  const auto& pi = s.couplings[0];
  io::write_coupling_csv(path("pi.csv"), pi);
  const auto back = io::read_coupling_csv(path("pi.csv"), pi.shape());
  for (std::size_t c = 0; c < back.size(); ++c) {
    EXPECT_EQ(back[c], pi.mass()[c] > 1e-12 ? pi.mass()[c] : 0.0);
  }
}

TEST_F(IoTest, CouplingIndexOutOfRange) {
  write("bad.csv", "i,j,k,mass\n0,0,7,1\n");
  EXPECT_THROW(io::read_coupling_csv(path("bad.csv"), {2, 2, 2}), IOError);
  write("arity.csv", "i,j,k,mass\n0,0,0,1\n");
  EXPECT_THROW(io::read_coupling_csv(path("arity.csv"), {2, 2, 2, 2}), IOError);
}

TEST(Trajectories, CsvLayout) {
  Trajectory tr;
  tr.id = 3;
  tr.times = {0.0, 1.0};
  tr.positions = {-1.0, 1.0};
  std::ostringstream out;
  io::write_trajectories_csv(out, {tr});
  EXPECT_EQ(out.str(), "id,time,position\n3,0,-1\n3,1,1\n");
}
