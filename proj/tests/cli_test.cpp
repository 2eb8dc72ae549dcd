#include "epidemic/cli.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

namespace epidemic::cli {
namespace {

const fs::path kScenarios = EPIDEMIC_SCENARIO_DIR;

std::string slurp(const fs::path& p) {
  std::ifstream f(p);
  std::stringstream s;
  s << f.rdbuf();
  return s.str();
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream s(text);
  for (std::string l; std::getline(s, l);) out.push_back(l);
  return out;
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / (std::string("epidemic_cli_") + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  int cli(std::vector<std::string> args) {
    out_.str("");
    err_.str("");
    return run_cli(std::move(args), out_, err_);
  }

  fs::path dir_;
  std::ostringstream out_, err_;
};

TEST_F(CliTest, RunWritesOneRowPerSeed) {
  ASSERT_EQ(cli({"run", (kScenarios / "two_node.cfg").string(), "--seeds", "3", "--out",
                 dir_.string()}),
            0)
      << err_.str();
  const auto runs = lines(slurp(dir_ / "runs.csv"));
  ASSERT_EQ(runs.size(), 4u);
  EXPECT_EQ(runs[0].substr(0, 29), "seed,generated,delivered,tran");
  EXPECT_EQ(runs[1].substr(0, 13), "1,1,1,1,1,0.5");
  const auto agg = lines(slurp(dir_ / "aggregate.csv"));
  ASSERT_EQ(agg.size(), 2u);
  EXPECT_EQ(agg[1].substr(0, 6), "3,1,0,");
}

TEST_F(CliTest, SweepProductCount) {
  ASSERT_EQ(cli({"sweep", (kScenarios / "two_node.cfg").string(), "--axis",
                 "data_rate=6Mbps,12Mbps", "--axis", "buffer_capacity=5MB,10MB", "--seeds", "2",
                 "--out", dir_.string()}),
            0)
      << err_.str();
  const auto agg = lines(slurp(dir_ / "aggregate.csv"));
  ASSERT_EQ(agg.size(), 5u);
  EXPECT_EQ(agg[0].substr(0, 30), "data_rate,buffer_capacity,runs");
  EXPECT_EQ(agg[1].substr(0, 14), "6Mbps,5MB,2,1,");
  EXPECT_EQ(agg[2].substr(0, 15), "6Mbps,10MB,2,1,");
  EXPECT_EQ(agg[4].substr(0, 16), "12Mbps,10MB,2,1,");
  EXPECT_EQ(lines(slurp(dir_ / "runs.csv")).size(), 9u);
}

TEST_F(CliTest, SinglePointSweepMatchesRun) {
  const auto cfg = (kScenarios / "mini.cfg").string();
  ASSERT_EQ(cli({"run", cfg, "--set", "data_rate=12Mbps", "--out", (dir_ / "a").string()}), 0);
  ASSERT_EQ(cli({"sweep", cfg, "--axis", "data_rate=12Mbps", "--out", (dir_ / "b").string()}), 0);
  for (const char* name : {"runs.csv", "aggregate.csv"}) {
    const auto a = lines(slurp(dir_ / "a" / name));
    const auto b = lines(slurp(dir_ / "b" / name));
    ASSERT_EQ(a.size(), b.size());
    EXPECT_EQ("data_rate," + a[0], b[0]);
    for (std::size_t i = 1; i < a.size(); ++i) EXPECT_EQ("12Mbps," + a[i], b[i]);
  }
}

TEST_F(CliTest, InvalidCellFailsAloneWithNonzeroExit) {
  const int rc = cli({"sweep", (kScenarios / "two_node.cfg").string(), "--axis",
                      "buffer_capacity=5MB,bogus,10MB", "--out", dir_.string()});
  EXPECT_EQ(rc, 1);
  EXPECT_NE(err_.str().find("buffer_capacity=bogus"), std::string::npos) << err_.str();
  const auto agg = lines(slurp(dir_ / "aggregate.csv"));
  ASSERT_EQ(agg.size(), 3u);
  EXPECT_EQ(agg[1].substr(0, 4), "5MB,");
  EXPECT_EQ(agg[2].substr(0, 5), "10MB,");
}

TEST_F(CliTest, MissingTraceNamesPath) {
  std::ofstream(dir_ / "s.cfg") << "trace = nowhere.tr\nduration = 10s\n";
  EXPECT_NE(cli({"run", (dir_ / "s.cfg").string(), "--out", dir_.string()}), 0);
  EXPECT_NE(err_.str().find("nowhere.tr"), std::string::npos) << err_.str();
}

TEST_F(CliTest, UnknownKeysRejected) {
  std::ofstream(dir_ / "s.cfg") << "trace = x.tr\ncolour = blue\n";
  EXPECT_EQ(cli({"run", (dir_ / "s.cfg").string(), "--out", dir_.string()}), 2);
  EXPECT_NE(err_.str().find("s.cfg:2"), std::string::npos) << err_.str();
  const auto cfg = (kScenarios / "two_node.cfg").string();
  EXPECT_EQ(cli({"run", cfg, "--set", "colour=blue", "--out", dir_.string()}), 2);
  EXPECT_EQ(cli({"sweep", cfg, "--axis", "colour=a,b", "--out", dir_.string()}), 2);
  EXPECT_EQ(cli({"sweep", cfg, "--axis", "seeds=1,2", "--out", dir_.string()}), 2);
}

TEST_F(CliTest, ArgumentErrors) {
  EXPECT_EQ(cli({}), 2);
  EXPECT_EQ(cli({"run"}), 2);
  EXPECT_EQ(cli({"sweep", (kScenarios / "two_node.cfg").string()}), 2);  // --axis required
  EXPECT_EQ(cli({"--help"}), 0);
  EXPECT_NE(out_.str().find("sweep"), std::string::npos);
}

TEST_F(CliTest, ByteIdenticalReruns) {
  const auto cfg = (kScenarios / "mini.cfg").string();
  const std::vector<std::string> axis{"--axis", "loss_probability=0,0.2"};
  auto args = [&](const char* sub) {
    std::vector<std::string> a{"sweep", cfg, "--seeds", "4", "--out", (dir_ / sub).string()};
    a.insert(a.end(), axis.begin(), axis.end());
    return a;
  };
  ASSERT_EQ(cli(args("a")), 0);
  ASSERT_EQ(cli(args("b")), 0);
  for (const char* name : {"runs.csv", "aggregate.csv"}) {
    EXPECT_EQ(slurp(dir_ / "a" / name), slurp(dir_ / "b" / name)) << name;
  }
}

TEST_F(CliTest, JobsDoNotChangeOutput) {
  const auto cfg = (kScenarios / "mini.cfg").string();
  ASSERT_EQ(cli({"run", cfg, "--seeds", "4", "--out", (dir_ / "a").string()}), 0);
  ASSERT_EQ(cli({"run", cfg, "--seeds", "4", "--jobs", "3", "--out", (dir_ / "b").string()}), 0);
  EXPECT_EQ(slurp(dir_ / "a" / "runs.csv"), slurp(dir_ / "b" / "runs.csv"));
}

TEST_F(CliTest, EventDumpHasOneFilePerRun) {
  ASSERT_EQ(cli({"run", (kScenarios / "two_node.cfg").string(), "--seeds", "2", "--events",
                 "--out", dir_.string()}),
            0);
  const auto text = slurp(dir_ / "events" / "events_seed1.csv");
  const auto rows = lines(text);
  ASSERT_GT(rows.size(), 100u);
  EXPECT_EQ(rows[0].substr(0, 12), "time_us,kind");
  EXPECT_TRUE(fs::exists(dir_ / "events" / "events_seed2.csv"));
}

TEST_F(CliTest, RandomWaypointTraceLoads) {
  const auto tr = dir_ / "rwp.tr";
  ASSERT_EQ(cli({"rwp", "--nodes", "4", "--duration", "60", "--seed", "2", "--out", tr.string()}),
            0);
  EXPECT_EQ(mobility::parse_ns2_trace(slurp(tr)).size(), 4u);
}

TEST(Parsing, Units) {
  using namespace scenario::detail;
  EXPECT_EQ(parse_bytes("5MB"), 5'000'000u);
  EXPECT_EQ(parse_bytes("5 MiB"), 5'242'880u);
  EXPECT_EQ(parse_bytes("1460"), 1460u);
  EXPECT_THROW(parse_bytes("1.5"), std::invalid_argument);
  EXPECT_THROW(parse_bytes("5XB"), std::invalid_argument);
  EXPECT_EQ(parse_rate("6Mbps"), 6'000'000u);
  EXPECT_EQ(parse_rate("54 mbps"), 54'000'000u);
  EXPECT_EQ(parse_seconds("1.5"), 1'500'000u);
  EXPECT_EQ(parse_seconds("100ms"), 100'000u);
  EXPECT_EQ(parse_seconds("7us"), 7u);
  EXPECT_THROW(parse_seconds("-1s"), std::invalid_argument);
  EXPECT_EQ(parse_seeds("2..4"), (std::vector<std::uint64_t>{2, 3, 4}));
  EXPECT_EQ(parse_seeds("5, 9"), (std::vector<std::uint64_t>{5, 9}));
  EXPECT_THROW(parse_seeds("4..2"), std::invalid_argument);
}

TEST(Parsing, ScenarioDefaultsAndOverrides) {
  const auto sc = scenario::load_scenario(kScenarios / "two_node.cfg",
                                          {scenario::parse_override("hop_limit=7")});
  EXPECT_EQ(sc.trajectories.size(), 2u);
  EXPECT_EQ(sc.protocol.hop_limit, 7u);
  EXPECT_EQ(sc.protocol.beacon_randomness, 0u);
  EXPECT_EQ(sc.protocol.buffer_capacity, 5'000'000u);
  EXPECT_EQ(sc.traffic.window_end, sc.duration);
  ASSERT_EQ(sc.traffic.scripted.size(), 1u);
  EXPECT_EQ(sc.traffic.scripted[0].size_bytes, 100'000u);
  EXPECT_EQ(sc.traffic.scripted[0].packet_payload, 1000u);
  EXPECT_EQ(sc.traffic.scripted[0].creation_time, 500'000u);
}

TEST(Parsing, AxisProductOrder) {
  const auto cells = axis_product({{"a", {"1", "2"}}, {"b", {"x", "y", "z"}}});
  ASSERT_EQ(cells.size(), 6u);
  EXPECT_EQ(cells[0], (std::vector<std::string>{"1", "x"}));
  EXPECT_EQ(cells[1], (std::vector<std::string>{"1", "y"}));
  EXPECT_EQ(cells[5], (std::vector<std::string>{"2", "z"}));
}

}  // namespace
}  // namespace epidemic::cli
