#include "epidemic/traffic.hpp"

#include <set>
#include <vector>

#include <gtest/gtest.h>

namespace epidemic::traffic {
namespace {

TEST(MessageSpec, FiveMegabytesSegmentation) {
  MessageSpec s{0, 1, 5'000'000, 1460, 0};
  EXPECT_EQ(s.packet_total(), 3425u);
  EXPECT_EQ(s.last_payload(), 960u);
  const auto e = generate_message(s, 50);
  EXPECT_EQ(e.packet_total(), 3425u);
  EXPECT_EQ(e.packet_size(3424), 960u);
  EXPECT_EQ(e.hop_budget(), 50u);
  EXPECT_EQ(e.destination(), 1);
}

TEST(MessageSpec, Boundaries) {
  EXPECT_EQ((MessageSpec{0, 1, 1, 1460, 0}).packet_total(), 1u);
  EXPECT_EQ((MessageSpec{0, 1, 1, 1460, 0}).last_payload(), 1u);
  EXPECT_EQ((MessageSpec{0, 1, 1460, 1460, 0}).packet_total(), 1u);
  EXPECT_EQ((MessageSpec{0, 1, 1460, 1460, 0}).last_payload(), 1460u);
  EXPECT_EQ((MessageSpec{0, 1, 1461, 1460, 0}).packet_total(), 2u);
  EXPECT_EQ((MessageSpec{0, 1, 1461, 1460, 0}).last_payload(), 1u);
}

TEST(MessageSpec, Rejections) {
  EXPECT_THROW(generate_message({0, 1, 0, 1460, 0}, 5), GenerationError);
  EXPECT_THROW(generate_message({0, 1, 10, 0, 0}, 5), GenerationError);
  EXPECT_THROW(generate_message({3, 3, 10, 1460, 0}, 5), GenerationError);
}

TEST(MessageSpec, IdFromSourceAndCreation) {
  const MessageSpec s{5, 1, 10, 1460, 1'000'000};
  EXPECT_EQ(s.id().raw(), 1407374884553280ULL);
}

TEST(Segment, ReassemblesToBody) {
  const MessageSpec s{2, 4, 10'000, 1460, 77};
  const auto parts = segment(s);
  ASSERT_EQ(parts.size(), 7u);
  std::vector<std::uint8_t> joined;
  for (const auto& p : parts) joined.insert(joined.end(), p.begin(), p.end());
  ASSERT_EQ(joined.size(), 10'000u);
  for (std::size_t i = 0; i < joined.size(); ++i) {
    ASSERT_EQ(joined[i], buffer::pattern_byte(s.id(), i));
  }
}

TEST(Schedule, DeterministicAndSorted) {
  TrafficConfig c;
  c.messages = 200;
  c.window_start = 10;
  c.window_end = 1'000'000;
  const auto a = build_schedule(c, 8, 42);
  EXPECT_EQ(a, build_schedule(c, 8, 42));
  EXPECT_NE(a, build_schedule(c, 8, 43));
  ASSERT_EQ(a.size(), 200u);
  std::set<std::uint64_t> ids;
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_NE(a[i].source, a[i].destination);
    EXPECT_LT(a[i].source, 8);
    EXPECT_LT(a[i].destination, 8);
    EXPECT_GE(a[i].creation_time, 10u);
    if (i) {
      EXPECT_LE(a[i - 1].creation_time, a[i].creation_time);
    }
    ids.insert(a[i].id().raw());
  }
  EXPECT_EQ(ids.size(), a.size());
}

TEST(Schedule, CollisionsNudgedToUniqueIds) {
  TrafficConfig c;
  c.messages = 50;
  c.window_start = 0;
  c.window_end = 3;  // forces collisions between two sources
  const auto a = build_schedule(c, 2, 1);
  std::set<std::uint64_t> ids;
  for (const auto& s : a) ids.insert(s.id().raw());
  EXPECT_EQ(ids.size(), 50u);
}

TEST(Schedule, RateDerivesCount) {
  TrafficConfig c;
  c.rate = 0.5;
  c.window_start = 0;
  c.window_end = 100'000'000;
  EXPECT_EQ(c.random_count(), 50u);
  EXPECT_EQ(build_schedule(c, 3, 9).size(), 50u);
}

TEST(Schedule, ScriptedCollisionIsError) {
  TrafficConfig c;
  c.scripted = {{0, 1, 10, 1460, 5}, {0, 2, 10, 1460, 5}};
  EXPECT_THROW(build_schedule(c, 3, 1), GenerationError);
  c.scripted = {{0, 1, 10, 1460, 5}, {1, 0, 10, 1460, 5}};
  EXPECT_EQ(build_schedule(c, 3, 1).size(), 2u);
  c.scripted = {{0, 5, 10, 1460, 5}};
  EXPECT_THROW(build_schedule(c, 3, 1), GenerationError);
}

}  // namespace
}  // namespace epidemic::traffic
