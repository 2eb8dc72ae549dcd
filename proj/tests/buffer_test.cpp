#include "epidemic/buffer.hpp"

#include <algorithm>
#include <cstdint>
#include <random>
#include <set>
#include <vector>

#include <gtest/gtest.h>

namespace epidemic::buffer {
namespace {

constexpr TimeUs kSec = 1'000'000;

QueueEntry entry(NodeId src, TimeUs ts, std::uint64_t size, NodeId dst = 9) {
  const auto id = MessageId::make(src, ts);
  return QueueEntry(id, dst, 50, 1460, MessageBody::pattern(id, size));
}

TEST(QueueEntry, PacketSizesCoverBody) {
  const auto e = entry(1, 10, 5'000'000);
  ASSERT_EQ(e.packet_total(), 3425u);
  EXPECT_EQ(e.packet_size(0), 1460u);
  EXPECT_EQ(e.packet_size(3423), 1460u);
  EXPECT_EQ(e.packet_size(3424), 960u);
  EXPECT_THROW(e.packet_size(3425), std::out_of_range);
}

TEST(QueueEntry, RejectsEmpty) {
  const auto id = MessageId::make(1, 1);
  EXPECT_THROW(QueueEntry(id, 2, 1, 1460, MessageBody::bytes({})), std::invalid_argument);
  EXPECT_THROW(QueueEntry(id, 2, 1, 0, MessageBody::pattern(id, 10)), std::invalid_argument);
}

TEST(MessageBody, PatternIsStableAndIdSpecific) {
  const auto a = MessageBody::pattern(MessageId::make(1, 5), 64);
  const auto b = MessageBody::pattern(MessageId::make(2, 5), 64);
  std::vector<std::uint8_t> x(64), y(64), z(32);
  a->read(0, x);
  b->read(0, y);
  a->read(32, z);
  EXPECT_NE(x, y);
  EXPECT_TRUE(std::equal(z.begin(), z.end(), x.begin() + 32));
  EXPECT_THROW(a->read(40, z), std::out_of_range);
}

TEST(MessageBuffer, DuplicateRejected) {
  MessageBuffer buf(1000, 100 * kSec);
  EXPECT_TRUE(buf.enqueue(entry(1, 1, 10), 0).accepted());
  EXPECT_EQ(buf.enqueue(entry(1, 1, 10), 0).status, EnqueueStatus::kDuplicate);
  EXPECT_EQ(buf.size(), 1u);
}

TEST(MessageBuffer, TooLargeRejected) {
  MessageBuffer buf(1000, 100 * kSec);
  EXPECT_TRUE(buf.enqueue(entry(1, 1, 1000), 0).accepted());
  EXPECT_EQ(buf.enqueue(entry(1, 2, 1001), 0).status, EnqueueStatus::kTooLarge);
  EXPECT_TRUE(buf.contains(MessageId::make(1, 1)));
}

TEST(MessageBuffer, ExpiredOnArrivalRejected) {
  MessageBuffer buf(1000, 10 * kSec);
  EXPECT_EQ(buf.enqueue(entry(1, 0, 10), 10 * kSec + 1).status, EnqueueStatus::kExpired);
  // exactly at the boundary the message is still live
  EXPECT_TRUE(buf.enqueue(entry(1, 1, 10), 10 * kSec + 1).accepted());
}

TEST(MessageBuffer, EvictsOldestUntilFits) {
  MessageBuffer buf(300, 100 * kSec);
  ASSERT_TRUE(buf.enqueue(entry(3, 30, 100), 40).accepted());
  ASSERT_TRUE(buf.enqueue(entry(1, 10, 100), 40).accepted());
  ASSERT_TRUE(buf.enqueue(entry(2, 20, 100), 40).accepted());
  const auto r = buf.enqueue(entry(4, 40, 150), 40);
  ASSERT_TRUE(r.accepted());
  EXPECT_EQ(r.evicted, (std::vector{MessageId::make(1, 10), MessageId::make(2, 20)}));
  EXPECT_EQ(buf.stored_bytes(), 250u);
}

TEST(MessageBuffer, ExpirySweptBeforeEviction) {
  MessageBuffer buf(200, 10 * kSec);
  ASSERT_TRUE(buf.enqueue(entry(1, 0, 100), 0).accepted());
  ASSERT_TRUE(buf.enqueue(entry(2, 5 * kSec, 100), 5 * kSec).accepted());
  const auto r = buf.enqueue(entry(3, 11 * kSec, 100), 11 * kSec);
  ASSERT_TRUE(r.accepted());
  EXPECT_EQ(r.expired, (std::vector{MessageId::make(1, 0)}));
  EXPECT_TRUE(r.evicted.empty());
}

TEST(MessageBuffer, SummaryAscendingRaw) {
  MessageBuffer buf(1000, 100 * kSec);
  buf.enqueue(entry(2, 1, 1), 5);
  buf.enqueue(entry(1, 3, 1), 5);
  buf.enqueue(entry(1, 2, 1), 5);
  EXPECT_EQ(buf.summary(),
            (std::vector{MessageId::make(1, 2), MessageId::make(1, 3), MessageId::make(2, 1)}));
}

TEST(MessageBuffer, DisjointOldestFirst) {
  MessageBuffer buf(1000, 100 * kSec);
  buf.enqueue(entry(2, 1, 1), 5);
  buf.enqueue(entry(1, 3, 1), 5);
  buf.enqueue(entry(1, 2, 1), 5);
  const std::vector remote{MessageId::make(1, 2)};
  EXPECT_EQ(buf.find_disjoint(remote), (std::vector{MessageId::make(2, 1), MessageId::make(1, 3)}));
}

// Brute-force model: a flat list with linear scans.
struct Model {
  std::uint64_t capacity;
  TimeUs ttl;
  std::vector<std::pair<MessageId, std::uint64_t>> items;

  std::uint64_t used() const {
    std::uint64_t s = 0;
    for (auto& [_, b] : items) s += b;
    return s;
  }
  bool expired(MessageId id, TimeUs now) const {
    return now > id.timestamp_us() && now - id.timestamp_us() > ttl;
  }
  EnqueueStatus add(MessageId id, std::uint64_t bytes, TimeUs now) {
    std::erase_if(items, [&](auto& it) { return expired(it.first, now); });
    for (auto& it : items)
      if (it.first == id) return EnqueueStatus::kDuplicate;
    if (expired(id, now)) return EnqueueStatus::kExpired;
    if (bytes > capacity) return EnqueueStatus::kTooLarge;
    while (used() + bytes > capacity) {
      auto oldest = std::min_element(items.begin(), items.end(), [](auto& a, auto& b) {
        return AgeKey{a.first.timestamp_us(), a.first} < AgeKey{b.first.timestamp_us(), b.first};
      });
      items.erase(oldest);
    }
    items.emplace_back(id, bytes);
    return EnqueueStatus::kAccepted;
  }
};

TEST(MessageBufferProperty, MatchesBruteForceModel) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 50; ++trial) {
    const std::uint64_t cap = 500 + rng() % 2000;
    const TimeUs ttl = (1 + rng() % 20) * kSec;
    MessageBuffer buf(cap, ttl);
    Model model{cap, ttl, {}};
    TimeUs now = 0;
    for (int step = 0; step < 400; ++step) {
      now += rng() % (kSec / 2);
      const NodeId src = static_cast<NodeId>(rng() % 5);
      const TimeUs ts = now >= 30 * kSec ? now - (rng() % (30 * kSec)) : rng() % (now + 1);
      const std::uint64_t size = 1 + rng() % (cap / 3 + 200);
      const auto id = MessageId::make(src, ts);
      const auto expect = model.add(id, size, now);
      const auto got = buf.enqueue(QueueEntry(id, 7, 5, 100, MessageBody::pattern(id, size)), now);
      ASSERT_EQ(got.status, expect) << "trial " << trial << " step " << step;
      ASSERT_LE(buf.stored_bytes(), cap);
      ASSERT_EQ(buf.stored_bytes(), model.used());
      const auto summary = buf.summary();
      std::set<MessageId> a(summary.begin(), summary.end());
      std::set<MessageId> b;
      for (auto& [m, _] : model.items) b.insert(m);
      ASSERT_EQ(a, b);
    }
  }
}

TEST(MessageBufferProperty, DisjointMatchesSetDifference) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    MessageBuffer buf(1'000'000, 1000 * kSec);
    std::vector<MessageId> local, remote;
    for (int i = 0; i < 40; ++i) {
      const auto id = MessageId::make(static_cast<NodeId>(rng() % 4), rng() % 100);
      if (buf.enqueue(QueueEntry(id, 1, 1, 10, MessageBody::pattern(id, 10)), 100).accepted())
        local.push_back(id);
      if (rng() % 2) remote.push_back(id);
      if (rng() % 3 == 0) remote.push_back(MessageId::make(9, rng() % 100));
    }
    const auto got = buf.find_disjoint(remote);
    std::vector<MessageId> expect;
    for (auto id : local)
      if (std::find(remote.begin(), remote.end(), id) == remote.end()) expect.push_back(id);
    std::sort(expect.begin(), expect.end(), [](MessageId a, MessageId b) {
      return AgeKey{a.timestamp_us(), a} < AgeKey{b.timestamp_us(), b};
    });
    ASSERT_EQ(got, expect);
  }
}

}  // namespace
}  // namespace epidemic::buffer
