#pragma once

// DTN application traffic: message specs, segmentation into packets and
// seeded schedules.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "epidemic/buffer.hpp"
#include "epidemic/wire.hpp"

namespace epidemic::traffic {

using wire::MessageId;

class GenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct MessageSpec {
  NodeId source = 0;
  NodeId destination = 1;
  std::uint64_t size_bytes = 1;
  std::uint32_t packet_payload = 1460;
  TimeUs creation_time = 0;

  void validate() const {
    if (size_bytes == 0) throw GenerationError("message size must be at least one byte");
    if (packet_payload == 0) throw GenerationError("packet payload must be at least one byte");
    if (source == destination) {
      throw GenerationError("message source and destination are both node " +
                            std::to_string(source));
    }
  }

  MessageId id() const { return MessageId::make(source, creation_time); }

  std::uint32_t packet_total() const {
    return static_cast<std::uint32_t>((size_bytes + packet_payload - 1) / packet_payload);
  }

  std::uint32_t last_payload() const {
    return static_cast<std::uint32_t>(size_bytes - std::uint64_t{packet_payload} * (packet_total() - 1));
  }

  friend bool operator==(const MessageSpec&, const MessageSpec&) = default;
};

/// A complete, pattern-filled queue entry ready for the source's buffer.
inline buffer::QueueEntry generate_message(const MessageSpec& spec, std::uint32_t hop_limit) {
  spec.validate();
  const MessageId id = spec.id();
  return buffer::QueueEntry(id, spec.destination, hop_limit, spec.packet_payload,
                            buffer::MessageBody::pattern(id, spec.size_bytes));
}

/// The payloads of every packet of `spec`, in index order.
inline std::vector<std::vector<std::uint8_t>> segment(const MessageSpec& spec) {
  const auto entry = generate_message(spec, 1);
  std::vector<std::vector<std::uint8_t>> out;
  out.reserve(entry.packet_total());
  for (std::uint32_t i = 0; i < entry.packet_total(); ++i) out.push_back(entry.packet(i));
  return out;
}

struct TrafficConfig {
  std::uint64_t messages = 0;
  double rate = 0;  // messages per second over the window; used when messages == 0
  std::uint64_t message_size = 100'000;
  std::uint32_t packet_payload = 1460;
  TimeUs window_start = 0;
  TimeUs window_end = 0;
  std::vector<MessageSpec> scripted;

  std::uint64_t random_count() const {
    if (messages > 0) return messages;
    if (rate <= 0 || window_end <= window_start) return 0;
    return static_cast<std::uint64_t>(
        std::floor(rate * static_cast<double>(window_end - window_start) / 1e6));
  }
};

/// Scripted messages plus random ones: uniform (source, destination) pairs and
/// uniform creation times over [window_start, window_end). Random creation
/// times are nudged forward by whole microseconds until unique per source;
/// colliding scripted messages are an error. Sorted by creation time, then
/// source.
inline std::vector<MessageSpec> build_schedule(const TrafficConfig& cfg, std::size_t node_count,
                                               std::uint64_t seed) {
  std::set<std::pair<NodeId, TimeUs>> taken;
  std::vector<MessageSpec> out;
  for (const MessageSpec& s : cfg.scripted) {
    s.validate();
    if (s.source >= node_count || s.destination >= node_count) {
      throw GenerationError("scripted message names a node outside the scenario");
    }
    if (!taken.insert({s.source, s.creation_time}).second) {
      throw GenerationError("two messages from node " + std::to_string(s.source) + " at " +
                            std::to_string(s.creation_time) + " us share a message id");
    }
    out.push_back(s);
  }
  const std::uint64_t n = cfg.random_count();
  if (n > 0) {
    if (node_count < 2) throw GenerationError("random traffic needs at least two nodes");
    if (cfg.window_end <= cfg.window_start) throw GenerationError("empty traffic window");
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, node_count - 1);
    std::uniform_int_distribution<std::size_t> other(0, node_count - 2);
    std::uniform_int_distribution<TimeUs> when(cfg.window_start, cfg.window_end - 1);
    for (std::uint64_t i = 0; i < n; ++i) {
      MessageSpec s;
      s.source = static_cast<NodeId>(pick(rng));
      const std::size_t d = other(rng);
      s.destination = static_cast<NodeId>(d >= s.source ? d + 1 : d);
      s.size_bytes = cfg.message_size;
      s.packet_payload = cfg.packet_payload;
      s.creation_time = when(rng);
      while (!taken.insert({s.source, s.creation_time}).second) ++s.creation_time;
      s.validate();
      out.push_back(s);
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const MessageSpec& a, const MessageSpec& b) {
    return a.creation_time != b.creation_time ? a.creation_time < b.creation_time
                                              : a.source < b.source;
  });
  return out;
}

}  // namespace epidemic::traffic
