#pragma once

// Per-node message store: complete messages keyed by MessageId, bounded by a
// byte capacity and a maximum age.

#include <algorithm>
#include <concepts>
#include <cstdint>
#include <map>
#include <memory>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "epidemic/wire.hpp"

namespace epidemic::buffer {

using wire::MessageId;

/// Deterministic payload for generated traffic, eight bytes per hash. Lets any
/// node check a reassembled message without the source keeping a copy.
inline std::uint64_t pattern_word(MessageId id, std::uint64_t word) noexcept {
  std::uint64_t x = id.raw() ^ (word * 0x9E3779B97F4A7C15ULL);
  x ^= x >> 29;
  x *= 0xBF58476D1CE4E5B9ULL;
  x ^= x >> 32;
  x *= 0x94D049BB133111EBULL;
  x ^= x >> 29;
  return x;
}

inline std::uint8_t pattern_byte(MessageId id, std::uint64_t offset) noexcept {
  return static_cast<std::uint8_t>(pattern_word(id, offset >> 3) >> (8 * (offset & 7)));
}

/// Immutable message content, shared between every copy of a message.
class MessageBody {
 public:
  static std::shared_ptr<const MessageBody> pattern(MessageId id, std::uint64_t size) {
    return std::shared_ptr<const MessageBody>(new MessageBody(id, size, {}));
  }
  static std::shared_ptr<const MessageBody> bytes(std::vector<std::uint8_t> content) {
    const auto size = content.size();
    return std::shared_ptr<const MessageBody>(new MessageBody(MessageId{}, size, std::move(content)));
  }

  std::uint64_t size() const noexcept { return size_; }
  bool is_pattern() const noexcept { return stored_.empty() && size_ > 0; }

  void read(std::uint64_t offset, std::span<std::uint8_t> out) const {
    if (offset + out.size() > size_) throw std::out_of_range("message body: read past end");
    if (!stored_.empty()) {
      std::copy_n(stored_.begin() + static_cast<std::ptrdiff_t>(offset), out.size(), out.begin());
      return;
    }
    std::size_t i = 0;
    for (; i < out.size() && ((offset + i) & 7) != 0; ++i) {
      out[i] = pattern_byte(pattern_id_, offset + i);
    }
    for (; i + 8 <= out.size(); i += 8) {
      std::uint64_t w = pattern_word(pattern_id_, (offset + i) >> 3);
      for (int b = 0; b < 8; ++b, w >>= 8) out[i + b] = static_cast<std::uint8_t>(w);
    }
    for (; i < out.size(); ++i) out[i] = pattern_byte(pattern_id_, offset + i);
  }

 private:
  MessageBody(MessageId id, std::uint64_t size, std::vector<std::uint8_t> stored)
      : pattern_id_(id), size_(size), stored_(std::move(stored)) {}

  MessageId pattern_id_;
  std::uint64_t size_;
  std::vector<std::uint8_t> stored_;
};

/// A complete message as held in a buffer.
class QueueEntry {
 public:
  QueueEntry(MessageId id, NodeId destination, std::uint32_t hop_budget,
             std::uint32_t packet_payload_size, std::shared_ptr<const MessageBody> body)
      : id_(id),
        destination_(destination),
        hop_budget_(hop_budget),
        payload_size_(packet_payload_size),
        body_(std::move(body)) {
    if (!body_ || body_->size() == 0) throw std::invalid_argument("queue entry: empty message");
    if (payload_size_ == 0) throw std::invalid_argument("queue entry: zero packet payload");
    const std::uint64_t total = (body_->size() + payload_size_ - 1) / payload_size_;
    if (total > 0xFFFFFFFFULL) throw std::invalid_argument("queue entry: too many packets");
    packet_total_ = static_cast<std::uint32_t>(total);
  }

  MessageId message_id() const noexcept { return id_; }
  NodeId destination() const noexcept { return destination_; }
  std::uint32_t hop_budget() const noexcept { return hop_budget_; }
  std::uint32_t packet_total() const noexcept { return packet_total_; }
  std::uint32_t packet_payload_size() const noexcept { return payload_size_; }
  std::uint64_t byte_size() const noexcept { return body_->size(); }
  TimeUs generated_at() const noexcept { return id_.timestamp_us(); }
  const std::shared_ptr<const MessageBody>& body() const noexcept { return body_; }

  std::uint32_t packet_size(std::uint32_t index) const {
    if (index >= packet_total_) throw std::out_of_range("queue entry: packet index");
    if (index + 1 < packet_total_) return payload_size_;
    return static_cast<std::uint32_t>(body_->size() - std::uint64_t{payload_size_} * index);
  }

  std::vector<std::uint8_t> packet(std::uint32_t index) const {
    std::vector<std::uint8_t> out(packet_size(index));
    body_->read(std::uint64_t{payload_size_} * index, out);
    return out;
  }

 private:
  MessageId id_;
  NodeId destination_;
  std::uint32_t hop_budget_;
  std::uint32_t payload_size_;
  std::uint32_t packet_total_ = 0;
  std::shared_ptr<const MessageBody> body_;
};

enum class EnqueueStatus { kAccepted, kDuplicate, kExpired, kTooLarge };

struct EnqueueResult {
  EnqueueStatus status = EnqueueStatus::kAccepted;
  std::vector<MessageId> expired;
  std::vector<MessageId> evicted;

  bool accepted() const noexcept { return status == EnqueueStatus::kAccepted; }
};

/// Eviction and transmission priority both run oldest generation first;
/// the full id breaks ties between sources that share a timestamp.
struct AgeKey {
  TimeUs generated_at;
  MessageId id;
  friend auto operator<=>(const AgeKey&, const AgeKey&) = default;
};

class MessageBuffer {
 public:
  MessageBuffer(std::uint64_t capacity_bytes, TimeUs ttl_us)
      : capacity_(capacity_bytes), ttl_(ttl_us) {
    if (capacity_ == 0) throw std::invalid_argument("message buffer: zero capacity");
    if (ttl_ == 0) throw std::invalid_argument("message buffer: zero ttl");
  }

  std::uint64_t capacity_bytes() const noexcept { return capacity_; }
  std::uint64_t stored_bytes() const noexcept { return stored_; }
  TimeUs ttl_us() const noexcept { return ttl_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  bool contains(MessageId id) const { return entries_.contains(id); }

  const QueueEntry* find(MessageId id) const {
    auto it = entries_.find(id);
    return it == entries_.end() ? nullptr : &it->second;
  }

  bool is_expired(MessageId id, TimeUs now) const noexcept {
    return now > id.timestamp_us() && now - id.timestamp_us() > ttl_;
  }

  /// Sweeps expired entries, then admits `entry`, evicting oldest-first
  /// until it fits.
  EnqueueResult enqueue(QueueEntry entry, TimeUs now) {
    EnqueueResult result;
    result.expired = drop_expired(now);
    const MessageId id = entry.message_id();
    if (entries_.contains(id)) {
      result.status = EnqueueStatus::kDuplicate;
      return result;
    }
    if (is_expired(id, now)) {
      result.status = EnqueueStatus::kExpired;
      return result;
    }
    if (entry.byte_size() > capacity_) {
      result.status = EnqueueStatus::kTooLarge;
      return result;
    }
    while (stored_ + entry.byte_size() > capacity_) {
      const MessageId victim = by_age_.begin()->id;
      erase(victim);
      result.evicted.push_back(victim);
    }
    stored_ += entry.byte_size();
    by_age_.insert({entry.generated_at(), id});
    entries_.emplace(id, std::move(entry));
    return result;
  }

  std::vector<MessageId> drop_expired(TimeUs now) {
    std::vector<MessageId> dropped;
    // Age order makes the expired set a prefix of by_age_.
    while (!by_age_.empty() && is_expired(by_age_.begin()->id, now)) {
      dropped.push_back(by_age_.begin()->id);
      erase(by_age_.begin()->id);
    }
    return dropped;
  }

  bool erase(MessageId id) {
    auto it = entries_.find(id);
    if (it == entries_.end()) return false;
    stored_ -= it->second.byte_size();
    by_age_.erase({it->second.generated_at(), id});
    entries_.erase(it);
    return true;
  }

  /// Stored ids, ascending by raw value.
  std::vector<MessageId> summary() const {
    std::vector<MessageId> ids;
    ids.reserve(entries_.size());
    for (const auto& [id, _] : entries_) ids.push_back(id);
    return ids;
  }

  /// Local ids absent from `remote`, oldest generation first.
  template <typename Set>
    requires requires(const Set& s, MessageId id) {
      { s.contains(id) } -> std::convertible_to<bool>;
    }
  std::vector<MessageId> find_disjoint(const Set& remote) const {
    std::vector<MessageId> out;
    for (const AgeKey& k : by_age_) {
      if (!remote.contains(k.id)) out.push_back(k.id);
    }
    return out;
  }

  std::vector<MessageId> find_disjoint(std::span<const MessageId> remote) const {
    return find_disjoint(std::set<MessageId>(remote.begin(), remote.end()));
  }

 private:
  std::uint64_t capacity_;
  TimeUs ttl_;
  std::uint64_t stored_ = 0;
  std::map<MessageId, QueueEntry> entries_;
  std::set<AgeKey> by_age_;
};

}  // namespace epidemic::buffer
