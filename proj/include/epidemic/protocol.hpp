#pragma once

// Per-node Epidemic router: beacon discovery, neighbor liveness, the
// REPLY / REPLY_BACK summary exchange, ACK-gated message transfer and
// per-neighbor reassembly.
//
// The router is transport agnostic. Every handler returns the frames it wants
// sent; the caller owns the device queue and the clock.

#include <algorithm>
#include <cstdint>
#include <deque>
#include <iterator>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "epidemic/buffer.hpp"
#include "epidemic/events.hpp"
#include "epidemic/wire.hpp"

namespace epidemic::protocol {

using buffer::MessageBuffer;
using buffer::QueueEntry;
using wire::MessageId;

inline constexpr TimeUs kSecond = 1'000'000;

/// Raised when a router's internal invariant breaks. Never expected.
class InvariantViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

struct ProtocolConfig {
  TimeUs beacon_interval = 1 * kSecond;
  TimeUs beacon_randomness = 100'000;  // zero disables jitter
  std::uint64_t buffer_capacity = 5'000'000;
  TimeUs message_ttl = 3600 * kSecond;
  std::uint32_t hop_limit = 50;
  /// Cap on one encoded SummaryVectorHeader.
  std::uint64_t max_control_payload = 1400;

  void validate() const {
    if (beacon_interval == 0) throw std::invalid_argument("beacon_interval must be positive");
    if (buffer_capacity == 0) throw std::invalid_argument("buffer_capacity must be positive");
    if (message_ttl == 0) throw std::invalid_argument("message_ttl must be positive");
    if (hop_limit == 0) throw std::invalid_argument("hop_limit must be positive");
    if (max_control_payload < wire::SummaryVectorHeader::kFixedSize + 8) {
      throw std::invalid_argument("max_control_payload must be at least 12 bytes");
    }
  }

  TimeUs connection_timeout() const noexcept { return 2 * beacon_interval; }
};

using Address = std::uint32_t;

enum class Port : std::uint8_t { kControl, kData };

/// A packet handed to the link layer. The network-layer source and
/// destination model the IP header that travels with every DTN packet; the
/// final destination of a message is only known from there.
struct Frame {
  NodeId link_src = 0;
  Address src_addr = 0;
  std::optional<NodeId> link_dst;  // nullopt: broadcast
  Port port = Port::kControl;
  NodeId net_src = 0;
  NodeId net_dst = kNoNode;
  FrameClass frame_class = FrameClass::kBeacon;
  MessageId message_id;
  std::uint32_t header_bytes = 0;  // DTN header bytes, data frames only
  std::vector<std::uint8_t> bytes;
};

/// Splits `ids` into SummaryVectorHeaders whose encoding fits
/// `max_control_payload`. Always yields at least one fragment.
inline std::vector<wire::SummaryVectorHeader> build_summary_fragments(
    const std::vector<MessageId>& ids, std::uint64_t max_control_payload) {
  if (max_control_payload < wire::SummaryVectorHeader::kFixedSize + 8) {
    throw std::invalid_argument("summary fragments: payload cap below one id");
  }
  const std::uint64_t per_fragment = std::min<std::uint64_t>(
      (max_control_payload - wire::SummaryVectorHeader::kFixedSize) / 8,
      wire::SummaryVectorHeader::kMaxIds);
  std::vector<wire::SummaryVectorHeader> out;
  std::size_t pos = 0;
  do {
    const std::size_t take = static_cast<std::size_t>(
        std::min<std::uint64_t>(per_fragment, ids.size() - pos));
    wire::SummaryVectorHeader h;
    h.ids.assign(ids.begin() + static_cast<std::ptrdiff_t>(pos),
                 ids.begin() + static_cast<std::ptrdiff_t>(pos + take));
    pos += take;
    h.more_fragments = pos < ids.size();
    out.push_back(std::move(h));
  } while (pos < ids.size());
  return out;
}

enum class Session { kIdle, kAwaitingReplyBack, kExchanging };

struct ReceptionBuffer {
  std::optional<MessageId> message_id;
  std::uint32_t packet_total = 0;
  std::uint32_t hop_budget = 0;
  NodeId destination = kNoNode;
  // Whole frames are kept; the payload starts after the DTN headers.
  std::map<std::uint32_t, std::vector<std::uint8_t>> packets;

  void reset() {
    message_id.reset();
    packet_total = 0;
    hop_budget = 0;
    destination = kNoNode;
    packets.clear();
  }
};

struct SendPipeline {
  std::deque<MessageId> pending;
  std::optional<MessageId> in_flight;
  TimeUs in_flight_since = 0;
};

struct NeighborRecord {
  NodeId node_id = 0;
  Address address = 0;
  TimeUs last_heard = 0;
  TimeUs last_data_tx = 0;
  Session session = Session::kIdle;
  ReceptionBuffer rx;
  SendPipeline tx;
  std::vector<MessageId> reply_ids;
  std::vector<MessageId> reply_back_ids;

  /// Last moment this link showed any activity. A node streaming a long
  /// message hears nothing back until the ACK, so its own transmissions to
  /// the neighbor count as activity too.
  TimeUs last_activity() const noexcept {
    TimeUs t = std::max(last_heard, last_data_tx);
    if (tx.in_flight) t = std::max(t, tx.in_flight_since);
    return t;
  }
};

struct RouterStats {
  std::uint64_t data_packets_received = 0;
  std::uint64_t packets_in_completed = 0;
  std::uint64_t partial_packets_dropped = 0;
  std::uint64_t malformed_packets = 0;
  std::uint64_t duplicate_packets = 0;
  std::uint64_t failed_acks = 0;
  std::uint64_t stale_acks = 0;
  std::uint64_t messages_sent = 0;
  std::uint64_t protocol_violations = 0;
};

class Router {
 public:
  Router(NodeId self, Address address, ProtocolConfig config, std::uint64_t seed,
         EventSink sink = {})
      : self_(self),
        address_(address),
        config_((config.validate(), config)),
        buffer_(config.buffer_capacity, config.message_ttl),
        rng_(seed),
        sink_(std::move(sink)) {}

  NodeId id() const noexcept { return self_; }
  Address address() const noexcept { return address_; }
  const ProtocolConfig& config() const noexcept { return config_; }
  const MessageBuffer& buffer() const noexcept { return buffer_; }
  const RouterStats& stats() const noexcept { return stats_; }
  const std::map<NodeId, NeighborRecord>& neighbors() const noexcept { return neighbors_; }

  const NeighborRecord* neighbor(NodeId id) const {
    auto it = neighbors_.find(id);
    return it == neighbors_.end() ? nullptr : &it->second;
  }

  bool is_live(const NeighborRecord& n, TimeUs now) const noexcept {
    return now < n.last_activity() + config_.connection_timeout();
  }

  /// Data packets currently parked in reception buffers.
  std::uint64_t pending_reception_packets() const {
    std::uint64_t n = 0;
    for (const auto& [_, rec] : neighbors_) n += rec.rx.packets.size();
    return n;
  }

  TimeUs next_beacon_delay() {
    std::uniform_int_distribution<TimeUs> jitter(0, config_.beacon_randomness);
    return config_.beacon_interval + jitter(rng_);
  }

  /// Expires dead neighbors, then broadcasts one BEACON. The caller schedules
  /// the next firing after next_beacon_delay().
  std::vector<Frame> on_beacon_timer(TimeUs now) {
    on_connection_check(now);
    std::vector<Frame> out;
    out.push_back(make_control({wire::MessageType::kBeacon, self_}, {}, std::nullopt,
                               FrameClass::kBeacon));
    return out;
  }

  void on_connection_check(TimeUs now) {
    for (auto it = neighbors_.begin(); it != neighbors_.end();) {
      if (is_live(it->second, now)) {
        ++it;
        continue;
      }
      drop_partial(it->second, now, DropCause::kPartialDisconnect);
      it = neighbors_.erase(it);
    }
  }

  /// Entry point for every frame the link layer hands up.
  std::vector<Frame> receive(Frame frame, TimeUs now) {
    if (frame.port == Port::kData) return on_data_frame(std::move(frame), now);
    wire::ControlPacket pkt;
    try {
      pkt = wire::decode_control(frame.bytes);
    } catch (const wire::DecodeError&) {
      ++stats_.malformed_packets;
      record_drop(now, frame.link_src, MessageId{}, DropCause::kMalformed, 1);
      return {};
    }
    if (pkt.type.node_id == self_) return {};
    switch (pkt.type.msg_type) {
      case wire::MessageType::kBeacon:
        return on_beacon(pkt.type, frame.src_addr, now);
      case wire::MessageType::kReply:
        return on_reply(pkt.type.node_id, frame.src_addr,
                        std::get<wire::SummaryVectorHeader>(pkt.body), now);
      case wire::MessageType::kReplyBack:
        return on_reply_back(pkt.type.node_id, frame.src_addr,
                             std::get<wire::SummaryVectorHeader>(pkt.body), now);
      case wire::MessageType::kAck:
        return on_ack(pkt.type.node_id, frame.src_addr, std::get<wire::AckHeader>(pkt.body), now);
    }
    return {};
  }

  std::vector<Frame> on_beacon(const wire::MessageTypeHeader& hdr, Address sender_addr,
                               TimeUs now) {
    auto it = neighbors_.find(hdr.node_id);
    if (it != neighbors_.end() && is_live(it->second, now)) return {};
    if (it != neighbors_.end()) {
      // Stale record: this beacon opens a new connection.
      drop_partial(it->second, now, DropCause::kPartialDisconnect);
      neighbors_.erase(it);
    }
    NeighborRecord& n = neighbors_[hdr.node_id];
    n.node_id = hdr.node_id;
    n.address = sender_addr;
    n.last_heard = now;
    if (!leads(n)) return {};
    n.session = Session::kAwaitingReplyBack;
    return summary_frames(wire::MessageType::kReply, n.node_id, now);
  }

  std::vector<Frame> on_reply(NodeId from, Address sender_addr,
                              const wire::SummaryVectorHeader& fragment, TimeUs now) {
    NeighborRecord& n = touch(from, sender_addr, now);
    if (leads(n)) {
      // The lower address sends REPLY; receiving one means the peer thinks
      // it leads.
      ++stats_.protocol_violations;
      return {};
    }
    n.reply_ids.insert(n.reply_ids.end(), fragment.ids.begin(), fragment.ids.end());
    if (fragment.more_fragments) return {};
    std::set<MessageId> remote(n.reply_ids.begin(), n.reply_ids.end());
    n.reply_ids.clear();
    std::vector<Frame> out = summary_frames(wire::MessageType::kReplyBack, from, now);
    auto data = begin_exchange(n, remote, now);
    std::move(data.begin(), data.end(), std::back_inserter(out));
    return out;
  }

  std::vector<Frame> on_reply_back(NodeId from, Address sender_addr,
                                   const wire::SummaryVectorHeader& fragment, TimeUs now) {
    NeighborRecord& n = touch(from, sender_addr, now);
    if (!leads(n)) {
      ++stats_.protocol_violations;
      return {};
    }
    n.reply_back_ids.insert(n.reply_back_ids.end(), fragment.ids.begin(), fragment.ids.end());
    if (fragment.more_fragments) return {};
    std::set<MessageId> remote(n.reply_back_ids.begin(), n.reply_back_ids.end());
    n.reply_back_ids.clear();
    return begin_exchange(n, remote, now);
  }

  std::vector<Frame> on_ack(NodeId from, Address sender_addr, const wire::AckHeader& ack,
                            TimeUs now) {
    NeighborRecord& n = touch(from, sender_addr, now);
    if (ack.status != wire::AckHeader::kSuccess) ++stats_.failed_acks;
    if (!n.tx.in_flight || *n.tx.in_flight != ack.message_id) {
      ++stats_.stale_acks;
      return {};
    }
    n.tx.in_flight.reset();
    return send_next(n, now);
  }

  /// Link-layer notification that `frame` finished transmission.
  void on_transmitted(const Frame& frame, TimeUs now) {
    if (frame.port != Port::kData || !frame.link_dst) return;
    auto it = neighbors_.find(*frame.link_dst);
    if (it != neighbors_.end()) it->second.last_data_tx = now;
  }

  /// Places a locally generated message in the buffer.
  void originate(QueueEntry entry, TimeUs now) {
    if (entry.message_id().source_node() != self_) {
      throw std::invalid_argument("originate: message id names node " +
                                  std::to_string(entry.message_id().source_node()));
    }
    if (entry.hop_budget() > config_.hop_limit) {
      throw std::invalid_argument("originate: hop budget above hop limit");
    }
    if (!originated_.insert(entry.message_id()).second) {
      throw std::invalid_argument("originate: duplicate message id " +
                                  std::to_string(entry.message_id().raw()));
    }
    EventRecord e;
    e.time = now;
    e.kind = EventKind::kGenerated;
    e.node = self_;
    e.peer = entry.destination();
    e.message_id = entry.message_id();
    e.count = entry.packet_total();
    e.bytes = entry.byte_size();
    emit(e);
    store(std::move(entry), now);
  }

  /// Adopts a packet that arrived from a local application without DTN
  /// headers as a one-packet message stamped with the current time.
  MessageId wrap_raw_packet(NodeId destination, std::vector<std::uint8_t> payload, TimeUs now) {
    const MessageId id = MessageId::make(self_, now);
    const auto size = static_cast<std::uint32_t>(payload.size());
    if (size == 0) throw std::invalid_argument("wrap_raw_packet: empty payload");
    originate(QueueEntry(id, destination, config_.hop_limit, size,
                         buffer::MessageBody::bytes(std::move(payload))),
              now);
    return id;
  }

  void check_invariants(TimeUs now) const {
    if (buffer_.stored_bytes() > buffer_.capacity_bytes()) {
      throw InvariantViolation("node " + std::to_string(self_) + ": buffer over capacity");
    }
    for (const auto& [id, rec] : neighbors_) {
      if (rec.tx.in_flight &&
          std::find(rec.tx.pending.begin(), rec.tx.pending.end(), *rec.tx.in_flight) !=
              rec.tx.pending.end()) {
        throw InvariantViolation("node " + std::to_string(self_) +
                                 ": in-flight message still pending");
      }
      for (const auto& [index, _] : rec.rx.packets) {
        if (index >= rec.rx.packet_total) {
          throw InvariantViolation("node " + std::to_string(self_) + ": reception index");
        }
      }
    }
    (void)now;
  }

 private:
  bool leads(const NeighborRecord& n) const noexcept {
    if (address_ != n.address) return address_ < n.address;
    return self_ < n.node_id;
  }

  NeighborRecord& touch(NodeId from, Address addr, TimeUs now) {
    NeighborRecord& n = neighbors_[from];
    n.node_id = from;
    n.address = addr;
    n.last_heard = now;
    return n;
  }

  void emit(const EventRecord& e) {
    if (sink_) sink_(e);
  }

  void record_drop(TimeUs now, NodeId peer, MessageId id, DropCause cause, std::uint32_t count) {
    EventRecord e;
    e.time = now;
    e.kind = EventKind::kDrop;
    e.node = self_;
    e.peer = peer;
    e.message_id = id;
    e.cause = cause;
    e.count = count;
    emit(e);
  }

  void drop_partial(NeighborRecord& n, TimeUs now, DropCause cause) {
    if (n.rx.message_id && !n.rx.packets.empty()) {
      const auto held = static_cast<std::uint32_t>(n.rx.packets.size());
      stats_.partial_packets_dropped += held;
      record_drop(now, n.node_id, *n.rx.message_id, cause, held);
    }
    n.rx.reset();
  }

  void expire(TimeUs now) {
    for (MessageId id : buffer_.drop_expired(now)) {
      record_drop(now, kNoNode, id, DropCause::kBufferExpired, 1);
    }
  }

  void store(QueueEntry entry, TimeUs now) {
    const MessageId id = entry.message_id();
    auto result = buffer_.enqueue(std::move(entry), now);
    for (MessageId x : result.expired) record_drop(now, kNoNode, x, DropCause::kBufferExpired, 1);
    for (MessageId x : result.evicted) record_drop(now, kNoNode, x, DropCause::kBufferEvicted, 1);
    switch (result.status) {
      case buffer::EnqueueStatus::kAccepted: break;
      case buffer::EnqueueStatus::kDuplicate:
        record_drop(now, kNoNode, id, DropCause::kDuplicate, 1);
        break;
      case buffer::EnqueueStatus::kExpired:
        record_drop(now, kNoNode, id, DropCause::kTtlOnReceipt, 1);
        break;
      case buffer::EnqueueStatus::kTooLarge:
        record_drop(now, kNoNode, id, DropCause::kBufferTooLarge, 1);
        break;
    }
  }

  Frame make_control(wire::MessageTypeHeader type,
                     std::variant<std::monostate, wire::SummaryVectorHeader, wire::AckHeader> body,
                     std::optional<NodeId> to, FrameClass cls) {
    Frame f;
    f.link_src = self_;
    f.src_addr = address_;
    f.link_dst = to;
    f.port = Port::kControl;
    f.net_src = self_;
    f.net_dst = to.value_or(kNoNode);
    f.frame_class = cls;
    if (body.index() == 2) f.message_id = std::get<2>(body).message_id;
    f.bytes = wire::encode(wire::ControlPacket{type, std::move(body)});
    return f;
  }

  std::vector<Frame> summary_frames(wire::MessageType type, NodeId to, TimeUs now) {
    expire(now);
    const FrameClass cls =
        type == wire::MessageType::kReply ? FrameClass::kReply : FrameClass::kReplyBack;
    std::vector<Frame> out;
    for (auto& frag : build_summary_fragments(buffer_.summary(), config_.max_control_payload)) {
      out.push_back(make_control({type, self_}, std::move(frag), to, cls));
    }
    return out;
  }

  std::vector<Frame> begin_exchange(NeighborRecord& n, const std::set<MessageId>& remote,
                                    TimeUs now) {
    expire(now);
    n.tx.pending.clear();
    for (MessageId id : buffer_.find_disjoint(remote)) {
      if (n.tx.in_flight && *n.tx.in_flight == id) continue;
      n.tx.pending.push_back(id);
    }
    n.session = Session::kExchanging;
    if (n.tx.in_flight) return {};
    return send_next(n, now);
  }

  std::vector<Frame> send_next(NeighborRecord& n, TimeUs now) {
    std::vector<Frame> out;
    while (!n.tx.pending.empty()) {
      const MessageId id = n.tx.pending.front();
      n.tx.pending.pop_front();
      const QueueEntry* entry = buffer_.find(id);
      if (entry == nullptr || buffer_.is_expired(id, now)) continue;
      send_message(n, *entry, now, out);
      return out;
    }
    n.session = Session::kIdle;
    return out;
  }

  void send_message(NeighborRecord& n, const QueueEntry& entry, TimeUs now,
                    std::vector<Frame>& out) {
    const wire::EpidemicHeader epi{entry.message_id(), entry.hop_budget()};
    for (std::uint32_t i = 0; i < entry.packet_total(); ++i) {
      const wire::DataPacketHeader dph{entry.message_id(), self_, entry.packet_total(), i};
      Frame f;
      f.link_src = self_;
      f.src_addr = address_;
      f.link_dst = n.node_id;
      f.port = Port::kData;
      f.net_src = entry.message_id().source_node();
      f.net_dst = entry.destination();
      f.frame_class = FrameClass::kData;
      f.message_id = entry.message_id();
      f.header_bytes = static_cast<std::uint32_t>(wire::kDataHeaderBytes);
      f.bytes = wire::encode_data_packet(epi, dph, entry.packet(i));
      out.push_back(std::move(f));
    }
    n.tx.in_flight = entry.message_id();
    n.tx.in_flight_since = now;
    ++stats_.messages_sent;
  }

  std::vector<Frame> on_data_frame(Frame frame, TimeUs now) {
    ++stats_.data_packets_received;
    wire::DataPacketView view;
    try {
      view = wire::decode_data_packet(frame.bytes);
    } catch (const wire::DecodeError&) {
      ++stats_.malformed_packets;
      record_drop(now, frame.link_src, MessageId{}, DropCause::kMalformed, 1);
      return {};
    }
    const MessageId id = view.data.message_id;
    NeighborRecord& n = touch(view.data.last_hop, frame.src_addr, now);
    ReceptionBuffer& rx = n.rx;
    if (!rx.message_id || *rx.message_id != id) {
      drop_partial(n, now, DropCause::kPartialReplaced);
      rx.message_id = id;
      rx.packet_total = view.data.packet_total;
      rx.hop_budget = view.epidemic.hop_count;
      rx.destination = frame.net_dst;
    } else if (rx.packet_total != view.data.packet_total) {
      ++stats_.malformed_packets;
      record_drop(now, n.node_id, id, DropCause::kMalformed, 1);
      return {};
    }
    const std::uint32_t index = view.data.packet_index;
    if (!rx.packets.emplace(index, std::move(frame.bytes)).second) {
      ++stats_.duplicate_packets;
      return {};
    }
    if (rx.packets.size() < rx.packet_total) return {};
    return complete_message(n, now);
  }

  std::vector<Frame> complete_message(NeighborRecord& n, TimeUs now) {
    ReceptionBuffer& rx = n.rx;
    const MessageId id = *rx.message_id;
    stats_.packets_in_completed += rx.packets.size();

    std::uint32_t payload_size = 0;
    std::uint64_t total_size = 0;
    for (const auto& [index, bytes] : rx.packets) {
      const auto size = static_cast<std::uint32_t>(bytes.size() - wire::kDataHeaderBytes);
      if (index + 1 < rx.packet_total || rx.packet_total == 1) {
        payload_size = std::max(payload_size, size);
      }
      total_size += size;
    }
    std::shared_ptr<const buffer::MessageBody> body = reassemble(id, total_size, rx.packets);

    const std::uint32_t budget = rx.hop_budget;
    const NodeId destination = rx.destination;
    const NodeId sender = n.node_id;
    rx.reset();

    const std::uint32_t remaining = budget == 0 ? 0 : budget - 1;
    EventRecord done;
    done.time = now;
    done.kind = EventKind::kTransferComplete;
    done.node = self_;
    done.peer = sender;
    done.message_id = id;
    done.count = config_.hop_limit >= remaining ? config_.hop_limit - remaining : 0;
    emit(done);

    if (budget == 0 || payload_size == 0) {
      ++stats_.malformed_packets;
      record_drop(now, sender, id, DropCause::kMalformed, 1);
    } else if (buffer_.is_expired(id, now)) {
      record_drop(now, sender, id, DropCause::kTtlOnReceipt, 1);
    } else {
      if (destination == self_ && delivered_.insert(id).second) {
        EventRecord d = done;
        d.kind = EventKind::kDelivered;
        emit(d);
      }
      if (remaining == 0) {
        if (destination != self_) record_drop(now, sender, id, DropCause::kHopLimit, 1);
      } else {
        store(QueueEntry(id, destination, remaining, payload_size, std::move(body)), now);
      }
    }

    std::vector<Frame> out;
    out.push_back(make_control({wire::MessageType::kAck, self_},
                               wire::AckHeader{id, self_, wire::AckHeader::kSuccess}, sender,
                               FrameClass::kAck));
    return out;
  }

  /// Content of a completed reception. Generated traffic collapses back to
  /// the shared pattern body; anything else is copied out.
  static std::shared_ptr<const buffer::MessageBody> reassemble(
      MessageId id, std::uint64_t total_size,
      const std::map<std::uint32_t, std::vector<std::uint8_t>>& packets) {
    const auto pattern = buffer::MessageBody::pattern(id, total_size);
    std::vector<std::uint8_t> expected;
    std::uint64_t offset = 0;
    bool matches = true;
    for (const auto& [_, bytes] : packets) {
      const std::span<const std::uint8_t> payload(bytes.data() + wire::kDataHeaderBytes,
                                                  bytes.size() - wire::kDataHeaderBytes);
      expected.resize(payload.size());
      pattern->read(offset, expected);
      offset += payload.size();
      if (!std::equal(payload.begin(), payload.end(), expected.begin())) {
        matches = false;
        break;
      }
    }
    if (matches) return pattern;
    std::vector<std::uint8_t> content;
    content.reserve(total_size);
    for (const auto& [_, bytes] : packets) {
      content.insert(content.end(), bytes.begin() + wire::kDataHeaderBytes, bytes.end());
    }
    return buffer::MessageBody::bytes(std::move(content));
  }

  NodeId self_;
  Address address_;
  ProtocolConfig config_;
  MessageBuffer buffer_;
  std::mt19937_64 rng_;
  EventSink sink_;
  RouterStats stats_;
  std::map<NodeId, NeighborRecord> neighbors_;
  std::set<MessageId> delivered_;
  std::set<MessageId> originated_;
};

}  // namespace epidemic::protocol
