#pragma once

// Trace atoms emitted by the router and the simulator. Metrics are a fold
// over this stream.

#include <cstdint>
#include <functional>
#include <ostream>
#include <vector>

#include "epidemic/wire.hpp"

namespace epidemic {

enum class EventKind : std::uint8_t {
  kGenerated,         // message created at its source
  kTransmitted,       // one frame left a device
  kTransferComplete,  // a neighbor finished receiving a whole message
  kDelivered,         // message reached its destination (every arrival)
  kDrop,
};

enum class FrameClass : std::uint8_t { kBeacon, kReply, kReplyBack, kAck, kData };

enum class DropCause : std::uint8_t {
  // message level
  kBufferEvicted,
  kBufferExpired,
  kBufferTooLarge,
  kDuplicate,
  kTtlOnReceipt,
  kHopLimit,
  kPartialReplaced,
  kPartialDisconnect,
  kMalformed,
  // packet level, inside the link model
  kLinkLoss,
  kOutOfRange,
  kQueueOverflow,
  kQueueResidency,
};

inline constexpr int kDropCauseCount = 13;

inline const char* to_string(DropCause c) {
  switch (c) {
    case DropCause::kBufferEvicted: return "buffer_evicted";
    case DropCause::kBufferExpired: return "buffer_expired";
    case DropCause::kBufferTooLarge: return "buffer_too_large";
    case DropCause::kDuplicate: return "duplicate";
    case DropCause::kTtlOnReceipt: return "ttl_on_receipt";
    case DropCause::kHopLimit: return "hop_limit";
    case DropCause::kPartialReplaced: return "partial_replaced";
    case DropCause::kPartialDisconnect: return "partial_disconnect";
    case DropCause::kMalformed: return "malformed";
    case DropCause::kLinkLoss: return "link_loss";
    case DropCause::kOutOfRange: return "out_of_range";
    case DropCause::kQueueOverflow: return "queue_overflow";
    case DropCause::kQueueResidency: return "queue_residency";
  }
  return "unknown";
}

inline const char* to_string(FrameClass c) {
  switch (c) {
    case FrameClass::kBeacon: return "beacon";
    case FrameClass::kReply: return "reply";
    case FrameClass::kReplyBack: return "reply_back";
    case FrameClass::kAck: return "ack";
    case FrameClass::kData: return "data";
  }
  return "unknown";
}

inline const char* to_string(EventKind k) {
  switch (k) {
    case EventKind::kGenerated: return "generated";
    case EventKind::kTransmitted: return "transmitted";
    case EventKind::kTransferComplete: return "transfer_complete";
    case EventKind::kDelivered: return "delivered";
    case EventKind::kDrop: return "drop";
  }
  return "unknown";
}

inline constexpr NodeId kNoNode = 0xFFFF;

/// One flat record shape for every event kind; unused fields stay zero.
///   generated:         node=source, peer=destination, count=packets, bytes=size
///   transmitted:       node=sender, peer=link destination or kNoNode, frame,
///                      bytes=on-air size, header_bytes=DTN header bytes
///   transfer_complete: node=receiver, peer=sender, count=hops traversed
///   delivered:         node=destination, peer=last hop, count=hops traversed
///   drop:              node, cause, count=packets affected, peer if known
struct EventRecord {
  TimeUs time = 0;
  EventKind kind = EventKind::kGenerated;
  NodeId node = 0;
  NodeId peer = kNoNode;
  wire::MessageId message_id;
  FrameClass frame = FrameClass::kData;
  DropCause cause = DropCause::kMalformed;
  std::uint32_t count = 0;
  std::uint64_t bytes = 0;
  std::uint32_t header_bytes = 0;

  friend bool operator==(const EventRecord&, const EventRecord&) = default;
};

inline std::ostream& operator<<(std::ostream& os, const EventRecord& e) {
  os << e.time << ',' << to_string(e.kind) << ',' << e.node << ',';
  if (e.peer != kNoNode) os << e.peer;
  os << ',' << e.message_id.raw() << ',';
  if (e.kind == EventKind::kTransmitted) os << to_string(e.frame);
  os << ',';
  if (e.kind == EventKind::kDrop) os << to_string(e.cause);
  os << ',' << e.count << ',' << e.bytes << ',' << e.header_bytes;
  return os;
}

using EventSink = std::function<void(const EventRecord&)>;

/// Sink that keeps everything; handy for tests and trace dumps.
struct EventLog {
  std::vector<EventRecord> events;
  EventSink sink() {
    return [this](const EventRecord& e) { events.push_back(e); };
  }
};

}  // namespace epidemic
