#pragma once

// Epidemic DTN packet headers and their big-endian wire encodings.
// Byte layouts are documented in docs/wire-format.md.

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace epidemic {

using NodeId = std::uint16_t;
using TimeUs = std::uint64_t;

namespace wire {

/// Raised by every decode routine. Never thrown by encoders.
class DecodeError : public std::runtime_error {
 public:
  enum class Kind { kLength, kFormat };

  DecodeError(Kind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

/// 64-bit message identity: 16-bit source node in the top bits, 48-bit
/// generation time in microseconds below it.
class MessageId {
 public:
  static constexpr std::uint64_t kTimestampBits = 48;
  static constexpr std::uint64_t kTimestampMask = (std::uint64_t{1} << kTimestampBits) - 1;

  constexpr MessageId() = default;
  constexpr explicit MessageId(std::uint64_t raw) : raw_(raw) {}

  /// Throws std::out_of_range if the timestamp does not fit in 48 bits or the
  /// node id does not fit in 16.
  static MessageId make(std::uint64_t source_node, std::uint64_t timestamp_us) {
    if (source_node > 0xFFFF) {
      throw std::out_of_range("message id: source node " + std::to_string(source_node) +
                              " exceeds 16 bits");
    }
    if (timestamp_us > kTimestampMask) {
      throw std::out_of_range("message id: timestamp " + std::to_string(timestamp_us) +
                              " exceeds 48 bits");
    }
    return MessageId((source_node << kTimestampBits) | timestamp_us);
  }

  constexpr std::uint64_t raw() const noexcept { return raw_; }
  constexpr NodeId source_node() const noexcept {
    return static_cast<NodeId>(raw_ >> kTimestampBits);
  }
  constexpr TimeUs timestamp_us() const noexcept { return raw_ & kTimestampMask; }

  friend constexpr auto operator<=>(const MessageId&, const MessageId&) = default;

 private:
  std::uint64_t raw_ = 0;
};

enum class MessageType : std::uint8_t {
  kBeacon = 1,
  kReply = 2,
  kReplyBack = 3,
  kAck = 4,
};

inline const char* to_string(MessageType t) {
  switch (t) {
    case MessageType::kBeacon: return "BEACON";
    case MessageType::kReply: return "REPLY";
    case MessageType::kReplyBack: return "REPLY_BACK";
    case MessageType::kAck: return "ACK";
  }
  return "UNKNOWN";
}

struct MessageTypeHeader {
  static constexpr std::size_t kSize = 3;
  MessageType msg_type = MessageType::kBeacon;
  NodeId node_id = 0;
  friend bool operator==(const MessageTypeHeader&, const MessageTypeHeader&) = default;
};

struct DataPacketHeader {
  static constexpr std::size_t kSize = 18;
  MessageId message_id;
  NodeId last_hop = 0;
  std::uint32_t packet_total = 1;
  std::uint32_t packet_index = 0;
  friend bool operator==(const DataPacketHeader&, const DataPacketHeader&) = default;
};

struct AckHeader {
  static constexpr std::size_t kSize = 12;
  static constexpr std::uint16_t kSuccess = 1;
  static constexpr std::uint16_t kFailure = 0;
  MessageId message_id;
  NodeId node_id = 0;
  std::uint16_t status = kSuccess;
  friend bool operator==(const AckHeader&, const AckHeader&) = default;
};

struct EpidemicHeader {
  static constexpr std::size_t kSize = 12;
  MessageId message_id;
  std::uint32_t hop_count = 0;
  friend bool operator==(const EpidemicHeader&, const EpidemicHeader&) = default;
};

struct SummaryVectorHeader {
  static constexpr std::size_t kFixedSize = 4;
  static constexpr std::size_t kMaxIds = 0xFFFF;
  bool more_fragments = false;
  std::vector<MessageId> ids;

  std::size_t encoded_size() const { return kFixedSize + 8 * ids.size(); }
  friend bool operator==(const SummaryVectorHeader&, const SummaryVectorHeader&) = default;
};

/// Bytes of DTN header carried ahead of every data payload.
inline constexpr std::size_t kDataHeaderBytes = EpidemicHeader::kSize + DataPacketHeader::kSize;

// ---------------------------------------------------------------------------
// Byte cursor helpers

class Writer {
 public:
  explicit Writer(std::vector<std::uint8_t>& out) : out_(out) {}

  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) { put(v, 2); }
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }

 private:
  void put(std::uint64_t v, int bytes) {
    for (int shift = (bytes - 1) * 8; shift >= 0; shift -= 8) {
      out_.push_back(static_cast<std::uint8_t>(v >> shift));
    }
  }
  std::vector<std::uint8_t>& out_;
};

class Reader {
 public:
  Reader(std::span<const std::uint8_t> in, const char* what) : in_(in), what_(what) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(get(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }

  std::size_t remaining() const noexcept { return in_.size() - pos_; }
  std::size_t position() const noexcept { return pos_; }
  std::span<const std::uint8_t> rest() const { return in_.subspan(pos_); }

 private:
  std::uint64_t get(std::size_t bytes) {
    if (remaining() < bytes) {
      throw DecodeError(DecodeError::Kind::kLength,
                        std::string(what_) + ": truncated at byte " + std::to_string(pos_));
    }
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < bytes; ++i) v = (v << 8) | in_[pos_ + i];
    pos_ += bytes;
    return v;
  }

  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
  const char* what_;
};

// ---------------------------------------------------------------------------
// Encoding. Each append_* writes onto an existing buffer so callers can
// stack headers without intermediate copies.

inline void append(std::vector<std::uint8_t>& out, const MessageTypeHeader& h) {
  Writer w(out);
  w.u8(static_cast<std::uint8_t>(h.msg_type));
  w.u16(h.node_id);
}

inline void append(std::vector<std::uint8_t>& out, const DataPacketHeader& h) {
  Writer w(out);
  w.u64(h.message_id.raw());
  w.u16(h.last_hop);
  w.u32(h.packet_total);
  w.u32(h.packet_index);
}

inline void append(std::vector<std::uint8_t>& out, const AckHeader& h) {
  Writer w(out);
  w.u64(h.message_id.raw());
  w.u16(h.node_id);
  w.u16(h.status);
}

inline void append(std::vector<std::uint8_t>& out, const EpidemicHeader& h) {
  Writer w(out);
  w.u64(h.message_id.raw());
  w.u32(h.hop_count);
}

inline void append(std::vector<std::uint8_t>& out, const SummaryVectorHeader& h) {
  if (h.ids.size() > SummaryVectorHeader::kMaxIds) {
    throw std::length_error("summary vector: more than 65535 ids in one fragment");
  }
  Writer w(out);
  w.u16(h.more_fragments ? 1 : 0);
  w.u16(static_cast<std::uint16_t>(h.ids.size()));
  for (MessageId id : h.ids) w.u64(id.raw());
}

template <typename Header>
std::vector<std::uint8_t> encode(const Header& h) {
  std::vector<std::uint8_t> out;
  append(out, h);
  return out;
}

// ---------------------------------------------------------------------------
// Decoding. read_* consume from a Reader; decode<H> requires the buffer to
// hold exactly one header.

inline MessageTypeHeader read_message_type(Reader& r) {
  MessageTypeHeader h;
  const std::uint8_t code = r.u8();
  if (code < 1 || code > 4) {
    throw DecodeError(DecodeError::Kind::kFormat,
                      "message type: unknown code " + std::to_string(code));
  }
  h.msg_type = static_cast<MessageType>(code);
  h.node_id = r.u16();
  return h;
}

inline DataPacketHeader read_data_packet(Reader& r) {
  DataPacketHeader h;
  h.message_id = MessageId(r.u64());
  h.last_hop = r.u16();
  h.packet_total = r.u32();
  h.packet_index = r.u32();
  if (h.packet_total == 0 || h.packet_index >= h.packet_total) {
    throw DecodeError(DecodeError::Kind::kFormat,
                      "data header: packet index " + std::to_string(h.packet_index) +
                          " outside total " + std::to_string(h.packet_total));
  }
  return h;
}

inline AckHeader read_ack(Reader& r) {
  AckHeader h;
  h.message_id = MessageId(r.u64());
  h.node_id = r.u16();
  h.status = r.u16();
  return h;
}

inline EpidemicHeader read_epidemic(Reader& r) {
  EpidemicHeader h;
  h.message_id = MessageId(r.u64());
  h.hop_count = r.u32();
  return h;
}

/// Consumes the rest of the reader; the declared id count must match it.
inline SummaryVectorHeader read_summary_vector(Reader& r) {
  SummaryVectorHeader h;
  const std::uint16_t frag = r.u16();
  if (frag > 1) {
    throw DecodeError(DecodeError::Kind::kFormat,
                      "summary vector: fragmentation block " + std::to_string(frag));
  }
  h.more_fragments = frag == 1;
  const std::uint16_t length = r.u16();
  if (r.remaining() != std::size_t{length} * 8) {
    throw DecodeError(DecodeError::Kind::kFormat,
                      "summary vector: declares " + std::to_string(length) + " ids but carries " +
                          std::to_string(r.remaining()) + " bytes");
  }
  h.ids.reserve(length);
  for (std::uint16_t i = 0; i < length; ++i) h.ids.emplace_back(r.u64());
  return h;
}

namespace detail {
inline void expect_consumed(const Reader& r, const char* what) {
  if (r.remaining() != 0) {
    throw DecodeError(DecodeError::Kind::kFormat,
                      std::string(what) + ": " + std::to_string(r.remaining()) + " trailing bytes");
  }
}
}  // namespace detail

template <typename Header>
Header decode(std::span<const std::uint8_t> bytes);

template <>
inline MessageTypeHeader decode<MessageTypeHeader>(std::span<const std::uint8_t> bytes) {
  Reader r(bytes, "message type");
  auto h = read_message_type(r);
  detail::expect_consumed(r, "message type");
  return h;
}

template <>
inline DataPacketHeader decode<DataPacketHeader>(std::span<const std::uint8_t> bytes) {
  Reader r(bytes, "data header");
  auto h = read_data_packet(r);
  detail::expect_consumed(r, "data header");
  return h;
}

template <>
inline AckHeader decode<AckHeader>(std::span<const std::uint8_t> bytes) {
  Reader r(bytes, "ack");
  auto h = read_ack(r);
  detail::expect_consumed(r, "ack");
  return h;
}

template <>
inline EpidemicHeader decode<EpidemicHeader>(std::span<const std::uint8_t> bytes) {
  Reader r(bytes, "epidemic header");
  auto h = read_epidemic(r);
  detail::expect_consumed(r, "epidemic header");
  return h;
}

template <>
inline SummaryVectorHeader decode<SummaryVectorHeader>(std::span<const std::uint8_t> bytes) {
  Reader r(bytes, "summary vector");
  return read_summary_vector(r);
}

enum class HeaderKind { kMessageType, kData, kAck, kEpidemic, kSummaryVector };

using AnyHeader = std::variant<MessageTypeHeader, DataPacketHeader, AckHeader, EpidemicHeader,
                               SummaryVectorHeader>;

inline AnyHeader decode_header(HeaderKind kind, std::span<const std::uint8_t> bytes) {
  switch (kind) {
    case HeaderKind::kMessageType: return decode<MessageTypeHeader>(bytes);
    case HeaderKind::kData: return decode<DataPacketHeader>(bytes);
    case HeaderKind::kAck: return decode<AckHeader>(bytes);
    case HeaderKind::kEpidemic: return decode<EpidemicHeader>(bytes);
    case HeaderKind::kSummaryVector: return decode<SummaryVectorHeader>(bytes);
  }
  throw std::invalid_argument("decode_header: unknown header kind");
}

inline std::vector<std::uint8_t> encode_header(const AnyHeader& h) {
  return std::visit([](const auto& v) { return encode(v); }, h);
}

// ---------------------------------------------------------------------------
// Whole packets as they appear on the convergence layer.

/// Control packet: MessageType header, then a body that depends on the type.
struct ControlPacket {
  MessageTypeHeader type;
  std::variant<std::monostate, SummaryVectorHeader, AckHeader> body;
  friend bool operator==(const ControlPacket&, const ControlPacket&) = default;
};

inline std::vector<std::uint8_t> encode(const ControlPacket& p) {
  std::vector<std::uint8_t> out;
  append(out, p.type);
  if (const auto* sv = std::get_if<SummaryVectorHeader>(&p.body)) append(out, *sv);
  if (const auto* ack = std::get_if<AckHeader>(&p.body)) append(out, *ack);
  return out;
}

inline ControlPacket decode_control(std::span<const std::uint8_t> bytes) {
  Reader r(bytes, "control packet");
  ControlPacket p;
  p.type = read_message_type(r);
  switch (p.type.msg_type) {
    case MessageType::kBeacon:
      detail::expect_consumed(r, "beacon");
      break;
    case MessageType::kReply:
    case MessageType::kReplyBack:
      p.body = read_summary_vector(r);
      break;
    case MessageType::kAck:
      p.body = read_ack(r);
      detail::expect_consumed(r, "ack");
      break;
  }
  return p;
}

/// Data packet: EpidemicHeader, DataPacketHeader, payload.
struct DataPacketView {
  EpidemicHeader epidemic;
  DataPacketHeader data;
  std::span<const std::uint8_t> payload;
};

inline std::vector<std::uint8_t> encode_data_packet(const EpidemicHeader& epi,
                                                    const DataPacketHeader& dph,
                                                    std::span<const std::uint8_t> payload) {
  std::vector<std::uint8_t> out;
  out.reserve(kDataHeaderBytes + payload.size());
  append(out, epi);
  append(out, dph);
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

/// The two message_id copies must agree; a mismatch is a format error.
inline DataPacketView decode_data_packet(std::span<const std::uint8_t> bytes) {
  Reader r(bytes, "data packet");
  DataPacketView v;
  v.epidemic = read_epidemic(r);
  v.data = read_data_packet(r);
  if (v.epidemic.message_id != v.data.message_id) {
    throw DecodeError(DecodeError::Kind::kFormat, "data packet: message id mismatch");
  }
  v.payload = r.rest();
  return v;
}

}  // namespace wire
}  // namespace epidemic
