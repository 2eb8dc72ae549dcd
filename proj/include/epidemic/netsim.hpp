#pragma once

// Deterministic discrete-event network: trace-driven positions, unit-disk
// links, one FIFO device queue per node.

#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <queue>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "epidemic/buffer.hpp"
#include "epidemic/events.hpp"
#include "epidemic/mobility.hpp"
#include "epidemic/protocol.hpp"

namespace epidemic::netsim {

using protocol::Frame;
using protocol::Router;

enum class EventType : std::uint8_t { kTimer, kPacketDelivery, kTrafficGeneration };

/// Min-heap of callbacks ordered by (time, insertion sequence).
class Scheduler {
 public:
  TimeUs now() const noexcept { return now_; }
  std::size_t pending() const noexcept { return heap_.size(); }
  std::uint64_t executed() const noexcept { return executed_; }

  void schedule(TimeUs at, EventType type, std::function<void()> fn) {
    if (at < now_) {
      throw std::logic_error("scheduler: event at " + std::to_string(at) + " before now " +
                             std::to_string(now_));
    }
    heap_.push(Item{at, next_seq_++, type, std::move(fn)});
  }

  /// Runs every event with time <= end, leaving the clock at `end`.
  void run_until(TimeUs end) {
    while (!heap_.empty() && heap_.top().time <= end) {
      // Moving out of top() leaves time and seq intact, which is all pop()
      // compares.
      Item item = std::move(const_cast<Item&>(heap_.top()));
      heap_.pop();
      now_ = item.time;
      ++executed_;
      item.fn();
    }
    if (end > now_) now_ = end;
  }

 private:
  struct Item {
    TimeUs time;
    std::uint64_t seq;
    EventType type;
    std::function<void()> fn;
  };
  struct Later {
    bool operator()(const Item& a, const Item& b) const noexcept {
      return a.time != b.time ? a.time > b.time : a.seq > b.seq;
    }
  };

  std::priority_queue<Item, std::vector<Item>, Later> heap_;
  std::uint64_t next_seq_ = 0;
  std::uint64_t executed_ = 0;
  TimeUs now_ = 0;
};

struct LinkModel {
  std::uint64_t data_rate_bps = 12'000'000;
  double radio_range = 100;  // meters
  double loss_probability = 0;
  TimeUs propagation_delay = 1;
  /// Convergence-layer bytes (IPv4 + UDP) added to every frame on air.
  std::uint32_t frame_overhead = 28;

  void validate() const {
    if (data_rate_bps == 0) throw std::invalid_argument("data_rate must be positive");
    if (!(radio_range > 0)) throw std::invalid_argument("radio_range must be positive");
    if (!(loss_probability >= 0 && loss_probability < 1)) {
      throw std::invalid_argument("loss_probability must lie in [0, 1)");
    }
  }

  /// Microseconds to clock `bytes` onto the medium, rounded up.
  TimeUs service_time(std::uint64_t bytes) const noexcept {
    const std::uint64_t bits_us = bytes * 8 * 1'000'000;
    return (bits_us + data_rate_bps - 1) / data_rate_bps;
  }
};

inline bool in_range(const mobility::Trajectory& a, const mobility::Trajectory& b, TimeUs t,
                     double range) {
  return mobility::distance(a.position(t), b.position(t)) <= range;
}

/// FIFO with a byte capacity and a residency limit. Arrivals that do not fit
/// are tail-dropped.
class DeviceQueue {
 public:
  struct Entry {
    Frame frame;
    TimeUs enqueued_at;
    std::uint64_t size;
  };

  DeviceQueue(std::uint64_t capacity_bytes, TimeUs residency_limit)
      : capacity_(capacity_bytes), residency_(residency_limit) {}

  std::uint64_t capacity_bytes() const noexcept { return capacity_; }
  TimeUs residency_limit() const noexcept { return residency_; }
  std::uint64_t stored_bytes() const noexcept { return stored_; }
  std::size_t size() const noexcept { return fifo_.size(); }
  bool empty() const noexcept { return fifo_.empty(); }
  const std::deque<Entry>& entries() const noexcept { return fifo_; }

  bool push(Frame frame, std::uint64_t size, TimeUs now) {
    if (stored_ + size > capacity_) return false;
    stored_ += size;
    fifo_.push_back({std::move(frame), now, size});
    return true;
  }

  /// Next frame eligible for service; frames past the residency limit are
  /// handed to `on_expired` and skipped.
  template <typename OnExpired>
  std::optional<Entry> pop(TimeUs now, OnExpired&& on_expired) {
    while (!fifo_.empty()) {
      Entry e = std::move(fifo_.front());
      fifo_.pop_front();
      stored_ -= e.size;
      if (now - e.enqueued_at > residency_) {
        on_expired(e);
        continue;
      }
      return e;
    }
    return std::nullopt;
  }

 private:
  std::uint64_t capacity_;
  TimeUs residency_;
  std::uint64_t stored_ = 0;
  std::deque<Entry> fifo_;
};

struct QueueConfig {
  std::optional<std::uint64_t> capacity_bytes;  // default: protocol buffer capacity
  std::optional<TimeUs> residency_limit;        // default: two beacon intervals
};

/// Fate of every unicast frame, per (sender, receiver) pair.
struct LinkCounters {
  std::uint64_t enqueued = 0;
  std::uint64_t delivered = 0;
  std::uint64_t lost = 0;
  std::uint64_t out_of_range = 0;
  std::uint64_t overflow = 0;
  std::uint64_t residency = 0;
  std::uint64_t in_queue = 0;    // filled by audit()
  std::uint64_t in_service = 0;  // filled by audit()
  std::uint64_t in_transit = 0;

  bool balanced() const noexcept {
    return enqueued ==
           delivered + lost + out_of_range + overflow + residency + in_queue + in_service + in_transit;
  }
};

inline protocol::Address node_address(NodeId id) {
  return (protocol::Address{10} << 24) | (static_cast<protocol::Address>(id) + 1);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(index)};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (std::uint64_t{words[0]} << 32) | words[1];
}

class Simulator {
 public:
  Simulator(std::vector<mobility::Trajectory> trajectories, protocol::ProtocolConfig config,
            LinkModel link, QueueConfig queue, std::uint64_t seed, EventSink sink = {})
      : trajectories_(std::move(trajectories)),
        link_(link),
        loss_rng_(derive_seed(seed, 2, 0)),
        sink_(std::move(sink)) {
    config.validate();
    link_.validate();
    if (trajectories_.empty()) throw std::invalid_argument("simulator: no nodes");
    if (trajectories_.size() >= kNoNode) throw std::invalid_argument("simulator: too many nodes");
    const std::uint64_t qcap = queue.capacity_bytes.value_or(config.buffer_capacity);
    const TimeUs residency = queue.residency_limit.value_or(config.connection_timeout());
    if (qcap == 0) throw std::invalid_argument("queue_capacity must be positive");
    for (std::size_t i = 0; i < trajectories_.size(); ++i) {
      const auto id = static_cast<NodeId>(i);
      nodes_.push_back(std::make_unique<Node>(Node{
          Router(id, node_address(id), config, derive_seed(seed, 1, i), sink_),
          DeviceQueue(qcap, residency), std::nullopt}));
    }
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      const auto id = static_cast<NodeId>(i);
      scheduler_.schedule(nodes_[i]->router.next_beacon_delay(), EventType::kTimer,
                          [this, id] { beacon(id); });
    }
  }

  std::size_t node_count() const noexcept { return nodes_.size(); }
  Router& router(NodeId id) { return nodes_.at(id)->router; }
  const Router& router(NodeId id) const { return nodes_.at(id)->router; }
  const DeviceQueue& device(NodeId id) const { return nodes_.at(id)->queue; }
  const LinkModel& link() const noexcept { return link_; }
  const Scheduler& scheduler() const noexcept { return scheduler_; }
  TimeUs now() const noexcept { return scheduler_.now(); }
  const mobility::Trajectory& trajectory(NodeId id) const { return trajectories_.at(id); }

  /// Places `entry` in its source's buffer at `at`.
  void schedule_message(TimeUs at, buffer::QueueEntry entry) {
    const NodeId src = entry.message_id().source_node();
    if (src >= nodes_.size()) throw std::invalid_argument("message source outside scenario");
    if (entry.destination() >= nodes_.size()) {
      throw std::invalid_argument("message destination outside scenario");
    }
    auto shared = std::make_shared<buffer::QueueEntry>(std::move(entry));
    scheduler_.schedule(at, EventType::kTrafficGeneration, [this, src, shared] {
      router(src).originate(std::move(*shared), now());
    });
  }

  /// Raw application packet at `src`, wrapped by its router at `at`.
  void schedule_raw_packet(TimeUs at, NodeId src, NodeId dst, std::vector<std::uint8_t> payload) {
    auto shared = std::make_shared<std::vector<std::uint8_t>>(std::move(payload));
    scheduler_.schedule(at, EventType::kTrafficGeneration, [this, src, dst, shared] {
      router(src).wrap_raw_packet(dst, std::move(*shared), now());
    });
  }

  void run(TimeUs end) {
    scheduler_.run_until(end);
    for (auto& n : nodes_) n->router.check_invariants(now());
  }

  /// Sees every frame as it leaves a device, before the range check.
  void set_frame_observer(std::function<void(const Frame&, TimeUs)> fn) {
    frame_observer_ = std::move(fn);
  }

  bool in_range(NodeId a, NodeId b, TimeUs t) const {
    return netsim::in_range(trajectories_.at(a), trajectories_.at(b), t, link_.radio_range);
  }

  /// Unicast accounting; in-queue and in-service counts reflect the current
  /// clock.
  std::map<std::pair<NodeId, NodeId>, LinkCounters> audit() const {
    auto out = links_;
    for (const auto& n : nodes_) {
      for (const auto& e : n->queue.entries()) {
        if (e.frame.link_dst) ++out[{e.frame.link_src, *e.frame.link_dst}].in_queue;
      }
      if (n->in_service && n->in_service->frame.link_dst) {
        ++out[{n->in_service->frame.link_src, *n->in_service->frame.link_dst}].in_service;
      }
    }
    return out;
  }

 private:
  struct Node {
    Router router;
    DeviceQueue queue;
    std::optional<DeviceQueue::Entry> in_service;
  };

  void emit(const EventRecord& e) {
    if (sink_) sink_(e);
  }

  void link_drop(const Frame& f, DropCause cause) {
    EventRecord e;
    e.time = now();
    e.kind = EventKind::kDrop;
    e.node = f.link_src;
    e.peer = f.link_dst.value_or(kNoNode);
    e.message_id = f.message_id;
    e.cause = cause;
    e.count = 1;
    emit(e);
  }

  LinkCounters* counters(const Frame& f) {
    if (!f.link_dst) return nullptr;
    return &links_[{f.link_src, *f.link_dst}];
  }

  void beacon(NodeId id) {
    Router& r = router(id);
    send(id, r.on_beacon_timer(now()));
    r.check_invariants(now());
    scheduler_.schedule(now() + r.next_beacon_delay(), EventType::kTimer,
                        [this, id] { beacon(id); });
  }

  void send(NodeId id, std::vector<Frame> frames) {
    Node& n = *nodes_[id];
    for (Frame& f : frames) {
      const std::uint64_t size = f.bytes.size() + link_.frame_overhead;
      LinkCounters* c = counters(f);
      if (c) ++c->enqueued;
      const bool overflow = n.queue.stored_bytes() + size > n.queue.capacity_bytes();
      if (overflow) {
        if (c) ++c->overflow;
        link_drop(f, DropCause::kQueueOverflow);
        continue;
      }
      n.queue.push(std::move(f), size, now());
    }
    start_service(id);
  }

  void start_service(NodeId id) {
    Node& n = *nodes_[id];
    if (n.in_service) return;
    n.in_service = n.queue.pop(now(), [this](const DeviceQueue::Entry& e) {
      if (LinkCounters* c = counters(e.frame)) ++c->residency;
      link_drop(e.frame, DropCause::kQueueResidency);
    });
    if (!n.in_service) return;
    scheduler_.schedule(now() + link_.service_time(n.in_service->size), EventType::kTimer,
                        [this, id] { finish_service(id); });
  }

  void finish_service(NodeId id) {
    Node& n = *nodes_[id];
    DeviceQueue::Entry entry = std::move(*n.in_service);
    n.in_service.reset();
    const TimeUs t = now();
    n.router.on_transmitted(entry.frame, t);
    if (frame_observer_) frame_observer_(entry.frame, t);

    EventRecord tx;
    tx.time = t;
    tx.kind = EventKind::kTransmitted;
    tx.node = id;
    tx.peer = entry.frame.link_dst.value_or(kNoNode);
    tx.message_id = entry.frame.message_id;
    tx.frame = entry.frame.frame_class;
    tx.bytes = entry.size;
    tx.header_bytes = entry.frame.header_bytes;
    emit(tx);

    if (entry.frame.link_dst) {
      const NodeId to = *entry.frame.link_dst;
      LinkCounters* c = counters(entry.frame);
      if (to >= nodes_.size() || !in_range(id, to, t)) {
        ++c->out_of_range;
        link_drop(entry.frame, DropCause::kOutOfRange);
      } else if (lost()) {
        ++c->lost;
        link_drop(entry.frame, DropCause::kLinkLoss);
      } else {
        deliver(to, std::move(entry.frame), true);
      }
    } else {
      for (std::size_t j = 0; j < nodes_.size(); ++j) {
        const auto to = static_cast<NodeId>(j);
        if (to == id || !in_range(id, to, t) || lost()) continue;
        deliver(to, entry.frame, false);
      }
    }
    start_service(id);
  }

  bool lost() {
    if (link_.loss_probability <= 0) return false;
    return std::uniform_real_distribution<double>(0, 1)(loss_rng_) < link_.loss_probability;
  }

  void deliver(NodeId to, Frame frame, bool unicast) {
    if (unicast) ++counters(frame)->in_transit;
    auto shared = std::make_shared<Frame>(std::move(frame));
    scheduler_.schedule(now() + link_.propagation_delay, EventType::kPacketDelivery,
                        [this, to, shared, unicast] {
                          if (unicast) {
                            LinkCounters* c = counters(*shared);
                            --c->in_transit;
                            ++c->delivered;
                          }
                          send(to, router(to).receive(std::move(*shared), now()));
                        });
  }

  std::vector<mobility::Trajectory> trajectories_;
  LinkModel link_;
  std::mt19937_64 loss_rng_;
  EventSink sink_;
  std::function<void(const Frame&, TimeUs)> frame_observer_;
  Scheduler scheduler_;
  std::vector<std::unique_ptr<Node>> nodes_;
  std::map<std::pair<NodeId, NodeId>, LinkCounters> links_;
};

}  // namespace epidemic::netsim
