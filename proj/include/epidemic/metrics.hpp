#pragma once

// Run metrics folded from the event stream, and their CSV form.

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "epidemic/events.hpp"

namespace epidemic::metrics {

using wire::MessageId;

struct RunReport {
  std::uint64_t generated = 0;
  std::uint64_t delivered = 0;
  std::uint64_t transfers = 0;
  std::optional<double> mdr;
  std::optional<double> avg_latency_s;
  std::optional<double> avg_hop_count;
  std::optional<double> replication_overhead;
  std::optional<double> control_byte_fraction;
  std::optional<double> header_byte_fraction;
  std::uint64_t bytes_transmitted = 0;
  std::uint64_t control_bytes = 0;
  std::uint64_t header_bytes = 0;
  std::array<std::uint64_t, kDropCauseCount> drops{};

  std::uint64_t drop_count(DropCause c) const { return drops[static_cast<std::size_t>(c)]; }
  friend bool operator==(const RunReport&, const RunReport&) = default;
};

/// Online fold; feed it events in stream order.
class Accumulator {
 public:
  void consume(const EventRecord& e) {
    switch (e.kind) {
      case EventKind::kGenerated:
        generated_.insert(e.message_id);
        break;
      case EventKind::kTransmitted:
        bytes_ += e.bytes;
        if (e.frame != FrameClass::kData) control_ += e.bytes;
        header_ += e.header_bytes;
        break;
      case EventKind::kTransferComplete:
        ++transfers_;
        break;
      case EventKind::kDelivered:
        if (first_delivery_.emplace(e.message_id, e).second) {
          latency_sum_ += static_cast<double>(e.time - e.message_id.timestamp_us()) / 1e6;
          hop_sum_ += e.count;
        }
        break;
      case EventKind::kDrop:
        ++drops_[static_cast<std::size_t>(e.cause)];
        break;
    }
  }

  EventSink sink() {
    return [this](const EventRecord& e) { consume(e); };
  }

  RunReport report() const {
    RunReport r;
    r.generated = generated_.size();
    r.delivered = first_delivery_.size();
    r.transfers = transfers_;
    r.bytes_transmitted = bytes_;
    r.control_bytes = control_;
    r.header_bytes = header_;
    r.drops = drops_;
    if (r.generated > 0) r.mdr = static_cast<double>(r.delivered) / static_cast<double>(r.generated);
    if (r.delivered > 0) {
      const auto d = static_cast<double>(r.delivered);
      r.avg_latency_s = latency_sum_ / d;
      r.avg_hop_count = static_cast<double>(hop_sum_) / d;
      r.replication_overhead = (static_cast<double>(transfers_) - d) / d;
    }
    if (bytes_ > 0) {
      r.control_byte_fraction = static_cast<double>(control_) / static_cast<double>(bytes_);
      r.header_byte_fraction = static_cast<double>(header_) / static_cast<double>(bytes_);
    }
    return r;
  }

  const std::map<MessageId, EventRecord>& first_deliveries() const noexcept {
    return first_delivery_;
  }

 private:
  std::set<MessageId> generated_;
  std::map<MessageId, EventRecord> first_delivery_;
  std::uint64_t transfers_ = 0;
  std::uint64_t bytes_ = 0;
  std::uint64_t control_ = 0;
  std::uint64_t header_ = 0;
  double latency_sum_ = 0;
  std::uint64_t hop_sum_ = 0;
  std::array<std::uint64_t, kDropCauseCount> drops_{};
};

inline RunReport compute(std::span<const EventRecord> events) {
  Accumulator acc;
  for (const auto& e : events) acc.consume(e);
  return acc.report();
}

// ---------------------------------------------------------------------------
// CSV

inline std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

inline std::string format_optional(const std::optional<double>& v) {
  return v ? format_number(*v) : std::string{};
}

/// Ratio metrics, in column order.
inline const std::vector<std::string>& ratio_metric_names() {
  static const std::vector<std::string> names{
      "mdr",           "avg_latency_s",         "avg_hop_count",
      "replication_overhead", "control_byte_fraction", "header_byte_fraction"};
  return names;
}

inline std::vector<std::optional<double>> ratio_metrics(const RunReport& r) {
  return {r.mdr, r.avg_latency_s, r.avg_hop_count, r.replication_overhead,
          r.control_byte_fraction, r.header_byte_fraction};
}

inline std::vector<std::string> run_columns() {
  std::vector<std::string> cols{"generated", "delivered", "transfers"};
  for (const auto& n : ratio_metric_names()) cols.push_back(n);
  for (const char* c : {"bytes_transmitted", "control_bytes", "header_bytes"}) cols.emplace_back(c);
  for (int i = 0; i < kDropCauseCount; ++i) {
    cols.push_back(std::string("drop_") + to_string(static_cast<DropCause>(i)));
  }
  return cols;
}

inline std::vector<std::string> run_values(const RunReport& r) {
  std::vector<std::string> v{std::to_string(r.generated), std::to_string(r.delivered),
                             std::to_string(r.transfers)};
  for (const auto& m : ratio_metrics(r)) v.push_back(format_optional(m));
  v.push_back(std::to_string(r.bytes_transmitted));
  v.push_back(std::to_string(r.control_bytes));
  v.push_back(std::to_string(r.header_bytes));
  for (auto d : r.drops) v.push_back(std::to_string(d));
  return v;
}

struct Summary {
  std::size_t n = 0;
  std::optional<double> mean;
  std::optional<double> ci95;  // half-width; needs two samples
};

/// Mean and Student-t 95% half-width over the defined samples.
inline Summary summarize(const std::vector<std::optional<double>>& samples) {
  Summary s;
  double sum = 0;
  for (const auto& x : samples) {
    if (!x) continue;
    ++s.n;
    sum += *x;
  }
  if (s.n == 0) return s;
  const double mean = sum / static_cast<double>(s.n);
  s.mean = mean;
  if (s.n < 2) return s;
  double ss = 0;
  for (const auto& x : samples) {
    if (x) ss += (*x - mean) * (*x - mean);
  }
  const double sd = std::sqrt(ss / static_cast<double>(s.n - 1));
  boost::math::students_t dist(static_cast<double>(s.n - 1));
  s.ci95 = boost::math::quantile(dist, 0.975) * sd / std::sqrt(static_cast<double>(s.n));
  return s;
}

inline std::vector<std::string> aggregate_columns() {
  std::vector<std::string> cols{"runs"};
  for (const auto& n : ratio_metric_names()) {
    cols.push_back(n + "_mean");
    cols.push_back(n + "_ci95");
  }
  return cols;
}

inline std::vector<std::string> aggregate_values(const std::vector<RunReport>& runs) {
  std::vector<std::string> v{std::to_string(runs.size())};
  for (std::size_t m = 0; m < ratio_metric_names().size(); ++m) {
    std::vector<std::optional<double>> samples;
    for (const auto& r : runs) samples.push_back(ratio_metrics(r)[m]);
    const Summary s = summarize(samples);
    v.push_back(format_optional(s.mean));
    v.push_back(format_optional(s.ci95));
  }
  return v;
}

inline void write_row(std::ostream& os, const std::vector<std::string>& cells) {
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) os << ',';
    os << cells[i];
  }
  os << '\n';
}

}  // namespace epidemic::metrics
