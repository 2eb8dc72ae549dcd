#pragma once

// Scenario files (`key = value` lines) and single (scenario, seed) runs.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "epidemic/events.hpp"
#include "epidemic/metrics.hpp"
#include "epidemic/mobility.hpp"
#include "epidemic/netsim.hpp"
#include "epidemic/protocol.hpp"
#include "epidemic/traffic.hpp"

namespace epidemic::scenario {

class ScenarioError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Scenario {
  std::filesystem::path trace_path;
  std::vector<mobility::Trajectory> trajectories;
  protocol::ProtocolConfig protocol;
  netsim::LinkModel link;
  netsim::QueueConfig queue;
  traffic::TrafficConfig traffic;
  TimeUs duration = 0;
  std::vector<std::uint64_t> seeds{1};
};

/// One `key = value` assignment and where it came from.
struct Setting {
  std::string key;
  std::string value;
  std::string origin;  // "file:line" or "--set"
};

namespace detail {

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

inline double parse_double(const std::string& v) {
  std::size_t used = 0;
  double out = 0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    throw std::invalid_argument("not a number: '" + v + "'");
  }
  if (used != v.size() || !std::isfinite(out)) throw std::invalid_argument("not a number: '" + v + "'");
  return out;
}

inline std::uint64_t parse_uint(const std::string& v) {
  std::uint64_t out = 0;
  const auto* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc{} || ptr != end) {
    throw std::invalid_argument("not a non-negative integer: '" + v + "'");
  }
  return out;
}

/// Splits "12.5Mbps" into (12.5, "mbps").
inline std::pair<double, std::string> split_unit(const std::string& v) {
  std::size_t pos = 0;
  while (pos < v.size() && (std::isdigit(static_cast<unsigned char>(v[pos])) || v[pos] == '.' ||
                            v[pos] == '+' || v[pos] == '-' || v[pos] == 'e' || v[pos] == 'E')) {
    // 'e' only counts as an exponent when followed by a digit or sign
    if ((v[pos] == 'e' || v[pos] == 'E') &&
        (pos + 1 >= v.size() ||
         !(std::isdigit(static_cast<unsigned char>(v[pos + 1])) || v[pos + 1] == '-' ||
           v[pos + 1] == '+'))) {
      break;
    }
    ++pos;
  }
  return {parse_double(v.substr(0, pos)), lower(trim(v.substr(pos)))};
}

inline std::uint64_t to_integral(double x, const std::string& v) {
  if (x < 0 || x > 1.8e19) throw std::invalid_argument("out of range: '" + v + "'");
  const double r = std::round(x);
  if (std::abs(r - x) > 1e-6) throw std::invalid_argument("not a whole number: '" + v + "'");
  return static_cast<std::uint64_t>(r);
}

/// Bytes with an optional decimal (kB, MB, GB) or binary (KiB, MiB, GiB)
/// suffix.
inline std::uint64_t parse_bytes(const std::string& v) {
  const auto [x, unit] = split_unit(v);
  static const std::map<std::string, double> scale{
      {"", 1},          {"b", 1},           {"kb", 1e3},       {"mb", 1e6},
      {"gb", 1e9},      {"kib", 1024.0},    {"mib", 1048576.0}, {"gib", 1073741824.0}};
  auto it = scale.find(unit);
  if (it == scale.end()) throw std::invalid_argument("unknown byte unit in '" + v + "'");
  return to_integral(x * it->second, v);
}

inline std::uint64_t parse_rate(const std::string& v) {
  const auto [x, unit] = split_unit(v);
  static const std::map<std::string, double> scale{
      {"", 1}, {"bps", 1}, {"kbps", 1e3}, {"mbps", 1e6}, {"gbps", 1e9}};
  auto it = scale.find(unit);
  if (it == scale.end()) throw std::invalid_argument("unknown rate unit in '" + v + "'");
  return to_integral(x * it->second, v);
}

/// Seconds, optionally suffixed s / ms / us.
inline TimeUs parse_seconds(const std::string& v) {
  const auto [x, unit] = split_unit(v);
  double us = 0;
  if (unit.empty() || unit == "s") {
    us = x * 1e6;
  } else if (unit == "ms") {
    us = x * 1e3;
  } else if (unit == "us") {
    us = x;
  } else {
    throw std::invalid_argument("unknown time unit in '" + v + "'");
  }
  if (us < 0) throw std::invalid_argument("negative time: '" + v + "'");
  return static_cast<TimeUs>(std::llround(us));
}

inline std::vector<std::uint64_t> parse_seeds(const std::string& v) {
  std::vector<std::uint64_t> out;
  const auto dots = v.find("..");
  if (dots != std::string::npos) {
    const auto lo = parse_uint(trim(v.substr(0, dots)));
    const auto hi = parse_uint(trim(v.substr(dots + 2)));
    if (hi < lo) throw std::invalid_argument("empty seed range '" + v + "'");
    for (auto s = lo; s <= hi; ++s) out.push_back(s);
    return out;
  }
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_uint(trim(item)));
  if (out.empty()) throw std::invalid_argument("no seeds given");
  return out;
}

}  // namespace detail

/// Every key a scenario file may set.
inline const std::vector<std::string>& known_keys() {
  static const std::vector<std::string> keys{
      "trace",
      "duration",
      "seeds",
      "beacon_interval",
      "beacon_randomness",
      "buffer_capacity",
      "message_ttl",
      "hop_limit",
      "max_control_payload",
      "data_rate",
      "radio_range",
      "loss_probability",
      "propagation_delay",
      "frame_overhead",
      "queue_capacity",
      "queue_residency",
      "traffic_messages",
      "traffic_rate",
      "traffic_message_size",
      "traffic_packet_payload",
      "traffic_window_start",
      "traffic_window_end",
      "message",
  };
  return keys;
}

inline bool is_known_key(const std::string& key) {
  const auto& k = known_keys();
  return std::find(k.begin(), k.end(), key) != k.end();
}

inline std::vector<Setting> read_settings(const std::string& text, const std::string& name) {
  std::vector<Setting> out;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const std::string origin = name + ":" + std::to_string(line_no);
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ScenarioError(origin + ": expected 'key = value'");
    Setting s{detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)), origin};
    if (!is_known_key(s.key)) throw ScenarioError(origin + ": unknown key '" + s.key + "'");
    if (s.value.empty()) throw ScenarioError(origin + ": empty value for '" + s.key + "'");
    out.push_back(std::move(s));
  }
  return out;
}

/// `--set key=value`.
inline Setting parse_override(const std::string& arg) {
  const auto eq = arg.find('=');
  if (eq == std::string::npos) throw ScenarioError("--set expects key=value, got '" + arg + "'");
  Setting s{detail::trim(arg.substr(0, eq)), detail::trim(arg.substr(eq + 1)), "--set"};
  if (!is_known_key(s.key)) throw ScenarioError("--set: unknown key '" + s.key + "'");
  return s;
}

/// Applies settings in order (later wins, `message` accumulates), loads the
/// trace relative to `base_dir`, and validates the result.
inline Scenario build_scenario(const std::vector<Setting>& settings,
                               const std::filesystem::path& base_dir) {
  Scenario sc;
  std::optional<std::string> trace;
  std::optional<TimeUs> window_end;
  struct Scripted {
    std::string value;
    std::string origin;
  };
  std::vector<Scripted> scripted;

  for (const Setting& s : settings) {
    using namespace detail;
    const std::string& v = s.value;
    try {
      if (s.key == "trace") {
        trace = v;
      } else if (s.key == "duration") {
        sc.duration = parse_seconds(v);
      } else if (s.key == "seeds") {
        sc.seeds = parse_seeds(v);
      } else if (s.key == "beacon_interval") {
        sc.protocol.beacon_interval = parse_seconds(v);
      } else if (s.key == "beacon_randomness") {
        sc.protocol.beacon_randomness = parse_seconds(v);
      } else if (s.key == "buffer_capacity") {
        sc.protocol.buffer_capacity = parse_bytes(v);
      } else if (s.key == "message_ttl") {
        sc.protocol.message_ttl = parse_seconds(v);
      } else if (s.key == "hop_limit") {
        const auto h = parse_uint(v);
        if (h > 0xFFFFFFFFULL) throw std::invalid_argument("hop_limit exceeds 32 bits");
        sc.protocol.hop_limit = static_cast<std::uint32_t>(h);
      } else if (s.key == "max_control_payload") {
        sc.protocol.max_control_payload = lower(v) == "inf"
                                              ? std::numeric_limits<std::uint64_t>::max()
                                              : parse_bytes(v);
      } else if (s.key == "data_rate") {
        sc.link.data_rate_bps = parse_rate(v);
      } else if (s.key == "radio_range") {
        sc.link.radio_range = parse_double(v);
      } else if (s.key == "loss_probability") {
        sc.link.loss_probability = parse_double(v);
      } else if (s.key == "propagation_delay") {
        sc.link.propagation_delay = parse_seconds(v);
      } else if (s.key == "frame_overhead") {
        const auto b = parse_bytes(v);
        if (b > 0xFFFF) throw std::invalid_argument("frame_overhead too large");
        sc.link.frame_overhead = static_cast<std::uint32_t>(b);
      } else if (s.key == "queue_capacity") {
        sc.queue.capacity_bytes = parse_bytes(v);
      } else if (s.key == "queue_residency") {
        sc.queue.residency_limit = parse_seconds(v);
      } else if (s.key == "traffic_messages") {
        sc.traffic.messages = parse_uint(v);
      } else if (s.key == "traffic_rate") {
        sc.traffic.rate = parse_double(v);
        if (sc.traffic.rate < 0) throw std::invalid_argument("negative rate");
      } else if (s.key == "traffic_message_size") {
        sc.traffic.message_size = parse_bytes(v);
      } else if (s.key == "traffic_packet_payload") {
        const auto b = parse_bytes(v);
        if (b == 0 || b > 0xFFFF) throw std::invalid_argument("packet payload out of range");
        sc.traffic.packet_payload = static_cast<std::uint32_t>(b);
      } else if (s.key == "traffic_window_start") {
        sc.traffic.window_start = parse_seconds(v);
      } else if (s.key == "traffic_window_end") {
        window_end = parse_seconds(v);
      } else if (s.key == "message") {
        scripted.push_back({v, s.origin});
      } else {
        throw ScenarioError(s.origin + ": unknown key '" + s.key + "'");
      }
    } catch (const std::invalid_argument& e) {
      throw ScenarioError(s.origin + ": " + s.key + ": " + e.what());
    }
  }

  if (sc.duration == 0) throw ScenarioError("scenario: duration must be positive");
  sc.traffic.window_end = window_end.value_or(sc.duration);
  if (sc.traffic.window_end > sc.duration) {
    throw ScenarioError("scenario: traffic window ends after duration");
  }
  if (sc.traffic.message_size == 0) throw ScenarioError("scenario: traffic_message_size is zero");

  for (const auto& m : scripted) {
    // message = <source> <destination> <size> <creation time>
    std::istringstream in(m.value);
    std::string src, dst, size, at, extra;
    if (!(in >> src >> dst >> size >> at) || (in >> extra)) {
      throw ScenarioError(m.origin + ": message expects '<src> <dst> <size> <time>'");
    }
    try {
      traffic::MessageSpec spec;
      const auto s = detail::parse_uint(src);
      const auto d = detail::parse_uint(dst);
      if (s >= kNoNode || d >= kNoNode) throw std::invalid_argument("node id out of range");
      spec.source = static_cast<NodeId>(s);
      spec.destination = static_cast<NodeId>(d);
      spec.size_bytes = detail::parse_bytes(size);
      spec.packet_payload = sc.traffic.packet_payload;
      spec.creation_time = detail::parse_seconds(at);
      if (spec.creation_time >= sc.duration) {
        throw std::invalid_argument("creation time outside the simulation");
      }
      spec.validate();
      sc.traffic.scripted.push_back(spec);
    } catch (const std::exception& e) {
      throw ScenarioError(m.origin + ": message: " + e.what());
    }
  }

  try {
    sc.protocol.validate();
    sc.link.validate();
  } catch (const std::invalid_argument& e) {
    throw ScenarioError(std::string("scenario: ") + e.what());
  }
  if (sc.queue.capacity_bytes && *sc.queue.capacity_bytes == 0) {
    throw ScenarioError("scenario: queue_capacity must be positive");
  }

  if (!trace) throw ScenarioError("scenario: no trace given");
  sc.trace_path = std::filesystem::path(*trace);
  if (sc.trace_path.is_relative()) sc.trace_path = base_dir / sc.trace_path;
  std::ifstream f(sc.trace_path);
  if (!f) throw ScenarioError("scenario: cannot open trace file " + sc.trace_path.string());
  std::stringstream text;
  text << f.rdbuf();
  try {
    sc.trajectories = mobility::parse_ns2_trace(text.str());
  } catch (const mobility::TraceError& e) {
    throw ScenarioError(sc.trace_path.string() + ": " + e.what());
  }
  if (sc.trajectories.size() < 2) {
    throw ScenarioError(sc.trace_path.string() + ": a scenario needs at least two nodes");
  }
  for (const auto& m : sc.traffic.scripted) {
    if (m.source >= sc.trajectories.size() || m.destination >= sc.trajectories.size()) {
      throw ScenarioError("scenario: scripted message names a node outside the trace");
    }
  }
  return sc;
}

inline std::vector<Setting> read_settings_file(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ScenarioError("cannot open scenario file " + path.string());
  std::stringstream text;
  text << f.rdbuf();
  return read_settings(text.str(), path.string());
}

inline Scenario load_scenario(const std::filesystem::path& path,
                              const std::vector<Setting>& overrides = {}) {
  auto settings = read_settings_file(path);
  settings.insert(settings.end(), overrides.begin(), overrides.end());
  return build_scenario(settings, path.parent_path());
}

struct RunOutput {
  std::uint64_t seed = 0;
  metrics::RunReport report;
  std::map<std::pair<NodeId, NodeId>, netsim::LinkCounters> links;
  std::vector<protocol::RouterStats> routers;
  std::uint64_t pending_reception_packets = 0;
  std::uint64_t events_executed = 0;
};

/// Runs one seed. `tap` sees every event, e.g. for trace dumps; `frames` sees
/// every frame leaving a device.
inline RunOutput simulate(const Scenario& sc, std::uint64_t seed, const EventSink& tap = {},
                          std::function<void(const protocol::Frame&, TimeUs)> frames = {}) {
  metrics::Accumulator acc;
  EventSink sink = [&acc, &tap](const EventRecord& e) {
    acc.consume(e);
    if (tap) tap(e);
  };
  netsim::Simulator sim(sc.trajectories, sc.protocol, sc.link, sc.queue, seed, sink);
  if (frames) sim.set_frame_observer(std::move(frames));
  const auto schedule = traffic::build_schedule(sc.traffic, sim.node_count(),
                                                netsim::derive_seed(seed, 3, 0));
  for (const auto& spec : schedule) {
    if (spec.creation_time >= sc.duration) continue;
    sim.schedule_message(spec.creation_time,
                         traffic::generate_message(spec, sc.protocol.hop_limit));
  }
  sim.run(sc.duration);

  RunOutput out;
  out.seed = seed;
  out.report = acc.report();
  out.links = sim.audit();
  for (std::size_t i = 0; i < sim.node_count(); ++i) {
    const auto& r = sim.router(static_cast<NodeId>(i));
    out.routers.push_back(r.stats());
    out.pending_reception_packets += r.pending_reception_packets();
  }
  out.events_executed = sim.scheduler().executed();
  return out;
}

}  // namespace epidemic::scenario
