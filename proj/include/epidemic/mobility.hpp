#pragma once

// ns-2 mobility traces: parsing into piecewise-linear trajectories, plus a
// random-waypoint generator that writes the same format.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <map>
#include <optional>
#include <random>
#include <regex>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "epidemic/wire.hpp"

namespace epidemic::mobility {

struct Vec2 {
  double x = 0;
  double y = 0;
  friend bool operator==(const Vec2&, const Vec2&) = default;
};

inline double distance(Vec2 a, Vec2 b) { return std::hypot(a.x - b.x, a.y - b.y); }

class TraceError : public std::runtime_error {
 public:
  TraceError(std::size_t line, const std::string& what)
      : std::runtime_error("trace line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

inline TimeUs seconds_to_us(double s) {
  return static_cast<TimeUs>(std::llround(s * 1e6));
}

/// Moves toward each setdest target in a straight line at the given speed and
/// stops there; a newer setdest starts from wherever the node is.
class Trajectory {
 public:
  struct Leg {
    TimeUs start = 0;
    Vec2 from;
    Vec2 to;
    double speed = 0;  // m/s
  };

  Trajectory() = default;
  explicit Trajectory(Vec2 initial) : initial_(initial) {}

  Vec2 initial() const noexcept { return initial_; }
  const std::vector<Leg>& legs() const noexcept { return legs_; }

  /// Legs must be appended in non-decreasing time order.
  void add_waypoint(TimeUs at, Vec2 to, double speed) {
    if (!legs_.empty() && at < legs_.back().start) {
      throw std::invalid_argument("trajectory: waypoint out of time order");
    }
    legs_.push_back({at, position(at), to, speed});
  }

  Vec2 position(TimeUs t) const {
    auto it = std::upper_bound(legs_.begin(), legs_.end(), t,
                               [](TimeUs v, const Leg& l) { return v < l.start; });
    if (it == legs_.begin()) return initial_;
    const Leg& leg = *std::prev(it);
    const double span = distance(leg.from, leg.to);
    if (span == 0 || leg.speed <= 0) return leg.speed <= 0 ? leg.from : leg.to;
    const double travelled = leg.speed * static_cast<double>(t - leg.start) / 1e6;
    if (travelled >= span) return leg.to;
    const double f = travelled / span;
    return {leg.from.x + (leg.to.x - leg.from.x) * f, leg.from.y + (leg.to.y - leg.from.y) * f};
  }

 private:
  Vec2 initial_;
  std::vector<Leg> legs_;
};

/// Accepts `$node_(i) set X_|Y_|Z_ v` and
/// `$ns_ at t "$node_(i) setdest x y speed"` lines. Blank lines and `#`
/// comments are skipped. Node indices must be contiguous from zero and every
/// node needs an initial X_ and Y_.
inline std::vector<Trajectory> parse_ns2_trace(const std::string& text) {
  static const std::string num = R"(([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?))";
  static const std::regex set_re(R"(^\s*\$node_\((\d+)\)\s+set\s+([XYZ])_\s+)" + num + R"(\s*$)");
  static const std::regex dest_re(R"(^\s*\$ns_\s+at\s+)" + num +
                                  R"(\s+"\s*\$node_\((\d+)\)\s+setdest\s+)" + num + R"(\s+)" +
                                  num + R"(\s+)" + num + R"(\s*"\s*$)");

  struct Pending {
    std::optional<double> x, y;
    std::size_t first_line = 0;
  };
  struct Command {
    TimeUs at;
    std::size_t line;
    Vec2 to;
    double speed;
  };
  std::map<std::size_t, Pending> initial;
  std::map<std::size_t, std::vector<Command>> commands;

  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::smatch m;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    if (std::regex_match(line, m, set_re)) {
      const std::size_t node = std::stoul(m[1]);
      auto& p = initial[node];
      if (p.first_line == 0) p.first_line = line_no;
      const double v = std::stod(m[3]);
      if (m[2] == "X") p.x = v;
      if (m[2] == "Y") p.y = v;
    } else if (std::regex_match(line, m, dest_re)) {
      const double at = std::stod(m[1]);
      const std::size_t node = std::stoul(m[2]);
      const double speed = std::stod(m[5]);
      if (at < 0) throw TraceError(line_no, "negative time");
      if (speed < 0) throw TraceError(line_no, "negative speed");
      commands[node].push_back({seconds_to_us(at), line_no, {std::stod(m[3]), std::stod(m[4])}, speed});
    } else {
      throw TraceError(line_no, "unrecognised statement: " + line.substr(first));
    }
  }

  std::size_t count = 0;
  if (!initial.empty()) count = initial.rbegin()->first + 1;
  if (!commands.empty()) count = std::max(count, commands.rbegin()->first + 1);
  std::vector<Trajectory> out;
  out.reserve(count);
  for (std::size_t node = 0; node < count; ++node) {
    auto it = initial.find(node);
    if (it == initial.end()) {
      const std::size_t where = commands.contains(node) ? commands[node].front().line : line_no;
      throw TraceError(where, "node index gap: node " + std::to_string(node) +
                                  " has no initial position");
    }
    if (!it->second.x || !it->second.y) {
      throw TraceError(it->second.first_line,
                       "node " + std::to_string(node) + " lacks an initial X_ or Y_");
    }
    Trajectory traj({*it->second.x, *it->second.y});
    auto& cmds = commands[node];
    std::stable_sort(cmds.begin(), cmds.end(),
                     [](const Command& a, const Command& b) { return a.at < b.at; });
    for (const auto& c : cmds) traj.add_waypoint(c.at, c.to, c.speed);
    out.push_back(std::move(traj));
  }
  return out;
}

struct RandomWaypointParams {
  std::size_t nodes = 20;
  double width = 1000;
  double height = 1000;
  double min_speed = 1;
  double max_speed = 5;
  double max_pause = 0;
  double duration = 3600;
};

/// Classic random waypoint: pick a uniform destination, travel at a uniform
/// speed, pause, repeat. Output is an ns-2 trace.
inline std::string random_waypoint_trace(const RandomWaypointParams& p, std::uint64_t seed) {
  if (p.nodes == 0 || p.width <= 0 || p.height <= 0 || p.min_speed <= 0 ||
      p.max_speed < p.min_speed || p.max_pause < 0 || p.duration <= 0) {
    throw std::invalid_argument("random waypoint: invalid parameters");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ux(0, p.width), uy(0, p.height);
  std::uniform_real_distribution<double> speed(p.min_speed, p.max_speed);
  std::uniform_real_distribution<double> pause(0, p.max_pause);
  std::ostringstream os;
  os << std::fixed << std::setprecision(3);
  std::vector<Vec2> start(p.nodes);
  for (std::size_t i = 0; i < p.nodes; ++i) {
    start[i] = {ux(rng), uy(rng)};
    os << "$node_(" << i << ") set X_ " << start[i].x << '\n';
    os << "$node_(" << i << ") set Y_ " << start[i].y << '\n';
    os << "$node_(" << i << ") set Z_ 0.000\n";
  }
  for (std::size_t i = 0; i < p.nodes; ++i) {
    double t = 0;
    Vec2 at = start[i];
    while (t < p.duration) {
      const Vec2 to{ux(rng), uy(rng)};
      const double v = speed(rng);
      os << "$ns_ at " << t << " \"$node_(" << i << ") setdest " << to.x << ' ' << to.y << ' '
         << v << "\"\n";
      t += distance(at, to) / v + (p.max_pause > 0 ? pause(rng) : 0.0);
      at = to;
    }
  }
  return os.str();
}

}  // namespace epidemic::mobility
