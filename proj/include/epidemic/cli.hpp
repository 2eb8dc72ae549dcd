#pragma once

// `epidemic_sim` subcommands: run, sweep and rwp.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "epidemic/metrics.hpp"
#include "epidemic/mobility.hpp"
#include "epidemic/protocol.hpp"
#include "epidemic/scenario.hpp"

namespace epidemic::cli {

namespace fs = std::filesystem;

struct Axis {
  std::string key;
  std::vector<std::string> values;
};

inline Axis parse_axis(const std::string& arg) {
  const auto eq = arg.find('=');
  if (eq == std::string::npos) throw scenario::ScenarioError("--axis expects key=v1,v2,...");
  Axis a;
  a.key = scenario::detail::trim(arg.substr(0, eq));
  if (!scenario::is_known_key(a.key) || a.key == "message" || a.key == "seeds") {
    throw scenario::ScenarioError("--axis: unknown or unsweepable key '" + a.key + "'");
  }
  std::stringstream ss(arg.substr(eq + 1));
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = scenario::detail::trim(item);
    if (!item.empty()) a.values.push_back(item);
  }
  if (a.values.empty()) throw scenario::ScenarioError("--axis " + a.key + ": no values");
  return a;
}

/// Cartesian product, first axis outermost.
inline std::vector<std::vector<std::string>> axis_product(const std::vector<Axis>& axes) {
  std::vector<std::vector<std::string>> cells{{}};
  for (const Axis& a : axes) {
    std::vector<std::vector<std::string>> next;
    for (const auto& prefix : cells) {
      for (const auto& v : a.values) {
        auto c = prefix;
        c.push_back(v);
        next.push_back(std::move(c));
      }
    }
    cells = std::move(next);
  }
  return cells;
}

/// Runs `jobs` in order-stable fashion over `workers` threads.
inline void parallel_for(std::size_t count, unsigned workers,
                         const std::function<void(std::size_t)>& body) {
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(count)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) body(i);
    });
  }
  for (auto& t : pool) t.join();
}

struct CellResult {
  std::vector<std::string> axis_values;
  std::vector<scenario::RunOutput> runs;
  std::string error;
};

struct BatchOptions {
  fs::path scenario_path;
  std::vector<std::string> overrides;
  std::vector<Axis> axes;
  std::uint64_t seed_count = 0;  // 0: use the scenario's seed list
  fs::path out_dir = ".";
  unsigned jobs = 1;
  bool dump_events = false;
};

inline std::vector<CellResult> run_batch(const BatchOptions& opt, std::ostream& err) {
  std::vector<scenario::Setting> base = scenario::read_settings_file(opt.scenario_path);
  for (const auto& o : opt.overrides) base.push_back(scenario::parse_override(o));

  const auto cells = axis_product(opt.axes);
  std::vector<CellResult> results(cells.size());
  std::vector<scenario::Scenario> scenarios(cells.size());
  for (std::size_t c = 0; c < cells.size(); ++c) {
    results[c].axis_values = cells[c];
    auto settings = base;
    for (std::size_t a = 0; a < opt.axes.size(); ++a) {
      settings.push_back({opt.axes[a].key, cells[c][a], "--axis"});
    }
    try {
      scenarios[c] = scenario::build_scenario(settings, opt.scenario_path.parent_path());
      if (opt.seed_count > 0) {
        scenarios[c].seeds.clear();
        for (std::uint64_t s = 1; s <= opt.seed_count; ++s) scenarios[c].seeds.push_back(s);
      }
      results[c].runs.resize(scenarios[c].seeds.size());
    } catch (const std::exception& e) {
      results[c].error = e.what();
    }
  }

  struct Job {
    std::size_t cell, run;
  };
  std::vector<Job> jobs;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    if (!results[c].error.empty()) continue;
    for (std::size_t r = 0; r < results[c].runs.size(); ++r) jobs.push_back({c, r});
  }
  std::vector<std::string> job_errors(jobs.size());
  parallel_for(jobs.size(), opt.jobs, [&](std::size_t j) {
    const auto [c, r] = jobs[j];
    const auto seed = scenarios[c].seeds[r];
    try {
      if (opt.dump_events) {
        const fs::path dir = opt.out_dir / "events";
        std::string name = "events";
        for (const auto& v : results[c].axis_values) name += "_" + v;
        name += "_seed" + std::to_string(seed) + ".csv";
        std::ofstream os(dir / name);
        os << "time_us,kind,node,peer,message_id,frame,cause,count,bytes,header_bytes\n";
        results[c].runs[r] =
            scenario::simulate(scenarios[c], seed, [&os](const EventRecord& e) { os << e << '\n'; });
      } else {
        results[c].runs[r] = scenario::simulate(scenarios[c], seed);
      }
    } catch (const std::exception& e) {
      job_errors[j] = "seed " + std::to_string(seed) + ": " + e.what();
    }
  });
  for (std::size_t j = 0; j < jobs.size(); ++j) {
    auto& cell = results[jobs[j].cell];
    if (!job_errors[j].empty() && cell.error.empty()) cell.error = job_errors[j];
  }
  for (const auto& cell : results) {
    if (cell.error.empty()) continue;
    err << "error";
    for (std::size_t a = 0; a < opt.axes.size(); ++a) {
      err << ' ' << opt.axes[a].key << '=' << cell.axis_values[a];
    }
    err << ": " << cell.error << '\n';
  }
  return results;
}

/// Writes runs.csv and aggregate.csv; failed cells are left out.
inline void write_reports(const BatchOptions& opt, const std::vector<CellResult>& results) {
  fs::create_directories(opt.out_dir);
  std::vector<std::string> axis_cols;
  for (const auto& a : opt.axes) axis_cols.push_back(a.key);

  std::ofstream runs(opt.out_dir / "runs.csv");
  auto header = axis_cols;
  header.emplace_back("seed");
  for (auto& c : metrics::run_columns()) header.push_back(c);
  metrics::write_row(runs, header);

  std::ofstream agg(opt.out_dir / "aggregate.csv");
  auto agg_header = axis_cols;
  for (auto& c : metrics::aggregate_columns()) agg_header.push_back(c);
  metrics::write_row(agg, agg_header);

  for (const auto& cell : results) {
    if (!cell.error.empty()) continue;
    std::vector<metrics::RunReport> reports;
    for (const auto& r : cell.runs) {
      auto row = cell.axis_values;
      row.push_back(std::to_string(r.seed));
      for (auto& v : metrics::run_values(r.report)) row.push_back(v);
      metrics::write_row(runs, row);
      reports.push_back(r.report);
    }
    auto row = cell.axis_values;
    for (auto& v : metrics::aggregate_values(reports)) row.push_back(v);
    metrics::write_row(agg, row);
  }
}

inline int execute_batch(const BatchOptions& opt, std::ostream& out, std::ostream& err) {
  std::vector<CellResult> results;
  try {
    if (opt.dump_events) fs::create_directories(opt.out_dir / "events");
    results = run_batch(opt, err);
    write_reports(opt, results);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  std::size_t failed = 0;
  std::size_t runs = 0;
  for (const auto& c : results) {
    if (!c.error.empty()) ++failed;
    runs += c.error.empty() ? c.runs.size() : 0;
  }
  out << "wrote " << runs << " runs over " << results.size() - failed << " cell(s) to "
      << opt.out_dir.string() << '\n';
  if (failed > 0) {
    err << failed << " of " << results.size() << " cell(s) failed\n";
    return 1;
  }
  return 0;
}

inline int run_cli(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Epidemic DTN routing simulator"};
  app.require_subcommand(1);

  BatchOptions opt;
  std::string scenario_path;
  std::vector<std::string> axes;
  std::string out_dir = ".";

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("scenario", scenario_path, "Scenario file")->required();
    sub->add_option("--seeds", opt.seed_count, "Run seeds 1..N instead of the scenario's list");
    sub->add_option("--set", opt.overrides, "Override a scenario key (key=value)");
    sub->add_option("--out", out_dir, "Report directory");
    sub->add_option("--jobs", opt.jobs, "Concurrent runs");
    sub->add_flag("--events", opt.dump_events, "Also dump each run's event stream");
  };

  auto* run = app.add_subcommand("run", "Run one scenario over all seeds");
  add_common(run);
  auto* sweep = app.add_subcommand("sweep", "Run the Cartesian product of configuration axes");
  add_common(sweep);
  sweep->add_option("--axis", axes, "Axis as key=v1,v2,...")->required();

  mobility::RandomWaypointParams rwp;
  std::uint64_t rwp_seed = 1;
  std::string rwp_out;
  auto* gen = app.add_subcommand("rwp", "Write a random-waypoint ns-2 trace");
  gen->add_option("--nodes", rwp.nodes, "Node count");
  gen->add_option("--width", rwp.width, "Area width (m)");
  gen->add_option("--height", rwp.height, "Area height (m)");
  gen->add_option("--min-speed", rwp.min_speed, "Minimum speed (m/s)");
  gen->add_option("--max-speed", rwp.max_speed, "Maximum speed (m/s)");
  gen->add_option("--max-pause", rwp.max_pause, "Maximum pause (s)");
  gen->add_option("--duration", rwp.duration, "Trace length (s)");
  gen->add_option("--seed", rwp_seed, "Generator seed");
  gen->add_option("--out", rwp_out, "Output file")->required();

  std::vector<std::string> argv_store{"epidemic_sim"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& a : argv_store) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }

  if (gen->parsed()) {
    try {
      std::ofstream os(rwp_out);
      if (!os) throw std::runtime_error("cannot write " + rwp_out);
      os << mobility::random_waypoint_trace(rwp, rwp_seed);
    } catch (const std::exception& e) {
      err << "error: " << e.what() << '\n';
      return 2;
    }
    return 0;
  }

  opt.scenario_path = scenario_path;
  opt.out_dir = out_dir;
  try {
    for (const auto& a : axes) opt.axes.push_back(parse_axis(a));
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  return execute_batch(opt, out, err);
}

}  // namespace epidemic::cli
