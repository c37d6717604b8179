#pragma once

// Run reports.
//
// JSON (schema_version 1):
//   schema_version, mode, coherence, steal, tile_size,
//   grid {rows, cols, inner}, tasks, makespan, bytes_writeback,
//   steals (count), execution_errors, state_violations, invariant_violations,
//   cache {l1_hits, l2_hits, host_fetches, bytes_host, bytes_peer, evictions,
//          requests, per_device [ {device, <same six counters>} ]},
//   devices [ {device, kind, tasks_completed, steals_performed,
//              steals_suffered, clock} ]
//
// Threaded runs add wall_seconds. Sim reports leave it out so that a sim run
// reproduces its report byte for byte.
//
// CSV: header, then one row per device, then a "total" row.

#include <filesystem>
#include <fstream>
#include <ostream>
#include <string>

#include <nlohmann/json.hpp>

#include "tilerun/device.hpp"
#include "tilerun/error.hpp"
#include "tilerun/scheduler.hpp"

namespace tilerun {

inline constexpr int kReportSchemaVersion = 1;

inline nlohmann::json to_json(const CacheCounters& c) {
  return {{"l1_hits", c.l1_hits},       {"l2_hits", c.l2_hits},
          {"host_fetches", c.host_fetches}, {"bytes_host", c.bytes_host},
          {"bytes_peer", c.bytes_peer}, {"evictions", c.evictions}};
}

inline nlohmann::json to_json(const RunStats& s, const DeviceConfig& cfg) {
  nlohmann::json cache = to_json(s.cache.total);
  cache["requests"] = s.cache.total.requests();
  cache["per_device"] = nlohmann::json::array();
  for (std::size_t d = 0; d < s.cache.per_device.size(); ++d) {
    auto e = to_json(s.cache.per_device[d]);
    e["device"] = d;
    cache["per_device"].push_back(std::move(e));
  }
  nlohmann::json devices = nlohmann::json::array();
  for (std::size_t d = 0; d < s.devices.size(); ++d) {
    const auto& ds = s.devices[d];
    devices.push_back({{"device", d},
                       {"kind", d < cfg.size() ? to_string(cfg.devices[d].kind) : "unknown"},
                       {"tasks_completed", ds.tasks_completed},
                       {"steals_performed", ds.steals_performed},
                       {"steals_suffered", ds.steals_suffered},
                       {"clock", ds.clock}});
  }
  nlohmann::json j{{"schema_version", kReportSchemaVersion},
          {"mode", to_string(s.mode)},
          {"coherence", s.coherence},
          {"steal", s.steal},
          {"tile_size", s.tile_size},
          {"grid", {{"rows", s.grid_rows}, {"cols", s.grid_cols}, {"inner", s.k_extent}}},
          {"tasks", s.tasks},
          {"makespan", s.makespan},
          {"bytes_writeback", s.bytes_writeback},
          {"steals", s.steals.size()},
          {"execution_errors", s.execution_errors},
          {"state_violations", s.state_violations},
          {"invariant_violations", s.invariant_violations},
          {"cache", std::move(cache)},
          {"devices", std::move(devices)}};
  if (s.mode == ExecMode::threaded) j["wall_seconds"] = s.wall_seconds;
  return j;
}

inline void write_csv(std::ostream& os, const RunStats& s) {
  os << "device,tasks_completed,steals_performed,steals_suffered,clock,"
        "l1_hits,l2_hits,host_fetches,bytes_host,bytes_peer,evictions\n";
  auto row = [&](const std::string& name, std::uint64_t tasks, std::uint64_t sp,
                 std::uint64_t ss, double clock, const CacheCounters& c) {
    os << name << ',' << tasks << ',' << sp << ',' << ss << ',' << clock << ',' << c.l1_hits
       << ',' << c.l2_hits << ',' << c.host_fetches << ',' << c.bytes_host << ','
       << c.bytes_peer << ',' << c.evictions << '\n';
  };
  std::uint64_t sp = 0, ss = 0;
  for (std::size_t d = 0; d < s.devices.size(); ++d) {
    const auto& ds = s.devices[d];
    const CacheCounters c = d < s.cache.per_device.size() ? s.cache.per_device[d] : CacheCounters{};
    row(std::to_string(d), ds.tasks_completed, ds.steals_performed, ds.steals_suffered, ds.clock, c);
    sp += ds.steals_performed;
    ss += ds.steals_suffered;
  }
  row("total", s.total_tasks_completed(), sp, ss, s.makespan, s.cache.total);
  if (!os) throw IoError("CSV write failed");
}

inline void write_json_file(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write to " + path.string() + " failed");
}

}  // namespace tilerun
