#pragma once

#include <functional>
#include <map>
#include <ostream>
#include <vector>

#include "tilerun/device.hpp"
#include "tilerun/error.hpp"
#include "tilerun/scheduler.hpp"

namespace tilerun {

// Scaling sweep over square problem sizes and homogeneous device counts, in
// sim mode. Arithmetic is skipped: only the schedule and cache bookkeeping
// matter for the table.
struct SweepSpec {
  std::vector<std::size_t> sizes{64, 128, 256, 512, 1024};
  std::vector<std::size_t> device_counts{1, 2, 4};
  std::size_t tile_size = 64;
  DeviceSpec device{DeviceKind::accelerator, kUnboundedCapacity, 1.0e6, 1.0e5, 4, 1};
  double peer_bandwidth = 4.0e5;
  double transfer_latency = 0.0;
  bool coherence = true;
  bool steal = true;
  std::uint64_t seed = 0;
};

struct SweepRow {
  std::size_t size = 0;
  std::size_t devices = 0;
  std::size_t grid = 0;
  std::uint64_t tasks = 0;
  double makespan = 0.0;
  double speedup = 0.0;  // makespan with one device / makespan here
  CacheCounters cache;
  std::uint64_t steals = 0;
};

inline RunStats sweep_cell(const SweepSpec& spec, std::size_t size, std::size_t devices) {
  DeviceConfig cfg = DeviceConfig::homogeneous(devices, spec.device, spec.peer_bandwidth);
  cfg.transfer_latency = spec.transfer_latency;
  RunOptions opt;
  opt.mode = ExecMode::sim;
  opt.compute = false;
  opt.coherence = spec.coherence;
  opt.steal = spec.steal;
  opt.seed = spec.seed;
  const MatrixBuf<double> m(size, size);
  return run(cfg, m, m, spec.tile_size, opt).stats;
}

// Rows come out in (size, devices) order; `on_row` sees each as soon as it
// is computed, so a failure part way keeps what was already emitted.
inline std::vector<SweepRow> sweep(const SweepSpec& spec,
                                   const std::function<void(const SweepRow&)>& on_row = {}) {
  if (spec.sizes.empty() || spec.device_counts.empty())
    throw ConfigError("sweep needs at least one size and one device count");
  for (auto n : spec.device_counts)
    if (n == 0) throw ConfigError("sweep device counts must be >= 1");
  std::vector<SweepRow> rows;
  for (std::size_t size : spec.sizes) {
    std::map<std::size_t, RunStats> cells;
    const double base = sweep_cell(spec, size, 1).makespan;
    for (std::size_t n : spec.device_counts) {
      const RunStats s = sweep_cell(spec, size, n);
      SweepRow r{size, n, s.grid_rows, s.tasks, s.makespan, base / s.makespan,
                 s.cache.total, s.steals.size()};
      rows.push_back(r);
      if (on_row) on_row(r);
    }
  }
  return rows;
}

inline void write_sweep_header(std::ostream& os) {
  os << "size,devices,grid,tasks,makespan,speedup,l1_hits,l2_hits,host_fetches,"
        "bytes_host,bytes_peer,evictions,steals\n";
}

inline void write_sweep_row(std::ostream& os, const SweepRow& r) {
  os << r.size << ',' << r.devices << ',' << r.grid << ',' << r.tasks << ',' << r.makespan << ','
     << r.speedup << ',' << r.cache.l1_hits << ',' << r.cache.l2_hits << ','
     << r.cache.host_fetches << ',' << r.cache.bytes_host << ',' << r.cache.bytes_peer << ','
     << r.cache.evictions << ',' << r.steals << '\n';
}

}  // namespace tilerun
