#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tilerun/error.hpp"

namespace tilerun {

using DeviceId = std::uint32_t;

inline constexpr std::size_t kUnboundedCapacity = std::numeric_limits<std::size_t>::max();

enum class DeviceKind { accelerator, host_worker };

inline const char* to_string(DeviceKind k) {
  return k == DeviceKind::accelerator ? "accelerator" : "host-worker";
}

// One simulated device. Throughput is in flops per simulated time unit and
// bandwidths in bytes per simulated time unit.
struct DeviceSpec {
  DeviceKind kind = DeviceKind::accelerator;
  std::size_t capacity_tiles = kUnboundedCapacity;
  double flops_per_unit = 1.0;
  double host_bandwidth = 1.0;
  // Reservation-station width; one slot per stream.
  std::size_t slots = 4;
  // Host workers split each tile product into factor x factor sub-blocks.
  std::size_t subtile_factor = 1;

  bool unbounded() const noexcept { return capacity_tiles == kUnboundedCapacity; }
};

// Pairwise interconnect description. Selection of a peer uses `hops`,
// the cost of the copy uses `peer_bandwidth`.
struct ProximityMatrix {
  std::vector<std::vector<std::uint32_t>> hops;
  std::vector<std::vector<double>> peer_bandwidth;

  static ProximityMatrix uniform(std::size_t n, std::uint32_t hop, double bandwidth) {
    ProximityMatrix p;
    p.hops.assign(n, std::vector<std::uint32_t>(n, hop));
    p.peer_bandwidth.assign(n, std::vector<double>(n, bandwidth));
    for (std::size_t d = 0; d < n; ++d) p.hops[d][d] = 0;
    return p;
  }

  std::size_t size() const noexcept { return hops.size(); }

  void validate(std::size_t n) const {
    if (hops.size() != n || peer_bandwidth.size() != n)
      throw ConfigError("proximity matrices must be " + std::to_string(n) + "x" +
                        std::to_string(n));
    for (std::size_t i = 0; i < n; ++i) {
      if (hops[i].size() != n || peer_bandwidth[i].size() != n)
        throw ConfigError("proximity matrices must be square");
      if (hops[i][i] != 0) throw ConfigError("proximity hops must have a zero diagonal");
      for (std::size_t j = 0; j < n; ++j) {
        if (hops[i][j] != hops[j][i]) throw ConfigError("proximity hops must be symmetric");
        if (peer_bandwidth[i][j] != peer_bandwidth[j][i])
          throw ConfigError("peer_bandwidth must be symmetric");
        if (i != j && !(peer_bandwidth[i][j] > 0))
          throw ConfigError("peer_bandwidth must be > 0 off the diagonal");
      }
    }
  }
};

struct DeviceConfig {
  std::vector<DeviceSpec> devices;
  ProximityMatrix proximity;
  // Fixed cost added to every non-empty transfer.
  double transfer_latency = 0.0;

  std::size_t size() const noexcept { return devices.size(); }
  const DeviceSpec& operator[](DeviceId d) const { return devices.at(d); }

  void validate() const {
    if (devices.empty()) throw ConfigError("device config needs at least one device");
    for (std::size_t d = 0; d < devices.size(); ++d) {
      const auto& s = devices[d];
      const std::string who = "device " + std::to_string(d) + ": ";
      if (s.capacity_tiles < 3)
        throw ConfigError(who + "capacity_tiles must be >= 3 (one A, one B, one C tile)");
      if (!(s.flops_per_unit > 0)) throw ConfigError(who + "flops_per_unit must be > 0");
      if (!(s.host_bandwidth > 0)) throw ConfigError(who + "host_bandwidth must be > 0");
      if (s.slots == 0) throw ConfigError(who + "slots must be >= 1");
      if (s.subtile_factor == 0) throw ConfigError(who + "subtile_factor must be >= 1");
      if (s.kind == DeviceKind::host_worker && !s.unbounded())
        throw ConfigError(who + "host workers have unbounded capacity");
    }
    if (transfer_latency < 0) throw ConfigError("transfer_latency must be >= 0");
    proximity.validate(devices.size());
  }

  // n copies of `spec`, all one hop apart.
  static DeviceConfig homogeneous(std::size_t n, const DeviceSpec& spec, double peer_bandwidth) {
    DeviceConfig cfg;
    cfg.devices.assign(n, spec);
    cfg.proximity = ProximityMatrix::uniform(n, 1, peer_bandwidth);
    return cfg;
  }
};

// Simulated time of one tile product: 2*m*k*n flops at the device's rate.
inline double compute_cost(const DeviceSpec& dev, std::size_t m, std::size_t k, std::size_t n) {
  return 2.0 * static_cast<double>(m) * static_cast<double>(k) * static_cast<double>(n) /
         dev.flops_per_unit;
}

// Source of a transfer: the host, or a peer device.
using TransferSource = std::optional<DeviceId>;
inline constexpr TransferSource kHost = std::nullopt;

inline double transfer_cost(const DeviceConfig& cfg, TransferSource src, DeviceId dst,
                            double bytes) {
  if (dst >= cfg.size()) throw ConfigError("transfer_cost: unknown device " + std::to_string(dst));
  if (src && *src >= cfg.size())
    throw ConfigError("transfer_cost: unknown device " + std::to_string(*src));
  if (bytes < 0) throw DimensionError("transfer_cost: negative byte count");
  if (src && *src == dst) return 0.0;
  if (bytes == 0) return 0.0;
  if (!src) {
    // Host tiles are already local to a host worker.
    if (cfg[dst].kind == DeviceKind::host_worker) return 0.0;
    return bytes / cfg[dst].host_bandwidth + cfg.transfer_latency;
  }
  return bytes / cfg.proximity.peer_bandwidth[*src][dst] + cfg.transfer_latency;
}

// Owner with the fewest hops from `requester`; ties go to the lowest id.
inline DeviceId closest_owner(DeviceId requester, std::span<const DeviceId> owners,
                              const ProximityMatrix& prox) {
  if (owners.empty()) throw DimensionError("closest_owner: empty owner set");
  if (requester >= prox.size()) throw ConfigError("closest_owner: unknown requester");
  DeviceId best = owners.front();
  for (DeviceId o : owners) {
    const auto h = prox.hops[requester].at(o);
    const auto hb = prox.hops[requester].at(best);
    if (h < hb || (h == hb && o < best)) best = o;
  }
  return best;
}

}  // namespace tilerun
