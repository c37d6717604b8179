#pragma once

// Device configuration files (JSON).
//
//   {
//     "transfer_latency": 0.0,                  optional, default 0
//     "devices": [
//       { "kind": "accelerator",                 or "host-worker"; default accelerator
//         "capacity_tiles": 64,                  integer >= 3 or "unbounded"; default unbounded
//         "flops_per_unit": 1e6,                 required, > 0
//         "host_bandwidth": 1e5,                 required, > 0
//         "slots": 4,                            optional, default 4
//         "subtile_factor": 1 }                  optional, default 1
//     ],
//     "proximity": {                             required when there is more than one device
//       "hops": [[0, 1], [1, 0]],                optional, default 1 hop between all pairs
//       "peer_bandwidth": [[0, 4e5], [4e5, 0]]   matrix, or one number for every pair
//     }
//   }

#include <filesystem>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "tilerun/device.hpp"
#include "tilerun/error.hpp"

namespace tilerun {

namespace detail {

inline DeviceSpec parse_device(const nlohmann::json& j, std::size_t index) {
  const std::string who = "devices[" + std::to_string(index) + "]: ";
  if (!j.is_object()) throw ConfigError(who + "expected an object");
  DeviceSpec s;
  const std::string kind = j.value("kind", std::string("accelerator"));
  if (kind == "accelerator")
    s.kind = DeviceKind::accelerator;
  else if (kind == "host-worker")
    s.kind = DeviceKind::host_worker;
  else
    throw ConfigError(who + "unknown kind '" + kind + "'");

  if (auto it = j.find("capacity_tiles"); it != j.end()) {
    if (it->is_string() && it->get<std::string>() == "unbounded")
      s.capacity_tiles = kUnboundedCapacity;
    else if (it->is_number_unsigned())
      s.capacity_tiles = it->get<std::size_t>();
    else
      throw ConfigError(who + "capacity_tiles must be a non-negative integer or \"unbounded\"");
  }
  if (!j.contains("flops_per_unit")) throw ConfigError(who + "flops_per_unit is required");
  if (!j.contains("host_bandwidth")) throw ConfigError(who + "host_bandwidth is required");
  s.flops_per_unit = j.at("flops_per_unit").get<double>();
  s.host_bandwidth = j.at("host_bandwidth").get<double>();
  s.slots = j.value("slots", std::size_t{4});
  s.subtile_factor = j.value("subtile_factor", std::size_t{1});
  return s;
}

}  // namespace detail

inline DeviceConfig parse_device_config(const nlohmann::json& j) {
  try {
    DeviceConfig cfg;
    if (!j.contains("devices") || !j.at("devices").is_array())
      throw ConfigError("'devices' array is required");
    const auto& devs = j.at("devices");
    for (std::size_t i = 0; i < devs.size(); ++i)
      cfg.devices.push_back(detail::parse_device(devs[i], i));
    cfg.transfer_latency = j.value("transfer_latency", 0.0);

    const std::size_t n = cfg.devices.size();
    cfg.proximity = ProximityMatrix::uniform(n, 1, 1.0);
    if (auto p = j.find("proximity"); p != j.end()) {
      if (auto h = p->find("hops"); h != p->end())
        cfg.proximity.hops = h->get<std::vector<std::vector<std::uint32_t>>>();
      if (auto bw = p->find("peer_bandwidth"); bw != p->end()) {
        if (bw->is_number())
          cfg.proximity.peer_bandwidth = ProximityMatrix::uniform(n, 1, bw->get<double>()).peer_bandwidth;
        else
          cfg.proximity.peer_bandwidth = bw->get<std::vector<std::vector<double>>>();
      } else if (n > 1) {
        throw ConfigError("proximity.peer_bandwidth is required with more than one device");
      }
    } else if (n > 1) {
      throw ConfigError("'proximity' is required with more than one device");
    }
    // The diagonal of peer_bandwidth is never used.
    for (std::size_t d = 0; d < std::min(n, cfg.proximity.peer_bandwidth.size()); ++d)
      if (d < cfg.proximity.peer_bandwidth[d].size()) cfg.proximity.peer_bandwidth[d][d] = 0.0;
    cfg.validate();
    return cfg;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("device config: ") + e.what());
  }
}

inline nlohmann::json to_json(const DeviceConfig& cfg) {
  nlohmann::json j;
  j["transfer_latency"] = cfg.transfer_latency;
  j["devices"] = nlohmann::json::array();
  for (const auto& d : cfg.devices) {
    nlohmann::json e{{"kind", to_string(d.kind)},
                     {"flops_per_unit", d.flops_per_unit},
                     {"host_bandwidth", d.host_bandwidth},
                     {"slots", d.slots},
                     {"subtile_factor", d.subtile_factor}};
    if (d.unbounded())
      e["capacity_tiles"] = "unbounded";
    else
      e["capacity_tiles"] = d.capacity_tiles;
    j["devices"].push_back(std::move(e));
  }
  j["proximity"] = {{"hops", cfg.proximity.hops}, {"peer_bandwidth", cfg.proximity.peer_bandwidth}};
  return j;
}

inline DeviceConfig load_device_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open device config " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  try {
    return parse_device_config(j);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

}  // namespace tilerun
