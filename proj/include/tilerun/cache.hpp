#pragma once

// Two-level tile cache directory.
//
// L1 is a device's own resident set. L2 is the union of every accelerator's
// resident set: a tile missing locally but held by a peer is copied from the
// closest peer and admitted locally. A tile held by nobody comes from host
// memory. Input tiles are immutable, so there is no invalidation; coherence
// reduces to tracking who holds what.
//
// Host workers do not take part: they read host memory directly, so every
// request they make is served locally and nothing is recorded as resident on
// them.
//
// Every public operation takes the directory lock, so operations are
// linearizable with respect to each other.

#include <algorithm>
#include <cstdint>
#include <list>
#include <mutex>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "tilerun/device.hpp"
#include "tilerun/error.hpp"
#include "tilerun/tiled_matrix.hpp"

namespace tilerun {

enum class EvictionPolicy { lru, fifo };

struct LookupResult {
  enum class Kind { l1_hit, l2_hit, miss };
  Kind kind = Kind::miss;
  DeviceId owner = 0;  // meaningful for l2_hit only

  static LookupResult l1() { return {Kind::l1_hit, 0}; }
  static LookupResult l2(DeviceId o) { return {Kind::l2_hit, o}; }
  static LookupResult none() { return {Kind::miss, 0}; }
  bool operator==(const LookupResult&) const = default;
};

struct CacheCounters {
  std::uint64_t l1_hits = 0;
  std::uint64_t l2_hits = 0;
  std::uint64_t host_fetches = 0;
  std::uint64_t bytes_host = 0;
  std::uint64_t bytes_peer = 0;
  std::uint64_t evictions = 0;

  std::uint64_t requests() const noexcept { return l1_hits + l2_hits + host_fetches; }

  CacheCounters& operator+=(const CacheCounters& o) noexcept {
    l1_hits += o.l1_hits;
    l2_hits += o.l2_hits;
    host_fetches += o.host_fetches;
    bytes_host += o.bytes_host;
    bytes_peer += o.bytes_peer;
    evictions += o.evictions;
    return *this;
  }
  bool operator==(const CacheCounters&) const = default;
};

struct CacheStats {
  CacheCounters total;
  std::vector<CacheCounters> per_device;
};

class CacheDirectory {
 public:
  // Outcome of a full input-tile request (lookup, copy, admit, pin).
  struct Acquisition {
    LookupResult result;
    // False when the tile was streamed without being cached (coherence
    // bypass or host worker); such tiles are not pinned.
    bool pinned = false;
    std::vector<TileKey> evicted;
  };

  explicit CacheDirectory(const DeviceConfig& cfg, EvictionPolicy policy = EvictionPolicy::lru,
                          bool debug_checks = false)
      : prox_(cfg.proximity), policy_(policy), debug_checks_(debug_checks) {
    devices_.resize(cfg.size());
    per_device_.resize(cfg.size());
    for (std::size_t d = 0; d < cfg.size(); ++d) {
      devices_[d].capacity = cfg.devices[d].capacity_tiles;
      devices_[d].tracked = cfg.devices[d].kind == DeviceKind::accelerator;
    }
  }

  CacheDirectory(const CacheDirectory&) = delete;
  CacheDirectory& operator=(const CacheDirectory&) = delete;

  std::size_t device_count() const noexcept { return devices_.size(); }

  // L1 hit iff the requester holds the key, else L2 hit on the closest owner,
  // else miss. Residency is not changed; an L1 hit refreshes recency.
  LookupResult lookup(DeviceId requester, const TileKey& key) {
    std::lock_guard lock(mu_);
    return lookup_locked(check(requester), key);
  }

  // Makes `key` resident on `device`, evicting unpinned tiles in policy order
  // until capacity is respected. Returns the evicted keys.
  std::vector<TileKey> admit(DeviceId device, const TileKey& key) {
    std::lock_guard lock(mu_);
    return admit_locked(check(device), key);
  }

  void pin(DeviceId device, const TileKey& key) {
    std::lock_guard lock(mu_);
    pin_locked(check(device), key);
  }

  void unpin(DeviceId device, const TileKey& key) {
    std::lock_guard lock(mu_);
    unpin_locked(check(device), key);
  }

  // Requests an input tile for `device` and leaves it pinned there until
  // release(). With `coherence` off every request is a host fetch and
  // nothing is cached.
  Acquisition acquire(DeviceId device, const TileKey& key, std::size_t bytes,
                      bool coherence = true) {
    std::lock_guard lock(mu_);
    check(device);
    Acquisition acq;
    auto& dev = devices_[device];
    auto& mine = per_device_[device];
    if (!dev.tracked) {
      acq.result = LookupResult::l1();
      ++mine.l1_hits;
      return acq;
    }
    if (!coherence) {
      acq.result = LookupResult::none();
      ++mine.host_fetches;
      mine.bytes_host += bytes;
      return acq;
    }
    acq.result = lookup_locked(device, key);
    switch (acq.result.kind) {
      case LookupResult::Kind::l1_hit:
        break;
      case LookupResult::Kind::l2_hit:
        mine.bytes_peer += bytes;
        acq.evicted = admit_locked(device, key);
        break;
      case LookupResult::Kind::miss:
        mine.bytes_host += bytes;
        acq.evicted = admit_locked(device, key);
        break;
    }
    pin_locked(device, key);
    acq.pinned = true;
    return acq;
  }

  void release(DeviceId device, const Acquisition& acq, const TileKey& key) {
    if (!acq.pinned) return;
    unpin(device, key);
  }

  // Output tiles live pinned on the executing device for the duration of
  // their task and are dropped when written back. They count against
  // capacity but not against the request counters.
  void hold_output(DeviceId device, const TileKey& key) {
    std::lock_guard lock(mu_);
    if (!devices_[check(device)].tracked) return;
    admit_locked(device, key);
    pin_locked(device, key);
  }

  void drop_output(DeviceId device, const TileKey& key) {
    std::lock_guard lock(mu_);
    if (!devices_[check(device)].tracked) return;
    unpin_locked(device, key);
    erase_locked(device, key);
  }

  bool resident(DeviceId device, const TileKey& key) const {
    std::lock_guard lock(mu_);
    return devices_.at(device).entries.contains(key);
  }

  std::vector<DeviceId> owners(const TileKey& key) const {
    std::lock_guard lock(mu_);
    auto it = residency_.find(key);
    return it == residency_.end() ? std::vector<DeviceId>{} : it->second;
  }

  std::size_t used(DeviceId device) const {
    std::lock_guard lock(mu_);
    return devices_.at(device).entries.size();
  }

  std::uint32_t pin_count(DeviceId device, const TileKey& key) const {
    std::lock_guard lock(mu_);
    const auto& e = devices_.at(device).entries;
    auto it = e.find(key);
    return it == e.end() ? 0 : it->second.pins;
  }

  // Resident keys of `device`, next victim first.
  std::vector<TileKey> order(DeviceId device) const {
    std::lock_guard lock(mu_);
    const auto& o = devices_.at(device).order;
    return {o.begin(), o.end()};
  }

  CacheStats stats() const {
    std::lock_guard lock(mu_);
    CacheStats s;
    s.per_device = per_device_;
    for (const auto& d : per_device_) s.total += d;
    return s;
  }

  // Number of failed consistency checks seen after admits (debug_checks only).
  std::uint64_t invariant_violations() const {
    std::lock_guard lock(mu_);
    return violations_;
  }

  // Empty when the directory is consistent: per-device counts within
  // capacity, recency lists holding exactly the resident keys once each, and
  // the residency map agreeing with the per-device sets.
  std::vector<std::string> check_invariants() const {
    std::lock_guard lock(mu_);
    return check_locked();
  }

 private:
  struct Entry {
    std::list<TileKey>::iterator pos;
    std::uint32_t pins = 0;
  };
  struct DeviceCache {
    std::size_t capacity = kUnboundedCapacity;
    bool tracked = true;
    std::list<TileKey> order;  // front = next victim
    std::unordered_map<TileKey, Entry, TileKeyHash> entries;
    bool unbounded() const noexcept { return capacity == kUnboundedCapacity; }
  };

  DeviceId check(DeviceId d) const {
    if (d >= devices_.size()) throw ConfigError("unknown device " + std::to_string(d));
    return d;
  }

  LookupResult lookup_locked(DeviceId requester, const TileKey& key) {
    auto& dev = devices_[requester];
    auto& mine = per_device_[requester];
    if (!dev.tracked) {
      ++mine.l1_hits;
      return LookupResult::l1();
    }
    if (auto it = dev.entries.find(key); it != dev.entries.end()) {
      if (policy_ == EvictionPolicy::lru) dev.order.splice(dev.order.end(), dev.order, it->second.pos);
      ++mine.l1_hits;
      return LookupResult::l1();
    }
    if (auto it = residency_.find(key); it != residency_.end() && !it->second.empty()) {
      ++mine.l2_hits;
      return LookupResult::l2(closest_owner(requester, it->second, prox_));
    }
    ++mine.host_fetches;
    return LookupResult::none();
  }

  std::vector<TileKey> admit_locked(DeviceId device, const TileKey& key) {
    auto& dev = devices_[device];
    if (!dev.tracked) return {};
    if (dev.entries.contains(key))
      throw std::logic_error("admit: " + to_string(key) + " already resident on device " +
                             std::to_string(device));
    std::vector<TileKey> evicted;
    if (!dev.unbounded() && dev.entries.size() + 1 > dev.capacity) {
      const std::size_t need = dev.entries.size() + 1 - dev.capacity;
      for (auto it = dev.order.begin(); it != dev.order.end() && evicted.size() < need; ++it)
        if (dev.entries.at(*it).pins == 0) evicted.push_back(*it);
      if (evicted.size() < need)
        throw CapacityError("device " + std::to_string(device) + " cannot admit " +
                            to_string(key) + ": all " + std::to_string(dev.entries.size()) +
                            " resident tiles are pinned (capacity " +
                            std::to_string(dev.capacity) + ")");
      for (const auto& v : evicted) erase_locked(device, v);
      per_device_[device].evictions += evicted.size();
    }
    dev.order.push_back(key);
    dev.entries.emplace(key, Entry{std::prev(dev.order.end()), 0});
    auto& owners = residency_[key];
    owners.insert(std::upper_bound(owners.begin(), owners.end(), device), device);
    if (debug_checks_ && !check_locked().empty()) ++violations_;
    return evicted;
  }

  void erase_locked(DeviceId device, const TileKey& key) {
    auto& dev = devices_[device];
    auto it = dev.entries.find(key);
    if (it == dev.entries.end()) return;
    if (it->second.pins != 0) ++violations_;  // never evict or drop a pinned tile
    dev.order.erase(it->second.pos);
    dev.entries.erase(it);
    auto r = residency_.find(key);
    if (r != residency_.end()) {
      std::erase(r->second, device);
      if (r->second.empty()) residency_.erase(r);
    }
  }

  void pin_locked(DeviceId device, const TileKey& key) {
    auto& dev = devices_[device];
    if (!dev.tracked) return;
    auto it = dev.entries.find(key);
    if (it == dev.entries.end())
      throw std::logic_error("pin: " + to_string(key) + " not resident on device " +
                             std::to_string(device));
    ++it->second.pins;
  }

  void unpin_locked(DeviceId device, const TileKey& key) {
    auto& dev = devices_[device];
    if (!dev.tracked) return;
    auto it = dev.entries.find(key);
    if (it == dev.entries.end() || it->second.pins == 0)
      throw std::logic_error("unpin: " + to_string(key) + " is not pinned on device " +
                             std::to_string(device));
    --it->second.pins;
  }

  std::vector<std::string> check_locked() const {
    std::vector<std::string> problems;
    std::size_t total = 0;
    for (std::size_t d = 0; d < devices_.size(); ++d) {
      const auto& dev = devices_[d];
      const std::string who = "device " + std::to_string(d) + ": ";
      if (!dev.unbounded() && dev.entries.size() > dev.capacity)
        problems.push_back(who + "over capacity");
      if (dev.order.size() != dev.entries.size())
        problems.push_back(who + "recency list size differs from resident set");
      for (auto it = dev.order.begin(); it != dev.order.end(); ++it) {
        auto e = dev.entries.find(*it);
        if (e == dev.entries.end() || e->second.pos != it)
          problems.push_back(who + "recency list entry " + to_string(*it) + " not indexed");
        auto r = residency_.find(*it);
        if (r == residency_.end() ||
            !std::binary_search(r->second.begin(), r->second.end(), static_cast<DeviceId>(d)))
          problems.push_back(who + to_string(*it) + " missing from residency map");
      }
      total += dev.entries.size();
    }
    std::size_t listed = 0;
    for (const auto& [key, owners] : residency_) {
      listed += owners.size();
      for (DeviceId d : owners)
        if (!devices_[d].entries.contains(key))
          problems.push_back("residency map lists " + to_string(key) + " on device " +
                             std::to_string(d) + " which does not hold it");
    }
    if (listed != total) problems.push_back("residency map size differs from resident sets");
    return problems;
  }

  ProximityMatrix prox_;
  EvictionPolicy policy_;
  bool debug_checks_;
  mutable std::mutex mu_;
  std::vector<DeviceCache> devices_;
  std::vector<CacheCounters> per_device_;
  std::unordered_map<TileKey, std::vector<DeviceId>, TileKeyHash> residency_;
  std::uint64_t violations_ = 0;
};

}  // namespace tilerun
