#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <vector>

#include "tilerun/device.hpp"
#include "tilerun/task_queue.hpp"

namespace tilerun {

struct Reservation {
  TaskId task = 0;
  std::uint64_t seq = 0;  // order in which the station reserved it
};

// Returns true when `a` should be served before `b`. An empty function means
// FIFO service by reservation order.
using PriorityFn = std::function<bool(const Reservation& a, const Reservation& b)>;

// Fixed-width per-device buffer of upcoming tasks. Each slot stands for one
// stream. The owner serves from it, thieves remove from it; a reserved task
// is handed to exactly one of them.
class ReservationStation {
 public:
  ReservationStation(DeviceId owner, std::size_t width)
      : owner_(owner), slots_(width), mu_(std::make_unique<std::mutex>()) {}

  DeviceId owner() const noexcept { return owner_; }
  std::size_t width() const noexcept { return slots_.size(); }

  std::size_t reserved() const {
    std::lock_guard lock(*mu_);
    return count_locked();
  }

  bool full() const { return reserved() == width(); }

  // Work sharing: pull from the global queue until the station is full or
  // the queue is empty. `on_reserve` runs under the station lock before the
  // task becomes visible to thieves.
  template <typename OnReserve>
  std::size_t refill(TaskQueue& queue, OnReserve&& on_reserve) {
    std::lock_guard lock(*mu_);
    std::size_t filled = 0;
    for (auto& slot : slots_) {
      if (slot) continue;
      auto id = queue.dequeue();
      if (!id) break;
      on_reserve(*id);
      slot = Reservation{*id, next_seq_++};
      ++filled;
    }
    return filled;
  }

  std::size_t refill(TaskQueue& queue) {
    return refill(queue, [](TaskId) {});
  }

  // Places a task in a free slot; false when full.
  bool offer(TaskId id) {
    std::lock_guard lock(*mu_);
    for (auto& slot : slots_)
      if (!slot) {
        slot = Reservation{id, next_seq_++};
        return true;
      }
    return false;
  }

  // Owner side: remove the next task to run.
  std::optional<TaskId> take_next(const PriorityFn& priority = {}) {
    std::lock_guard lock(*mu_);
    std::optional<Reservation>* best = nullptr;
    for (auto& slot : slots_) {
      if (!slot) continue;
      if (!best || (priority ? priority(*slot, **best) : slot->seq < (*best)->seq)) best = &slot;
    }
    if (!best) return std::nullopt;
    TaskId id = (*best)->task;
    best->reset();
    return id;
  }

  // Thief side: remove the most recently reserved task, the one the owner
  // would reach last.
  std::optional<TaskId> steal_one() {
    std::lock_guard lock(*mu_);
    std::optional<Reservation>* newest = nullptr;
    for (auto& slot : slots_)
      if (slot && (!newest || slot->seq > (*newest)->seq)) newest = &slot;
    if (!newest) return std::nullopt;
    TaskId id = (*newest)->task;
    newest->reset();
    return id;
  }

  std::vector<TaskId> contents() const {
    std::lock_guard lock(*mu_);
    std::vector<Reservation> r;
    for (const auto& slot : slots_)
      if (slot) r.push_back(*slot);
    std::sort(r.begin(), r.end(), [](auto& a, auto& b) { return a.seq < b.seq; });
    std::vector<TaskId> ids;
    for (const auto& x : r) ids.push_back(x.task);
    return ids;
  }

 private:
  std::size_t count_locked() const {
    return static_cast<std::size_t>(
        std::count_if(slots_.begin(), slots_.end(), [](const auto& s) { return s.has_value(); }));
  }

  DeviceId owner_;
  std::vector<std::optional<Reservation>> slots_;
  std::uint64_t next_seq_ = 0;
  std::unique_ptr<std::mutex> mu_;
};

struct StolenTask {
  TaskId task;
  DeviceId victim;
};

// Takes one reserved task from the station holding the most reservations
// (ties: lowest device id), never from the thief itself. Callers check that
// the global queue is empty first.
inline std::optional<StolenTask> steal(DeviceId thief,
                                       std::span<ReservationStation> stations) {
  for (;;) {
    std::optional<DeviceId> victim;
    std::size_t most = 0;
    for (const auto& s : stations) {
      if (s.owner() == thief) continue;
      const std::size_t n = s.reserved();
      if (n > most) {
        most = n;
        victim = s.owner();
      }
    }
    if (!victim) return std::nullopt;
    for (auto& s : stations)
      if (s.owner() == *victim)
        if (auto id = s.steal_one()) return StolenTask{*id, *victim};
    // The victim drained between the scan and the steal; rescan.
  }
}

}  // namespace tilerun
