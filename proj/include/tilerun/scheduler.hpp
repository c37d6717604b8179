#pragma once

// Multi-device tiled GEMM runtime.
//
// Every output tile C[i,j] is one task. All tasks go into the global queue
// up front; each device pulls them into its reservation station as slots
// free up (work sharing), and once the queue is empty an idle device takes
// a reserved task from the busiest other station (work stealing). A task
// walks k in ascending order, resolving A[i,k] and B[k,j] through the cache
// directory, and accumulates into its own C tile, which is written back to
// the host-side output when the task completes.
//
// Two execution modes share the task code:
//   sim      - single-threaded discrete-event replay; devices advance
//              simulated clocks and the next decision always goes to the
//              device with the smallest clock (ties: lowest id). Fully
//              deterministic for a given config and seed.
//   threaded - one worker thread per device, real concurrency on the queue,
//              stations and directory.
//
// Each device models three engines: an inbound link (host or peer copies),
// a compute engine, and an outbound link for write-back. A k-step's copies
// may run while the previous step computes, so transfer and compute overlap
// one step deep.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <exception>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "tilerun/cache.hpp"
#include "tilerun/device.hpp"
#include "tilerun/error.hpp"
#include "tilerun/matrix.hpp"
#include "tilerun/station.hpp"
#include "tilerun/task_queue.hpp"
#include "tilerun/tiled_matrix.hpp"

namespace tilerun {

enum class ExecMode { sim, threaded };

inline const char* to_string(ExecMode m) { return m == ExecMode::sim ? "sim" : "threaded"; }

enum class TaskState : std::uint8_t { queued, reserved, running, done };

struct Task {
  TaskId id = 0;
  std::size_t i = 0, j = 0;
  std::size_t k_extent = 0;
};

struct TaskPlan {
  std::size_t grid_rows = 0, grid_cols = 0, k_extent = 0;
  std::vector<Task> tasks;
};

// One task per output tile, ids in row-major order, all enqueued.
template <typename T>
TaskPlan plan(const TiledMatrix<T>& a, const TiledMatrix<T>& b, TaskQueue& queue) {
  if (a.cols() != b.rows())
    throw DimensionError("plan: inner dimensions differ (" + std::to_string(a.cols()) + " vs " +
                         std::to_string(b.rows()) + ")");
  if (a.tile_size() != b.tile_size()) throw DimensionError("plan: tile sizes differ");
  TaskPlan p{a.grid_rows(), b.grid_cols(), a.grid_cols(), {}};
  p.tasks.reserve(p.grid_rows * p.grid_cols);
  for (std::size_t i = 0; i < p.grid_rows; ++i)
    for (std::size_t j = 0; j < p.grid_cols; ++j) {
      const TaskId id = encode_task(i, j, p.grid_cols);
      p.tasks.push_back({id, i, j, p.k_extent});
      queue.enqueue(id);
    }
  return p;
}

// A tiled operand plus the identity its tiles have in the cache. A
// transposed operand holds transposed tiles but keys them by the source
// tile they were made from, so (X^T)[r,c] and X[c,r] are the same cache entry.
template <typename T>
struct TileOperand {
  TiledMatrix<T> tiles;
  MatrixId id = kMatrixA;
  bool transposed = false;

  static TileOperand plain(TiledMatrix<T> tm, MatrixId id) { return {std::move(tm), id, false}; }
  static TileOperand transposed_of(const TiledMatrix<T>& src, MatrixId id) {
    return {transpose_tiles(src), id, true};
  }

  TileKey key(std::size_t r, std::size_t c) const {
    return transposed ? TileKey{id, {c, r}} : TileKey{id, {r, c}};
  }
};

struct RunOptions {
  ExecMode mode = ExecMode::sim;
  bool coherence = true;
  bool steal = true;
  std::uint64_t seed = 0;
  EvictionPolicy eviction = EvictionPolicy::lru;
  // Re-check directory consistency after every admit.
  bool debug_checks = false;
  // When false only the bookkeeping runs; the output stays zero.
  bool compute = true;
  // sim: compute times are scaled by a seeded factor in [1 - jitter, 1 + jitter].
  // threaded: workers yield at random points to shake up interleavings.
  double jitter = 0.0;
  PriorityFn priority;
};

struct DeviceRunStats {
  std::uint64_t tasks_completed = 0;
  std::uint64_t steals_performed = 0;
  std::uint64_t steals_suffered = 0;
  double clock = 0.0;  // simulated completion time
};

struct StealEvent {
  DeviceId thief = 0;
  DeviceId victim = 0;
  TaskId task = 0;
  bool queue_observed_empty = false;
};

struct RunStats {
  ExecMode mode = ExecMode::sim;
  bool coherence = true;
  bool steal = true;
  std::size_t tile_size = 0;
  std::size_t grid_rows = 0, grid_cols = 0, k_extent = 0;
  std::uint64_t tasks = 0;
  CacheStats cache;
  std::vector<DeviceRunStats> devices;
  std::vector<StealEvent> steals;
  std::uint64_t bytes_writeback = 0;
  double makespan = 0.0;
  double wall_seconds = 0.0;
  // Tasks whose execution count ended != 1, illegal state transitions and
  // directory consistency failures. All zero on a correct run.
  std::uint64_t execution_errors = 0;
  std::uint64_t state_violations = 0;
  std::uint64_t invariant_violations = 0;

  std::uint64_t total_tasks_completed() const {
    std::uint64_t n = 0;
    for (const auto& d : devices) n += d.tasks_completed;
    return n;
  }
};

template <typename T>
struct RunResult {
  MatrixBuf<T> c;
  RunStats stats;
};

namespace detail {

struct Timeline {
  double inbound_free = 0.0;
  double outbound_free = 0.0;
  double compute_free = 0.0;
  double ready = 0.0;  // when the device can start issuing its next task

  double finish() const { return std::max(compute_free, outbound_free); }
};

template <typename T>
class Engine {
 public:
  Engine(const DeviceConfig& cfg, const TileOperand<T>& a, const TileOperand<T>& b,
         const RunOptions& opt)
      : cfg_(cfg),
        a_(a),
        b_(b),
        opt_(opt),
        dir_(cfg, opt.eviction, opt.debug_checks),
        out_(a.tiles.rows(), b.tiles.cols(), a.tiles.tile_size()) {
    cfg_.validate();
    plan_ = plan(a_.tiles, b_.tiles, queue_);
    const std::size_t n = plan_.tasks.size();
    state_ = std::vector<std::atomic<std::uint8_t>>(n);
    executions_ = std::vector<std::atomic<std::uint32_t>>(n);
    for (DeviceId d = 0; d < cfg_.size(); ++d) stations_.emplace_back(d, cfg_[d].slots);
    timelines_.resize(cfg_.size());
    dev_stats_.resize(cfg_.size());
    for (DeviceId d = 0; d < cfg_.size(); ++d) rngs_.emplace_back(opt.seed * 1000003u + d);
  }

  RunResult<T> run() {
    const auto t0 = std::chrono::steady_clock::now();
    if (opt_.mode == ExecMode::sim)
      run_sim();
    else
      run_threaded();
    const auto t1 = std::chrono::steady_clock::now();

    RunStats s;
    s.mode = opt_.mode;
    s.coherence = opt_.coherence;
    s.steal = opt_.steal;
    s.tile_size = a_.tiles.tile_size();
    s.grid_rows = plan_.grid_rows;
    s.grid_cols = plan_.grid_cols;
    s.k_extent = plan_.k_extent;
    s.tasks = plan_.tasks.size();
    s.cache = dir_.stats();
    s.devices = dev_stats_;
    for (DeviceId d = 0; d < cfg_.size(); ++d) {
      s.devices[d].clock = timelines_[d].finish();
      s.makespan = std::max(s.makespan, s.devices[d].clock);
    }
    s.steals = steals_;
    s.bytes_writeback = bytes_writeback_;
    s.wall_seconds = std::chrono::duration<double>(t1 - t0).count();
    for (std::size_t t = 0; t < executions_.size(); ++t)
      if (executions_[t].load() != 1 || state_[t].load() != static_cast<std::uint8_t>(TaskState::done))
        ++s.execution_errors;
    s.state_violations = state_violations_.load();
    s.invariant_violations = dir_.invariant_violations();
    if (opt_.debug_checks) s.invariant_violations += dir_.check_invariants().size();
    return {reassemble(out_), std::move(s)};
  }

 private:
  void transition(TaskId id, TaskState from, TaskState to) {
    auto expected = static_cast<std::uint8_t>(from);
    if (!state_[id].compare_exchange_strong(expected, static_cast<std::uint8_t>(to)))
      ++state_violations_;
  }

  void reserve(DeviceId d) {
    stations_[d].refill(queue_, [this](TaskId id) {
      transition(id, TaskState::queued, TaskState::reserved);
    });
  }

  // Next task for device d: own station first, then a steal if the queue
  // was seen empty.
  std::optional<TaskId> next_task(DeviceId d) {
    reserve(d);
    if (auto id = stations_[d].take_next(opt_.priority)) return id;
    if (!opt_.steal) return std::nullopt;
    const bool empty = queue_.empty();
    if (!empty) return std::nullopt;
    auto stolen = steal(d, stations_);
    if (!stolen) return std::nullopt;
    {
      std::lock_guard lock(stats_mu_);
      ++dev_stats_[d].steals_performed;
      ++dev_stats_[stolen->victim].steals_suffered;
      steals_.push_back({d, stolen->victim, stolen->task, empty});
    }
    return stolen->task;
  }

  double fetch_cost(DeviceId d, const CacheDirectory::Acquisition& acq, double bytes) const {
    switch (acq.result.kind) {
      case LookupResult::Kind::l1_hit:
        return 0.0;
      case LookupResult::Kind::l2_hit:
        return transfer_cost(cfg_, acq.result.owner, d, bytes);
      case LookupResult::Kind::miss:
        return transfer_cost(cfg_, kHost, d, bytes);
    }
    return 0.0;
  }

  struct StepTiles {
    TileKey ka, kb;
    CacheDirectory::Acquisition qa, qb;
    double transfer = 0.0;
  };

  StepTiles acquire_step(DeviceId d, const Task& t, std::size_t k) {
    StepTiles s;
    s.ka = a_.key(t.i, k);
    s.kb = b_.key(k, t.j);
    const auto& ta = a_.tiles.tile(t.i, k);
    const auto& tb = b_.tiles.tile(k, t.j);
    s.qa = dir_.acquire(d, s.ka, ta.bytes(), opt_.coherence);
    s.qb = dir_.acquire(d, s.kb, tb.bytes(), opt_.coherence);
    s.transfer = fetch_cost(d, s.qa, static_cast<double>(ta.bytes())) +
                 fetch_cost(d, s.qb, static_cast<double>(tb.bytes()));
    return s;
  }

  void release_step(DeviceId d, const StepTiles& s) {
    dir_.release(d, s.qa, s.ka);
    dir_.release(d, s.qb, s.kb);
  }

  void execute(DeviceId d, TaskId id) {
    transition(id, TaskState::reserved, TaskState::running);
    const Task& t = plan_.tasks[id];
    const DeviceSpec& spec = cfg_[d];
    Timeline& tl = timelines_[d];
    const TileKey kc{kMatrixC, {t.i, t.j}};
    MatrixBuf<T> c(out_.tile_rows(t.i), out_.tile_cols(t.j));
    dir_.hold_output(d, kc);

    // Fetch-ahead needs room for two steps' inputs plus the output tile.
    const bool prefetch = spec.unbounded() || spec.capacity_tiles >= 5;
    const double issue = tl.ready;
    double last_compute_start = issue;
    std::optional<StepTiles> cur = acquire_step(d, t, 0);
    for (std::size_t k = 0; k < t.k_extent; ++k) {
      std::optional<StepTiles> next;
      if (prefetch && k + 1 < t.k_extent) next = acquire_step(d, t, k + 1);

      const auto& ta = a_.tiles.tile(t.i, k);
      const auto& tb = b_.tiles.tile(k, t.j);
      const double in_start = std::max(tl.inbound_free, issue);
      tl.inbound_free = in_start + cur->transfer;
      const double c_start = std::max(tl.compute_free, tl.inbound_free);
      tl.compute_free = c_start + compute_cost(spec, ta.rows(), ta.cols(), tb.cols()) * jitter(d);
      last_compute_start = c_start;
      if (opt_.compute) gemm_accumulate(ta, tb, c, spec.subtile_factor);

      release_step(d, *cur);
      if (k + 1 < t.k_extent) cur = next ? std::move(next) : acquire_step(d, t, k + 1);
    }

    const double out_bytes = static_cast<double>(c.bytes());
    const double wb_start = std::max(tl.outbound_free, tl.compute_free);
    tl.outbound_free = wb_start + transfer_cost(cfg_, kHost, d, out_bytes);
    tl.ready = std::max(tl.inbound_free, last_compute_start);

    out_.tile(t.i, t.j) = std::move(c);
    dir_.drop_output(d, kc);
    executions_[id].fetch_add(1);
    transition(id, TaskState::running, TaskState::done);
    done_.fetch_add(1);
    std::lock_guard lock(stats_mu_);
    ++dev_stats_[d].tasks_completed;
    if (spec.kind == DeviceKind::accelerator) bytes_writeback_ += static_cast<std::uint64_t>(out_bytes);
  }

  double jitter(DeviceId d) {
    if (opt_.mode != ExecMode::sim || opt_.jitter <= 0.0) return 1.0;
    std::uniform_real_distribution<double> u(1.0 - opt_.jitter, 1.0 + opt_.jitter);
    return u(rngs_[d]);
  }

  void run_sim() {
    std::vector<bool> active(cfg_.size(), true);
    for (;;) {
      std::optional<DeviceId> pick;
      for (DeviceId d = 0; d < cfg_.size(); ++d)
        if (active[d] && (!pick || timelines_[d].ready < timelines_[*pick].ready)) pick = d;
      if (!pick) break;
      if (auto id = next_task(*pick))
        execute(*pick, *id);
      else
        active[*pick] = false;  // queue empty and nothing left to steal
    }
  }

  void run_threaded() {
    std::vector<std::thread> workers;
    std::atomic<bool> abort{false};
    std::exception_ptr failure;
    std::mutex failure_mu;
    const std::size_t total = plan_.tasks.size();
    for (DeviceId d = 0; d < cfg_.size(); ++d) {
      workers.emplace_back([&, d] {
        try {
          std::bernoulli_distribution coin(0.5);
          while (!abort.load() && done_.load() < total) {
            if (opt_.jitter > 0.0 && coin(rngs_[d]))
              for (int y = 0; y < 3; ++y) std::this_thread::yield();
            if (auto id = next_task(d))
              execute(d, *id);
            else
              std::this_thread::yield();
          }
        } catch (...) {
          std::lock_guard lock(failure_mu);
          if (!failure) failure = std::current_exception();
          abort.store(true);
        }
      });
    }
    for (auto& w : workers) w.join();
    if (failure) std::rethrow_exception(failure);
  }

  DeviceConfig cfg_;
  const TileOperand<T>& a_;
  const TileOperand<T>& b_;
  RunOptions opt_;
  CacheDirectory dir_;
  TaskQueue queue_;
  TaskPlan plan_;
  TiledMatrix<T> out_;
  std::vector<ReservationStation> stations_;
  std::vector<Timeline> timelines_;
  std::vector<std::mt19937_64> rngs_;
  std::vector<std::atomic<std::uint8_t>> state_;
  std::vector<std::atomic<std::uint32_t>> executions_;
  std::atomic<std::uint64_t> done_{0};
  std::atomic<std::uint64_t> state_violations_{0};
  std::mutex stats_mu_;
  std::vector<DeviceRunStats> dev_stats_;
  std::vector<StealEvent> steals_;
  std::uint64_t bytes_writeback_ = 0;
};

}  // namespace detail

// Runs C = A * B over the devices in `cfg`. Operands must share a tile size.
template <typename T>
RunResult<T> run(const DeviceConfig& cfg, const TileOperand<T>& a, const TileOperand<T>& b,
                 const RunOptions& opt = {}) {
  detail::Engine<T> engine(cfg, a, b, opt);
  return engine.run();
}

template <typename T>
RunResult<T> run(const DeviceConfig& cfg, const MatrixBuf<T>& a, const MatrixBuf<T>& b,
                 std::size_t tile_size, const RunOptions& opt = {}) {
  const auto ta = TileOperand<T>::plain(partition(a, tile_size), kMatrixA);
  const auto tb = TileOperand<T>::plain(partition(b, tile_size), kMatrixB);
  return run(cfg, ta, tb, opt);
}

}  // namespace tilerun
