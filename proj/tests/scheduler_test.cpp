#include <gtest/gtest.h>

#include <numeric>
#include <set>

#include "tilerun/generate.hpp"
#include "tilerun/scheduler.hpp"

using namespace tilerun;
using M = MatrixBuf<double>;

namespace {

// Compute-bound accelerators for 8x8 tiles: one k-step costs ~1 time unit,
// one host copy ~0.05.
DeviceSpec accel(double flops = 1.0e3, std::size_t capacity = kUnboundedCapacity) {
  DeviceSpec s;
  s.capacity_tiles = capacity;
  s.flops_per_unit = flops;
  s.host_bandwidth = 1.0e4;
  return s;
}

DeviceConfig homogeneous(std::size_t n, std::size_t capacity = kUnboundedCapacity) {
  return DeviceConfig::homogeneous(n, accel(1.0e3, capacity), 4.0e4);
}

DeviceConfig with_throughputs(const std::vector<double>& flops) {
  DeviceConfig cfg = homogeneous(flops.size());
  for (std::size_t d = 0; d < flops.size(); ++d) cfg.devices[d].flops_per_unit = flops[d];
  return cfg;
}

RunOptions sim(std::uint64_t seed = 0) {
  RunOptions o;
  o.mode = ExecMode::sim;
  o.seed = seed;
  return o;
}

RunOptions threaded(std::uint64_t seed = 0) {
  RunOptions o;
  o.mode = ExecMode::threaded;
  o.seed = seed;
  o.jitter = 1.0;
  o.debug_checks = true;
  return o;
}

void expect_clean(const RunStats& s) {
  EXPECT_EQ(s.execution_errors, 0u);
  EXPECT_EQ(s.state_violations, 0u);
  EXPECT_EQ(s.invariant_violations, 0u);
  EXPECT_EQ(s.total_tasks_completed(), s.grid_rows * s.grid_cols);
  EXPECT_EQ(s.cache.total.requests(), 2 * s.grid_rows * s.grid_cols * s.k_extent);
  for (const auto& e : s.steals) EXPECT_TRUE(e.queue_observed_empty);
}

}  // namespace

TEST(Plan, Examples) {
  {
    TaskQueue q;
    const auto p = plan(partition(M(4, 4), 2), partition(M(4, 4), 2), q);
    ASSERT_EQ(p.tasks.size(), 4u);
    for (TaskId id = 0; id < 4; ++id) EXPECT_EQ(q.dequeue(), id);
  }
  {
    TaskQueue q;
    const auto p = plan(partition(M(6, 4), 2), partition(M(4, 6), 2), q);
    EXPECT_EQ(p.tasks.size(), 9u);
    for (const auto& t : p.tasks) EXPECT_EQ(t.k_extent, 2u);
    EXPECT_EQ(p.tasks[5].i, 1u);
    EXPECT_EQ(p.tasks[5].j, 2u);
  }
  {
    TaskQueue q;
    const auto p = plan(partition(M(2, 2), 4), partition(M(2, 2), 4), q);
    ASSERT_EQ(p.tasks.size(), 1u);
    EXPECT_EQ(p.tasks[0].k_extent, 1u);
  }
}

TEST(Plan, RejectsMismatch) {
  TaskQueue q;
  EXPECT_THROW(plan(partition(M(4, 3), 2), partition(M(4, 4), 2), q), DimensionError);
  EXPECT_THROW(plan(partition(M(4, 4), 2), partition(M(4, 4), 4), q), DimensionError);
}

// Task count grows as ceil(batch/T) * ceil(fan_out/T).
TEST(Plan, TaskCountFormula) {
  for (std::size_t batch : {1u, 5u, 16u, 33u})
    for (std::size_t fan_out : {1u, 4u, 9u, 40u})
      for (std::size_t T : {1u, 4u, 8u}) {
        TaskQueue q;
        const auto p = plan(partition(M(batch, 7), T), partition(M(7, fan_out), T), q);
        ASSERT_EQ(p.tasks.size(), ceil_div(batch, T) * ceil_div(fan_out, T));
      }
}

TEST(Execute, SingleTaskMatchesReference) {
  const M a = random_matrix(3, 5, 1), b = random_matrix(5, 2, 2);
  for (auto mode : {ExecMode::sim, ExecMode::threaded}) {
    RunOptions o;
    o.mode = mode;
    const auto r = run(homogeneous(1), a, b, 8, o);
    EXPECT_EQ(r.c, reference_gemm(a, b));
    EXPECT_EQ(r.stats.tasks, 1u);
    expect_clean(r.stats);
  }
}

TEST(Execute, AnyInterleavingMatchesReference) {
  const M a = random_matrix(24, 20, 3), b = random_matrix(20, 24, 4);
  const M ref = reference_gemm(a, b);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto o = sim(seed);
    o.jitter = 0.5;
    const auto rs = run(homogeneous(2), a, b, 8, o);
    EXPECT_EQ(rs.c, ref);
    expect_clean(rs.stats);
    const auto rt = run(homogeneous(2), a, b, 8, threaded(seed));
    EXPECT_EQ(rt.c, ref);
    expect_clean(rt.stats);
  }
}

TEST(Execute, CapacityThreeEvictsAndStaysCorrect) {
  const M a = random_matrix(32, 32, 5), b = random_matrix(32, 32, 6);
  const M ref = reference_gemm(a, b);
  for (auto mode : {ExecMode::sim, ExecMode::threaded}) {
    RunOptions o;
    o.mode = mode;
    o.debug_checks = true;
    const auto r = run(homogeneous(2, 3), a, b, 8, o);
    EXPECT_EQ(r.c, ref);
    EXPECT_GT(r.stats.cache.total.evictions, 0u);
    expect_clean(r.stats);
  }
}

TEST(Execute, PeerFetchesNeverGoToHostWhenResident) {
  const M a = random_matrix(32, 32, 7), b = random_matrix(32, 32, 8);
  const auto r = run(homogeneous(4), a, b, 8, sim());
  // With unbounded capacity each distinct input tile leaves the host once.
  EXPECT_EQ(r.stats.cache.total.host_fetches, 2u * 4 * 4);
  EXPECT_GT(r.stats.cache.total.l2_hits, 0u);
  EXPECT_EQ(r.stats.cache.total.bytes_host, 2u * 4 * 4 * 8 * 8 * sizeof(double));
}

TEST(Run, LinearSpeedupOnIdenticalDevices) {
  const M a(128, 128), b(128, 128);
  RunOptions o = sim();
  o.compute = false;
  const double one = run(homogeneous(1), a, b, 8, o).stats.makespan;
  const double four = run(homogeneous(4), a, b, 8, o).stats.makespan;
  EXPECT_GE(one / four, 3.6);
}

TEST(Run, WorkSharingFollowsThroughput) {
  const M a(256, 256), b(256, 256);
  RunOptions o = sim();
  o.compute = false;
  const auto r = run(with_throughputs({1.0e3, 3.0e3}), a, b, 8, o);
  const double total = static_cast<double>(r.stats.tasks);
  EXPECT_NEAR(static_cast<double>(r.stats.devices[0].tasks_completed), total * 0.25,
              0.1 * total * 0.25);
  EXPECT_NEAR(static_cast<double>(r.stats.devices[1].tasks_completed), total * 0.75,
              0.1 * total * 0.75);
}

TEST(Run, HomogeneousLoadWithinFifteenPercent) {
  for (std::size_t g : {16u, 20u, 32u}) {
    const M a(g * 8, g * 8), b(g * 8, g * 8);
    RunOptions o = sim();
    o.compute = false;
    for (std::size_t n : {2u, 3u, 4u}) {
      const auto r = run(homogeneous(n), a, b, 8, o);
      const double mean = static_cast<double>(r.stats.tasks) / static_cast<double>(n);
      for (const auto& d : r.stats.devices)
        EXPECT_LE(std::abs(static_cast<double>(d.tasks_completed) - mean), 0.15 * mean)
            << "g=" << g << " n=" << n;
    }
  }
}

TEST(Run, ResultIndependentOfDevicesAndSeeds) {
  const M a = random_matrix(40, 30, 9), b = random_matrix(30, 36, 10);
  const M ref = reference_gemm(a, b);
  for (std::size_t n = 1; n <= 4; ++n)
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      auto o = sim(seed);
      o.jitter = 0.3;
      EXPECT_EQ(run(homogeneous(n), a, b, 7, o).c, ref);
      EXPECT_EQ(run(homogeneous(n), a, b, 7, threaded(seed)).c, ref);
    }
}

TEST(Run, SimIsDeterministic) {
  const M a = random_matrix(40, 40, 1), b = random_matrix(40, 40, 2);
  auto o = sim(42);
  o.jitter = 0.4;
  const auto r1 = run(with_throughputs({1e3, 2e3, 3e3}), a, b, 8, o);
  const auto r2 = run(with_throughputs({1e3, 2e3, 3e3}), a, b, 8, o);
  EXPECT_EQ(r1.stats.makespan, r2.stats.makespan);
  EXPECT_EQ(r1.stats.cache.total, r2.stats.cache.total);
  for (std::size_t d = 0; d < 3; ++d)
    EXPECT_EQ(r1.stats.devices[d].tasks_completed, r2.stats.devices[d].tasks_completed);
  EXPECT_EQ(r1.stats.steals.size(), r2.stats.steals.size());
}

TEST(Run, StealsOnlyAfterQueueDrainsAndCanBeDisabled) {
  const M a(64, 64), b(64, 64);
  RunOptions o = sim();
  o.compute = false;
  const auto on = run(with_throughputs({1e3, 8e3}), a, b, 8, o);
  EXPECT_GT(on.stats.steals.size(), 0u);
  for (const auto& e : on.stats.steals) {
    EXPECT_TRUE(e.queue_observed_empty);
    EXPECT_NE(e.thief, e.victim);
  }
  o.steal = false;
  const auto off = run(with_throughputs({1e3, 8e3}), a, b, 8, o);
  EXPECT_TRUE(off.stats.steals.empty());
  expect_clean(off.stats);
  EXPECT_LE(on.stats.makespan, off.stats.makespan);
}

TEST(Run, ExactlyOnceUnderThreadedStress) {
  const M a = random_matrix(40, 24, 11), b = random_matrix(24, 40, 12);
  const M ref = reference_gemm(a, b);
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto r = run(with_throughputs({1e3, 2e3, 3e3, 4e3}), a, b, 8, threaded(seed));
    ASSERT_EQ(r.c, ref) << "seed " << seed;
    ASSERT_EQ(r.stats.execution_errors, 0u);
    ASSERT_EQ(r.stats.state_violations, 0u);
    ASSERT_EQ(r.stats.invariant_violations, 0u);
  }
}

TEST(Run, NoCoherenceFetchesEveryRequest) {
  const std::size_t g = 4;
  const M a(g * 8, g * 8), b(g * 8, g * 8);
  RunOptions o = sim();
  o.coherence = false;
  const auto r = run(homogeneous(2), a, b, 8, o);
  EXPECT_EQ(r.stats.cache.total.host_fetches, 2 * g * g * g);
  EXPECT_EQ(r.stats.cache.total.l1_hits + r.stats.cache.total.l2_hits, 0u);
}

TEST(Run, HostWorkerSubTilingIsBitwiseNeutral) {
  const M a = random_matrix(30, 30, 13, Distribution::float_uniform);
  const M b = random_matrix(30, 30, 14, Distribution::float_uniform);
  const M ref = reference_gemm(a, b);
  for (std::size_t f : {1u, 2u, 4u}) {
    DeviceConfig cfg = homogeneous(2);
    cfg.devices[1].kind = DeviceKind::host_worker;
    cfg.devices[1].subtile_factor = f;
    const auto r = run(cfg, a, b, 8, sim());
    EXPECT_EQ(r.c, ref) << "factor " << f;
    EXPECT_GT(r.stats.devices[1].tasks_completed, 0u);
    expect_clean(r.stats);
  }
}

TEST(Run, FloatRandomWithinTolerance) {
  const M a = random_matrix(50, 45, 15, Distribution::float_uniform);
  const M b = random_matrix(45, 33, 16, Distribution::float_uniform);
  const M ref = reference_gemm(a, b);
  const M c = run(homogeneous(3), a, b, 7, sim()).c;
  for (std::size_t i = 0; i < ref.size(); ++i)
    EXPECT_LE(std::abs(c.data()[i] - ref.data()[i]), 1e-12 * std::abs(ref.data()[i]) + 1e-300);
}

TEST(Run, SinglePrecision) {
  const auto a = convert<float>(random_matrix(20, 20, 1)), b = convert<float>(random_matrix(20, 20, 2));
  EXPECT_EQ(run(homogeneous(2), a, b, 8, sim()).c, reference_gemm(a, b));
}

TEST(Run, CapacityInfeasibleReported) {
  // Two input tiles plus the output tile is the minimum; the config
  // validator rejects anything smaller before the run starts.
  EXPECT_THROW(run(homogeneous(1, 2), M(8, 8), M(8, 8), 4, sim()), ConfigError);
}

// Adding an identical device never makes the simulated makespan worse.
TEST(Run, MakespanMonotoneInDeviceCount) {
  RunOptions o = sim();
  o.compute = false;
  for (std::size_t gr = 1; gr <= 6; ++gr)
    for (std::size_t gc = 1; gc <= 6; ++gc)
      for (std::size_t gk : {1u, 3u}) {
        const M a(gr * 8, gk * 8), b(gk * 8, gc * 8);
        double prev = run(homogeneous(1), a, b, 8, o).stats.makespan;
        for (std::size_t n = 2; n <= 5; ++n) {
          const double cur = run(homogeneous(n), a, b, 8, o).stats.makespan;
          ASSERT_LE(cur, prev * (1 + 1e-12)) << gr << "x" << gc << "x" << gk << " n=" << n;
          prev = cur;
        }
      }
}

TEST(Run, TransposedOperandsShareSourceKeys) {
  const M x = random_matrix(16, 12, 3), y = random_matrix(16, 10, 4);
  const auto px = partition(x, 4), py = partition(y, 4);
  const auto xt = TileOperand<double>::transposed_of(px, kMatrixA);
  const auto yp = TileOperand<double>::plain(py, kMatrixB);
  EXPECT_EQ(xt.key(2, 1), (TileKey{kMatrixA, {1, 2}}));
  const auto r = run(homogeneous(2), xt, yp, sim());
  EXPECT_EQ(r.c, reference_gemm(transpose(x), y));
}
