// tilerun command-line front end.
//
// Exit codes: 0 success, 1 unexpected failure, 2 usage or configuration
// error, 3 capacity-infeasible working set, 4 I/O error.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "tilerun/tilerun.hpp"

namespace {

using namespace tilerun;

enum ExitCode : int { kOk = 0, kFailure = 1, kConfig = 2, kCapacity = 3, kIo = 4 };

void setup_logging() {
  spdlog::set_pattern("[%l] %v");
  spdlog::set_level(spdlog::level::warn);
  if (const char* lvl = std::getenv("TILERUN_LOG"))
    spdlog::set_level(spdlog::level::from_str(lvl));
}

// Four identical accelerators, one hop apart.
DeviceConfig default_devices() {
  DeviceSpec spec;
  spec.capacity_tiles = 256;
  spec.flops_per_unit = 1.0e6;
  spec.host_bandwidth = 1.0e5;
  return DeviceConfig::homogeneous(4, spec, 4.0e5);
}

DeviceConfig devices_from(const std::string& path) {
  if (path.empty()) return default_devices();
  return load_device_config(path);
}

RunOptions run_options(const std::string& mode, const std::string& steal, bool no_coherence,
                       std::uint64_t seed, double jitter, const std::string& eviction) {
  RunOptions opt;
  if (mode == "sim")
    opt.mode = ExecMode::sim;
  else if (mode == "threaded")
    opt.mode = ExecMode::threaded;
  else
    throw ConfigError("--mode must be sim or threaded");
  if (steal != "on" && steal != "off") throw ConfigError("--steal must be on or off");
  opt.steal = steal == "on";
  opt.coherence = !no_coherence;
  opt.seed = seed;
  opt.jitter = jitter;
  if (eviction == "lru")
    opt.eviction = EvictionPolicy::lru;
  else if (eviction == "fifo")
    opt.eviction = EvictionPolicy::fifo;
  else
    throw ConfigError("--eviction must be lru or fifo");
  return opt;
}

std::vector<std::size_t> parse_list(const std::string& s, const char* what) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t pos = 0;
      const long long v = std::stoll(item, &pos);
      if (pos != item.size() || v < 0) throw std::invalid_argument(item);
      out.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw ConfigError(std::string(what) + ": bad list entry '" + item + "'");
    }
  }
  if (out.empty()) throw ConfigError(std::string(what) + ": empty list");
  return out;
}

struct GemmArgs {
  std::string a, b, out, devices, report, csv;
  std::string mode = "sim", steal = "on", precision = "f64", eviction = "lru";
  std::size_t tile_size = 64;
  std::uint64_t seed = 0;
  double jitter = 0.0;
  bool no_coherence = false;
};

template <typename T>
RunResult<T> gemm_as(const DeviceConfig& cfg, const MatrixBuf<double>& a,
                     const MatrixBuf<double>& b, const GemmArgs& g, const RunOptions& opt) {
  return run(cfg, convert<T>(a), convert<T>(b), g.tile_size, opt);
}

int cmd_gemm(const GemmArgs& g) {
  const DeviceConfig cfg = devices_from(g.devices);
  const RunOptions opt = run_options(g.mode, g.steal, g.no_coherence, g.seed, g.jitter, g.eviction);
  if (g.tile_size == 0) throw ConfigError("--tile-size must be >= 1");
  const auto a = io::load(g.a);
  const auto b = io::load(g.b);
  spdlog::info("gemm {}x{} * {}x{}, T={}, {} devices, mode {}", a.rows(), a.cols(), b.rows(),
               b.cols(), g.tile_size, cfg.size(), g.mode);

  MatrixBuf<double> c;
  RunStats stats;
  if (g.precision == "f64") {
    auto r = gemm_as<double>(cfg, a, b, g, opt);
    c = std::move(r.c);
    stats = std::move(r.stats);
  } else if (g.precision == "f32") {
    auto r = gemm_as<float>(cfg, a, b, g, opt);
    c = convert<double>(r.c);
    stats = std::move(r.stats);
  } else {
    throw ConfigError("--precision must be f64 or f32");
  }

  if (!g.out.empty()) io::save(g.out, c);
  const auto report = to_json(stats, cfg);
  if (!g.report.empty()) write_json_file(g.report, report);
  if (!g.csv.empty()) {
    std::ofstream out(g.csv);
    if (!out) throw IoError("cannot open " + g.csv);
    write_csv(out, stats);
  }
  spdlog::info("makespan {} host_fetches {} l2_hits {} l1_hits {}", stats.makespan,
               stats.cache.total.host_fetches, stats.cache.total.l2_hits,
               stats.cache.total.l1_hits);
  if (g.report.empty() && g.csv.empty()) write_csv(std::cout, stats);
  return kOk;
}

struct GenArgs {
  std::size_t rows = 0, cols = 0;
  std::uint64_t seed = 0;
  std::string dist = "int", out;
};

int cmd_gen(const GenArgs& g) {
  if (g.rows == 0 || g.cols == 0) throw ConfigError("--rows and --cols must be >= 1");
  io::save(g.out, random_matrix(g.rows, g.cols, g.seed, parse_distribution(g.dist)));
  return kOk;
}

struct AnnArgs {
  std::string layers = "2,8,1", backend = "tiled", devices, report, loss_csv, mode = "sim";
  std::string activation = "sigmoid", dataset = "xor";
  std::size_t batch = 4, steps = 2000, tile_size = 4, bench_repeats = 10;
  double lr = 0.5;
  std::uint64_t seed = 0;
  bool no_bias = false;
};

int cmd_ann(const AnnArgs& g) {
  const auto widths = parse_list(g.layers, "--layers");
  if (widths.size() < 2) throw ConfigError("--layers needs at least input and output widths");
  if (g.batch == 0) throw ConfigError("--batch must be >= 1");
  auto net = ann::Network<double>::make(widths, ann::parse_activation(g.activation), g.seed,
                                        !g.no_bias);

  std::pair<MatrixBuf<double>, MatrixBuf<double>> data;
  if (g.dataset == "xor") {
    if (widths.front() != 2 || widths.back() != 1)
      throw ConfigError("xor dataset needs 2 inputs and 1 output");
    data = ann::xor_dataset<double>(g.batch);
  } else if (g.dataset == "regression") {
    data = ann::regression_dataset<double>(g.batch, widths.front(), widths.back(), g.seed + 1);
  } else {
    throw ConfigError("--dataset must be xor or regression");
  }
  const auto& [X, Y] = data;

  std::unique_ptr<ann::GemmBackend<double>> gemm;
  DeviceConfig cfg;
  if (g.backend == "dense") {
    gemm = std::make_unique<ann::DenseBackend<double>>();
  } else if (g.backend == "tiled") {
    cfg = devices_from(g.devices);
    gemm = std::make_unique<ann::TiledBackend<double>>(
        cfg, g.tile_size, run_options(g.mode, "on", false, g.seed, 0.0, "lru"));
  } else {
    throw ConfigError("--backend must be tiled or dense");
  }

  std::ofstream loss_file;
  std::ostream* loss_out = &std::cout;
  if (!g.loss_csv.empty()) {
    loss_file.open(g.loss_csv);
    if (!loss_file) throw IoError("cannot open " + g.loss_csv);
    loss_out = &loss_file;
  }
  *loss_out << "step,loss\n";
  *loss_out << std::setprecision(17);
  std::vector<double> losses;
  for (std::size_t s = 0; s < g.steps; ++s) {
    losses.push_back(ann::train_step(net, X, Y, g.lr, *gemm));
    *loss_out << s << ',' << losses.back() << '\n';
  }
  const double final_loss = ann::loss(net, X, Y, *gemm);
  const double pass = g.bench_repeats ? ann::bench_pass(net, X, Y, *gemm, g.bench_repeats) : 0.0;
  spdlog::info("final loss {} after {} steps", final_loss, g.steps);

  if (!g.report.empty()) {
    nlohmann::json j{{"schema_version", kReportSchemaVersion},
                     {"layers", widths},
                     {"batch", g.batch},
                     {"steps", g.steps},
                     {"lr", g.lr},
                     {"seed", g.seed},
                     {"backend", g.backend},
                     {"bias", !g.no_bias},
                     {"final_loss", final_loss},
                     {"losses", losses},
                     {"gemm_products", gemm->products()},
                     {"bench_repeats", g.bench_repeats},
                     {"bench_pass_mean", pass}};
    if (auto* tiled = dynamic_cast<ann::TiledBackend<double>*>(gemm.get())) {
      j["tile_size"] = tiled->tile_size();
      j["mode"] = g.mode;
      j["tasks_planned"] = tiled->tasks_planned();
      j["devices"] = to_json(cfg);
    }
    write_json_file(g.report, j);
  }
  return kOk;
}

struct SweepArgs {
  std::string sizes = "64,128,256,512,1024", counts = "1,2,4", devices, out;
  std::size_t tile_size = 64;
  bool no_coherence = false;
  std::string steal = "on";
  std::uint64_t seed = 0;
};

int cmd_sweep(const SweepArgs& g) {
  SweepSpec spec;
  spec.sizes = parse_list(g.sizes, "--sizes");
  spec.device_counts = parse_list(g.counts, "--device-counts");
  spec.tile_size = g.tile_size;
  if (spec.tile_size == 0) throw ConfigError("--tile-size must be >= 1");
  spec.coherence = !g.no_coherence;
  spec.steal = g.steal == "on";
  spec.seed = g.seed;
  if (!g.devices.empty()) {
    // The first device is the template; peer bandwidth comes from the 0-1 link.
    const auto cfg = load_device_config(g.devices);
    spec.device = cfg.devices.front();
    spec.transfer_latency = cfg.transfer_latency;
    if (cfg.size() > 1) spec.peer_bandwidth = cfg.proximity.peer_bandwidth[0][1];
  }

  std::ofstream file;
  std::ostream* out = &std::cout;
  if (!g.out.empty()) {
    file.open(g.out);
    if (!file) throw IoError("cannot open " + g.out);
    out = &file;
  }
  write_sweep_header(*out);
  sweep(spec, [&](const SweepRow& r) {
    write_sweep_row(*out, r);
    out->flush();
  });
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"Tiled multi-device GEMM runtime over simulated devices"};
  app.require_subcommand(1);

  GemmArgs gemm;
  auto* g = app.add_subcommand("gemm", "Multiply two matrix files");
  g->add_option("--a", gemm.a, "Left operand file")->required();
  g->add_option("--b", gemm.b, "Right operand file")->required();
  g->add_option("--out", gemm.out, "Output matrix file (.bin for binary)");
  g->add_option("--tile-size", gemm.tile_size, "Tile edge T");
  g->add_option("--devices", gemm.devices, "Device configuration (JSON)");
  g->add_option("--mode", gemm.mode, "sim or threaded");
  g->add_option("--seed", gemm.seed, "Seed for jitter");
  g->add_option("--jitter", gemm.jitter, "Schedule perturbation strength");
  g->add_option("--report", gemm.report, "JSON report path");
  g->add_option("--csv", gemm.csv, "Per-device CSV path");
  g->add_flag("--no-coherence", gemm.no_coherence, "Fetch every input tile from the host");
  g->add_option("--steal", gemm.steal, "on or off");
  g->add_option("--precision", gemm.precision, "f64 or f32");
  g->add_option("--eviction", gemm.eviction, "lru or fifo");

  GenArgs gen;
  auto* n = app.add_subcommand("gen", "Generate a random matrix file");
  n->add_option("--rows", gen.rows)->required();
  n->add_option("--cols", gen.cols)->required();
  n->add_option("--seed", gen.seed);
  n->add_option("--dist", gen.dist, "int (uniform in [-4,4]) or float (uniform in [-1,1))");
  n->add_option("--out", gen.out)->required();

  AnnArgs annargs;
  auto* a = app.add_subcommand("ann", "Train a small fully-connected network");
  a->add_option("--layers", annargs.layers, "Comma-separated widths, e.g. 2,8,1");
  a->add_option("--batch", annargs.batch);
  a->add_option("--steps", annargs.steps);
  a->add_option("--lr", annargs.lr);
  a->add_option("--seed", annargs.seed);
  a->add_option("--backend", annargs.backend, "tiled or dense");
  a->add_option("--devices", annargs.devices, "Device configuration (JSON)");
  a->add_option("--tile-size", annargs.tile_size);
  a->add_option("--mode", annargs.mode, "sim or threaded");
  a->add_flag("--no-bias", annargs.no_bias, "Layers without bias vectors");
  a->add_option("--activation", annargs.activation, "sigmoid, relu or identity");
  a->add_option("--dataset", annargs.dataset, "xor or regression");
  a->add_option("--bench-repeats", annargs.bench_repeats, "Passes averaged for timing");
  a->add_option("--report", annargs.report, "JSON report path");
  a->add_option("--loss-csv", annargs.loss_csv, "Per-step loss CSV (default stdout)");

  SweepArgs sw;
  auto* s = app.add_subcommand("sweep", "Scaling table over sizes and device counts (sim)");
  s->add_option("--sizes", sw.sizes, "Comma-separated square sizes");
  s->add_option("--device-counts", sw.counts, "Comma-separated device counts");
  s->add_option("--tile-size", sw.tile_size);
  s->add_option("--devices", sw.devices, "Config whose first device is replicated");
  s->add_flag("--no-coherence", sw.no_coherence);
  s->add_option("--steal", sw.steal, "on or off");
  s->add_option("--seed", sw.seed);
  s->add_option("--out", sw.out, "CSV path (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }

  try {
    if (*g) return cmd_gemm(gemm);
    if (*n) return cmd_gen(gen);
    if (*a) return cmd_ann(annargs);
    if (*s) return cmd_sweep(sw);
  } catch (const ConfigError& e) {
    spdlog::error("{}", e.what());
    return kConfig;
  } catch (const DimensionError& e) {
    spdlog::error("{}", e.what());
    return kConfig;
  } catch (const CapacityError& e) {
    spdlog::error("{}", e.what());
    return kCapacity;
  } catch (const IoError& e) {
    spdlog::error("{}", e.what());
    return kIo;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kFailure;
  }
  return kFailure;
}
