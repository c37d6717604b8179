#include <gtest/gtest.h>

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "tilerun/matrix_io.hpp"

namespace fs = std::filesystem;
using namespace tilerun;

namespace {

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("tilerun_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  // Runs the binary with stdout sent to `stdout_file` (or discarded) and
  // returns its exit status.
  int run(const std::string& args, const std::string& stdout_file = "") const {
    const std::string out = stdout_file.empty() ? "/dev/null" : stdout_file;
    const std::string cmd = std::string(TILERUN_CLI) + " " + args + " > " + out + " 2>/dev/null";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  }

  static std::string slurp(const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, GenIsDeterministic) {
  ASSERT_EQ(run("gen --rows 9 --cols 5 --seed 4 --out " + path("a.txt")), 0);
  ASSERT_EQ(run("gen --rows 9 --cols 5 --seed 4 --out " + path("b.txt")), 0);
  ASSERT_EQ(run("gen --rows 9 --cols 5 --seed 5 --out " + path("c.txt")), 0);
  EXPECT_EQ(slurp(path("a.txt")), slurp(path("b.txt")));
  EXPECT_NE(slurp(path("a.txt")), slurp(path("c.txt")));
  const auto m = io::load(path("a.txt"));
  EXPECT_EQ(m.rows(), 9u);
  EXPECT_EQ(m.cols(), 5u);
}

TEST_F(Cli, GemmMatchesReferenceInTextAndBinary) {
  ASSERT_EQ(run("gen --rows 21 --cols 13 --seed 1 --out " + path("a.txt")), 0);
  ASSERT_EQ(run("gen --rows 13 --cols 17 --seed 2 --out " + path("b.bin")), 0);
  const auto expect = reference_gemm(io::load(path("a.txt")), io::load(path("b.bin")));
  for (const char* mode : {"sim", "threaded"}) {
    for (const char* out : {"c.txt", "c.bin"}) {
      ASSERT_EQ(run("gemm --a " + path("a.txt") + " --b " + path("b.bin") + " --tile-size 4 --mode " +
                    mode + " --out " + path(out) + " --csv " + path("run.csv")),
                0);
      EXPECT_EQ(io::load(path(out)), expect) << mode << " " << out;
    }
  }
}

TEST_F(Cli, ReportCountsAndSimReproducibility) {
  ASSERT_EQ(run("gen --rows 32 --cols 32 --seed 1 --out " + path("a.txt")), 0);
  ASSERT_EQ(run("gen --rows 32 --cols 32 --seed 2 --out " + path("b.txt")), 0);
  const std::string base = "gemm --a " + path("a.txt") + " --b " + path("b.txt") + " --tile-size 8 ";
  ASSERT_EQ(run(base + "--report " + path("r1.json")), 0);
  ASSERT_EQ(run(base + "--report " + path("r2.json")), 0);
  EXPECT_EQ(slurp(path("r1.json")), slurp(path("r2.json")));

  ASSERT_EQ(run(base + "--no-coherence --report " + path("r3.json")), 0);
  const auto j = nlohmann::json::parse(slurp(path("r3.json")));
  EXPECT_EQ(j.at("cache").at("host_fetches").get<int>(), 2 * 4 * 4 * 4);
  EXPECT_EQ(j.at("tasks").get<int>(), 16);
  EXPECT_FALSE(j.contains("wall_seconds"));
}

TEST_F(Cli, CsvToStdoutWhenNoReportGiven) {
  ASSERT_EQ(run("gen --rows 8 --cols 8 --seed 1 --out " + path("a.txt")), 0);
  ASSERT_EQ(run("gemm --a " + path("a.txt") + " --b " + path("a.txt") + " --tile-size 4",
                path("stdout.csv")),
            0);
  const auto text = slurp(path("stdout.csv"));
  EXPECT_EQ(text.rfind("device,", 0), 0u);
  EXPECT_NE(text.find("\ntotal,"), std::string::npos);
}

TEST_F(Cli, ExitCodes) {
  ASSERT_EQ(run("gen --rows 4 --cols 3 --seed 1 --out " + path("a.txt")), 0);
  // Missing input file.
  EXPECT_EQ(run("gemm --a " + path("missing.txt") + " --b " + path("a.txt")), 4);
  // Inner dimensions disagree.
  EXPECT_EQ(run("gemm --a " + path("a.txt") + " --b " + path("a.txt")), 2);
  // Malformed device config.
  {
    std::ofstream(path("bad.json")) << R"({"devices": [{"capacity_tiles": 2}]})";
  }
  ASSERT_EQ(run("gen --rows 3 --cols 4 --seed 1 --out " + path("b.txt")), 0);
  EXPECT_EQ(run("gemm --a " + path("a.txt") + " --b " + path("b.txt") + " --devices " + path("bad.json")), 2);
  {
    std::ofstream(path("garbage.json")) << "{ not json";
  }
  EXPECT_EQ(run("gemm --a " + path("a.txt") + " --b " + path("b.txt") + " --devices " + path("garbage.json")), 2);
  // Usage errors.
  EXPECT_EQ(run("gemm --a " + path("a.txt")), 2);
  EXPECT_EQ(run(""), 2);
  EXPECT_EQ(run("gemm --a " + path("a.txt") + " --b " + path("b.txt") + " --mode fast"), 2);
}

TEST_F(Cli, DeviceConfigFileIsHonoured) {
  {
    std::ofstream(path("devs.json")) << R"({
      "devices": [
        {"kind": "accelerator", "capacity_tiles": 8, "flops_per_unit": 1000, "host_bandwidth": 10000},
        {"kind": "host-worker", "capacity_tiles": "unbounded", "flops_per_unit": 500, "host_bandwidth": 10000}
      ],
      "proximity": {"hops": [[0, 1], [1, 0]], "peer_bandwidth": 40000}
    })";
  }
  ASSERT_EQ(run("gen --rows 24 --cols 24 --seed 1 --out " + path("a.txt")), 0);
  ASSERT_EQ(run("gemm --a " + path("a.txt") + " --b " + path("a.txt") + " --tile-size 4 --devices " +
                path("devs.json") + " --report " + path("r.json") + " --out " + path("c.txt")),
            0);
  const auto j = nlohmann::json::parse(slurp(path("r.json")));
  EXPECT_EQ(j.at("devices").size(), 2u);
  EXPECT_EQ(j.at("devices").at(1).at("kind"), "host-worker");
  const auto a = io::load(path("a.txt"));
  EXPECT_EQ(io::load(path("c.txt")), reference_gemm(a, a));
}

TEST_F(Cli, SweepIsByteReproducible) {
  const std::string args = "sweep --sizes 64,128,256 --device-counts 1,2,4 --out ";
  ASSERT_EQ(run(args + path("s1.csv")), 0);
  ASSERT_EQ(run(args + path("s2.csv")), 0);
  const auto text = slurp(path("s1.csv"));
  EXPECT_EQ(text, slurp(path("s2.csv")));
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 1 + 9);
}

TEST_F(Cli, AnnTiledAndDenseLossCurvesAgree) {
  const std::string args = "ann --layers 2,8,1 --steps 50 --seed 3 --bench-repeats 1 --backend ";
  ASSERT_EQ(run(args + "tiled --tile-size 2", path("tiled.csv")), 0);
  ASSERT_EQ(run(args + "dense", path("dense.csv")), 0);
  const auto tiled = slurp(path("tiled.csv"));
  EXPECT_EQ(tiled.rfind("step,loss\n", 0), 0u);
  EXPECT_EQ(std::count(tiled.begin(), tiled.end(), '\n'), 51);
  EXPECT_EQ(tiled, slurp(path("dense.csv")));
}
