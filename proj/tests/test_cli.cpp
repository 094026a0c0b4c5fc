#include "testing.hpp"

#include "vseg/evaluation.hpp"
#include "vseg/unet.hpp"

#include <doctest.h>
#include <json.hpp>
#include <sys/wait.h>

#include <fstream>
#include <sstream>

using vseg::testing::TempDir;

namespace {

int vseg_cli(const std::string& args, const std::filesystem::path& log) {
  const std::string cmd = std::string(VSEG_CLI) + " " + args + " > '" + log.string() + "' 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string q(const std::filesystem::path& p) { return "'" + p.string() + "'"; }

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("exit codes") {
    TempDir dir("cli");
    const auto log = dir / "log.txt";
    CHECK(vseg_cli("--help", log) == 0);
    CHECK(vseg_cli("segment --no-such-flag", log) == 2);
    CHECK(vseg_cli("frobnicate", log) == 2);
    CHECK(vseg_cli("segment -i " + q(dir / "missing.tif") + " -o " + q(dir / "o") + " -w " + q(dir / "w"), log) == 3);
    CHECK(slurp(log).find("[load]") != std::string::npos);
    std::ofstream(dir / "bad.json") << R"({"search_radius": 10, "colour": 1})";
    CHECK(vseg_cli("segment --config " + q(dir / "bad.json") + " -i x.tif", log) == 2);
    CHECK(vseg_cli("segment -i x.tif --threshold 2", log) == 2);
  }

  TEST_CASE("simulate is deterministic and feeds the other subcommands") {
    TempDir dir("cli");
    const auto log = dir / "log.txt";
    REQUIRE(vseg_cli("simulate --seed 7 --frames 100 --out " + q(dir / "a"), log) == 0);
    REQUIRE(vseg_cli("simulate --seed 7 --frames 100 --out " + q(dir / "b"), log) == 0);
    for (const char* f : {"video.vsegv1", "gt.json", "footprints.tif", "segmask.tif"}) {
      CHECK(slurp(dir / "a" / f) == slurp(dir / "b" / f));
    }

    REQUIRE(vseg_cli("evaluate --pred " + q(dir / "a" / "footprints.tif") + " --gt " + q(dir / "a" / "gt.json") +
                         " -o " + q(dir / "report.json") + " --overlay " + q(dir / "overlay.png"),
                     log) == 0);
    const auto report = nlohmann::json::parse(std::ifstream(dir / "report.json"));
    CHECK(report["f1"] == 1.0);
    CHECK(std::filesystem::exists(dir / "overlay.png"));

    vseg::save_weights(vseg::random_weights(2), dir / "w.vsegw1");
    REQUIRE(vseg_cli("segment -i " + q(dir / "a" / "video.vsegv1") + " -w " + q(dir / "w.vsegw1") + " -o " +
                         q(dir / "seg") + " --stages motion,segment",
                     log) == 0);
    CHECK(std::filesystem::exists(dir / "seg" / "footprints.tif"));
    CHECK(!std::filesystem::exists(dir / "seg" / "traces.csv"));

    REQUIRE(vseg_cli("trace -i " + q(dir / "a" / "video.vsegv1") + " -m " + q(dir / "a" / "footprints.tif") +
                         " -o " + q(dir / "tr"),
                     log) == 0);
    CHECK(std::filesystem::exists(dir / "tr" / "traces.csv"));
  }

  TEST_CASE("bench reports stage-consistent throughput") {
    TempDir dir("cli");
    const auto log = dir / "log.txt";
    REQUIRE(vseg_cli("bench --frames 300 --size 96 --batch -o " + q(dir / "b") + " --report " + q(dir / "t.json"),
                     log) == 0);
    const auto t = nlohmann::json::parse(std::ifstream(dir / "t.json"));
    REQUIRE(t.contains("realtime_ratio"));
    CHECK(t["frames"] == 300);
    double sum = 0.0;
    for (const auto& [name, seconds] : t["stages"].items()) sum += seconds.get<double>();
    const double total = t["total_seconds"].get<double>();
    CHECK(std::abs(sum - total) <= 0.05 * total);
  }
}
