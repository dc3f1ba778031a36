#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <string>
#include <sys/wait.h>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kDir = fs::temp_directory_path() / "iblab_cli_test";

int run(const std::string& args) {
  std::string cmd = std::string(IBLAB_CLI) + " " + args + " >" + (kDir / "stdout.txt").string() + " 2>&1";
  int st = std::system(cmd.c_str());
  return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

json read(const fs::path& p) {
  std::ifstream in(p);
  return json::parse(in);
}

std::string p(const char* name) { return (kDir / name).string(); }

}  // namespace

TEST_CASE("cli workflow") {
  fs::remove_all(kDir);
  fs::create_directories(kDir);

  REQUIRE(run("gen-data --n 50 --d 3200 --spectrum iso --seed 1 --out " + p("data/run1")) == 0);
  CHECK(fs::exists(kDir / "data/run1.csv"));
  CHECK(fs::exists(kDir / "data/run1.meta.json"));
  CHECK(read(kDir / "data/run1.meta.json")["schema_version"] == "1");

  REQUIRE(run("solve-dual --data " + p("data/run1") + " --loss poly --m 1 --out " + p("sol.json")) == 0);
  json sol = read(kDir / "sol.json");
  CHECK(sol["kkt_residual"].get<double>() <= 1e-8 * sol["mu"].get<double>());
  CHECK(sol["q"].size() == 50);
  CHECK(sol.contains("config_hash"));
  CHECK(sol["schema_version"] == "1");
  CHECK(sol["seed"].is_null());

  REQUIRE(run("mni --data " + p("data/run1") + " --out " + p("mni.json")) == 0);
  CHECK(read(kDir / "mni.json")["residual"].get<double>() <= 1e-8);

  REQUIRE(run("gen-data --n 8 --d 16 --ensemble orthogonal --alpha 1 --seed 3 --out " + p("orth")) == 0);
  REQUIRE(run("train --data " + p("orth") + " --loss logistic --out " + p("tr")) == 0);
  json tr = read(kDir / "tr.json");
  CHECK(fs::exists(kDir / "tr.csv"));
  CHECK(tr["termination"] == "RiskBelowThreshold");

  REQUIRE(run("converse-demo --dvec 1 8 --y 1 -1 --loss poly --m 1 --out " + p("conv.json")) == 0);
  CHECK(read(kDir / "conv.json")["spread"].get<double>() == doctest::Approx(1.0 / 3));

  REQUIRE(run("scaling-sweep --n 10 --ds 40 80 --seeds 1 2 --loss logistic --out " + p("sw")) == 0);
  json sw = read(kDir / "sw.json");
  CHECK(sw["trials"].size() == 4);
  CHECK(fs::exists(kDir / "sw.csv"));
}

TEST_CASE("config file overrides flags and feeds the hash") {
  fs::create_directories(kDir);
  {
    std::ofstream c(kDir / "cfg.json");
    c << R"({"n": 10, "ds": [40, 160], "seeds": [5], "loss": "poly", "m": 2})";
  }
  REQUIRE(run("--config " + p("cfg.json") + " scaling-sweep --n 99 --out " + p("cfg_sw")) == 0);
  json a = read(kDir / "cfg_sw.json");
  CHECK(a["config"]["n"] == "10");
  CHECK(a["config"]["seeds"] == json::array({"5"}));
  CHECK(a["trials"].size() == 2);
  REQUIRE(run("--config " + p("cfg.json") + " scaling-sweep --out " + p("cfg_sw2")) == 0);
  json b = read(kDir / "cfg_sw2.json");
  CHECK(a["config_hash"] != b["config_hash"]);  // output path differs
  CHECK(a["points"] == b["points"]);
}

TEST_CASE("exit codes") {
  fs::create_directories(kDir);
  CHECK(run("--no-such-flag") == 2);
  CHECK(run("gen-data --bogus 3") == 2);
  CHECK(run("frobnicate") == 2);
  CHECK(run("scaling-sweep --n 50 --ds 50 --seeds 1") == 2);
  CHECK(run("gen-data --n 4 --d 3 --ensemble orthogonal --out " + p("x")) == 2);
  CHECK(run("solve-dual --data " + p("missing")) == 2);
  {
    std::ofstream c(kDir / "bad.json");
    c << R"({"nonsense": 1})";
  }
  CHECK(run("--config " + p("bad.json") + " verify") == 2);
  CHECK(run("verify --suite nope") == 2);
  CHECK(run("verify --suite data --out " + p("v.json")) == 0);
  json v = read(kDir / "v.json");
  CHECK(v["failed"] == 0);
  CHECK(v["checks"].size() >= 4);
}
