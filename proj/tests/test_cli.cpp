#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "kschem/cli.hpp"

using namespace kschem;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result cli(std::vector<std::string> args) {
  args.insert(args.begin(), "kschem");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli_main(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("kschem_cli_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t count_lines(const std::string& s) {
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

}  // namespace

TEST_CASE("smoke run") {
  const fs::path dir = temp_dir("run");
  const auto r = cli({"run", "--experiment", "embryonic", "--stepper", "sstli", "--dt", "0.5",
                      "--grid", "50x25", "--seed", "7", "--snapshots", "2", "--out", dir.string()});
  REQUIRE(r.code == 0);
  CHECK(fs::exists(dir / "diagnostics.csv"));
  CHECK(fs::exists(dir / "fields" / "u_final.csv"));
  CHECK(fs::exists(dir / "fields" / "u_0.csv"));
  CHECK(count_lines(slurp(dir / "diagnostics.csv")) == 41);
  CHECK(count_lines(slurp(dir / "fields" / "u_final.csv")) == 1251);
  const auto meta = nlohmann::json::parse(slurp(dir / "meta.json"));
  CHECK(meta["status"] == "completed");
  CHECK(meta["snapshots"].size() == 4);
  CHECK(meta["min_u_final"].get<double>() >= 0);
  fs::remove_all(dir);
}

TEST_CASE("invalid dt exits with a config error") {
  const fs::path dir = temp_dir("bad");
  const auto r = cli({"run", "--dt", "0", "--out", dir.string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("dt") != std::string::npos);
  CHECK(cli({"run", "--grid", "5by5"}).code == 2);
  CHECK(cli({"run", "--no-such-flag"}).code == 2);
  CHECK(cli({"frobnicate"}).code == 2);
  CHECK(cli({"--help"}).code == 0);
}

TEST_CASE("failed run records the step in meta.json") {
  const fs::path dir = temp_dir("fail");
  const fs::path cfg = dir / "cfg.json";
  fs::create_directories(dir);
  std::ofstream(cfg) << R"({"experiment": "embryonic", "grid": "4x4", "T": 1, "dt": 0.5,
                           "solver": {"method": "iterative", "tol": 1e-12, "max_iter": 1}})";
  const auto r = cli({"run", "--config", cfg.string(), "--out", (dir / "o").string()});
  if (r.code != 0) {
    CHECK(r.code == 1);
    const auto meta = nlohmann::json::parse(slurp(dir / "o" / "meta.json"));
    CHECK(meta["status"] == "failed");
    CHECK(meta["error"]["step"].get<long>() >= 1);
  }
  fs::remove_all(dir);
}

TEST_CASE("study table shape") {
  const fs::path dir = temp_dir("study");
  const auto r = cli({"study", "--experiment", "growth_quadratic", "--dts", "0.1,0.05,0.01",
                      "--grid", "10x10", "--T", "0.5", "--threads", "3", "--out", dir.string()});
  REQUIRE(r.code == 0);
  const std::string csv = slurp(dir / "study.csv");
  CHECK(count_lines(csv) == 10);
  CHECK(fs::exists(dir / "orders.csv"));
  CHECK(fs::exists(dir / "fields" / "estli_0.05.csv"));
  const auto meta = nlohmann::json::parse(slurp(dir / "meta.json"));
  CHECK(meta["rows"].size() == 9);
  CHECK(meta["reference"]["dt"].get<double>() == doctest::Approx(0.001));
  fs::remove_all(dir);
}

TEST_CASE("rerun from meta.json is bit-identical") {
  const fs::path a = temp_dir("rerun_a"), b = temp_dir("rerun_b");
  REQUIRE(cli({"run", "--experiment", "volume_filling", "--grid", "12x12", "--T", "0.2", "--dt",
               "0.02", "--stepper", "estli", "--seed", "3", "--out", a.string()})
              .code == 0);
  REQUIRE(cli({"run", "--config", (a / "meta.json").string(), "--out", b.string()}).code == 0);
  CHECK(slurp(a / "fields" / "u_final.csv") == slurp(b / "fields" / "u_final.csv"));
  CHECK(slurp(a / "fields" / "c_final.csv") == slurp(b / "fields" / "c_final.csv"));
  auto strip = [](const nlohmann::json& m) {
    nlohmann::json c = m["config"];
    c.erase("out");
    return c;
  };
  CHECK(strip(nlohmann::json::parse(slurp(a / "meta.json"))) ==
        strip(nlohmann::json::parse(slurp(b / "meta.json"))));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("validate subcommand") {
  const auto r = cli({"validate", "--experiment", "growth_cubic", "--grid", "10x10"});
  CHECK(r.code == 0);
  CHECK(r.out.find("FAIL") == std::string::npos);
  CHECK(r.out.find("ok") != std::string::npos);
}
