#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "padr/config.hpp"
#include "support.hpp"

using namespace padr;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("padr_test_config_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

int run_cli(const std::string& args, const fs::path& dir) {
  const std::string cmd = std::string("\"") + PADR_CLI_PATH + "\" " + args + " > \"" + (dir / "stdout.txt").string() +
                          "\" 2> \"" + (dir / "stderr.txt").string() + "\"";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("parse_config: defaults") {
  const RunConfig cfg = parse_config(json::object());
  CHECK(cfg.smm.T == 10);
  CHECK(cfg.smm.rounds == 10);
  CHECK(cfg.sweep_budget == 20);
  CHECK(cfg.out_dir == "out");
  CHECK(cfg.hyp.d == 1);
}

TEST_CASE("parse_config: unknown and mistyped keys name the offender") {
  const auto message = [](const std::string& text) {
    try {
      parse_config_text(text);
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(message(R"({"smm": {"epsilonn": 1}})").find("smm.epsilonn") != std::string::npos);
  CHECK(message(R"({"colour": 1})").find("colour") != std::string::npos);
  CHECK(message(R"({"smm": {"T": "ten"}})").find("smm.T") != std::string::npos);
  CHECK(message(R"({"smm": {"epsilon": 1, "eps0": 2}})").find("smm.epsilon") != std::string::npos);
  CHECK_THROWS_AS(parse_config_text(R"({"command": "fly"})"), ConfigError);
  CHECK_THROWS_AS(parse_config_text(R"({"cost": {"lambda": -1}})"), ConfigError);
  CHECK_THROWS_AS(parse_config_text(R"({"smm": {"T": 0}})"), ConfigError);
}

TEST_CASE("parse_config: constant epsilon and ranges in both forms") {
  const RunConfig c = parse_config_text(R"({"smm": {"epsilon": 2.5},
      "sweep": {"ranges": {"lambda": [1, 100], "eta": {"lo": 0.001, "hi": 0.1, "log": true}}}})");
  CHECK(c.smm.eps.at(0) == 2.5);
  CHECK(c.smm.eps.at(7) == 2.5);
  CHECK(c.space.lambda.lo == 1.0);
  CHECK(c.space.lambda.hi == 100.0);
  CHECK(c.space.eta.lo == 0.001);
  CHECK(c.space.eta.log);
  CHECK_THROWS_AS(parse_config_text(R"({"sweep": {"ranges": {"eta": [2, 1]}}})"), ConfigError);
  CHECK_THROWS_AS(parse_config_text(R"({"sweep": {"ranges": {"eta": [1]}}})"), ConfigError);
  CHECK_THROWS_AS(parse_config_text(R"({"sweep": {"ranges": {"eta": {"lo": 1}}}})"), ConfigError);
}

TEST_CASE("presets parse and round-trip through config_to_json") {
  for (const auto& name : preset_names()) {
    CAPTURE(name);
    const RunConfig a = parse_config(preset_json(name));
    const RunConfig b = parse_config(json::parse(config_to_json(a).dump()));
    CHECK(config_to_json(a).dump() == config_to_json(b).dump());
    CHECK(a.hyp.d == a.cost.d());
  }
  CHECK(parse_config(preset_json("nv-capacity")).cost.d() == 2);
  CHECK(parse_config(preset_json("nv-basic")).hyp.K1 == 3);
  CHECK_THROWS_AS(preset_json("nv-unknown"), ConfigError);
}

TEST_CASE("merge_json: nested override keeps siblings") {
  json base = {{"smm", {{"T", 10}, {"eta", 0.1}}}, {"seed", 1}};
  merge_json(base, {{"smm", {{"T", 30}}}});
  CHECK(base["smm"]["T"] == 30);
  CHECK(base["smm"]["eta"] == 0.1);
  CHECK(base["seed"] == 1);
}

TEST_CASE("cli: exit codes") {
  const fs::path dir = scratch("exit");
  std::ofstream(dir / "bad.json") << R"({"smm": {"epsilonn": 1}})";
  CHECK(run_cli("--config \"" + (dir / "bad.json").string() + "\" train", dir) == 2);
  CHECK(slurp(dir / "stderr.txt").find("smm.epsilonn") != std::string::npos);
  CHECK(run_cli("--preset nowhere train", dir) == 2);
  CHECK(run_cli("--config \"" + (dir / "missing.json").string() + "\" train", dir) == 2);

  // A dataset whose outcome count does not match the cost is a runtime error.
  std::ofstream(dir / "data.csv") << "x1,y1,y2\n0.1,1,2\n0.2,3,4\n";
  std::ofstream(dir / "run.json") << json{{"paths", {{"data", (dir / "data.csv").string()}, {"out", dir.string()}}}}.dump();
  CHECK(run_cli("--config \"" + (dir / "run.json").string() + "\" train", dir) == 1);
}

TEST_CASE("cli: flags override the file and runs are deterministic") {
  const fs::path dir = scratch("det");
  std::ofstream(dir / "run.json") << R"({"seed": 1, "data": {"n": 60}, "smm": {"T": 3, "rounds": 2}})";
  const std::string base = "--config \"" + (dir / "run.json").string() + "\" --seed 9 --out ";
  REQUIRE(run_cli(base + "\"" + (dir / "a").string() + "\" train", dir) == 0);
  REQUIRE(run_cli(base + "\"" + (dir / "b").string() + "\" train", dir) == 0);
  const json echoed = json::parse(slurp(dir / "a" / "config.json"));
  CHECK(echoed["seed"] == 9);
  CHECK(echoed["smm"]["T"] == 3);
  CHECK(echoed["paths"]["out"] == (dir / "a").string());
  const std::string trace = slurp(dir / "a" / "trace.csv");
  CHECK_FALSE(trace.empty());
  CHECK(trace == slurp(dir / "b" / "trace.csv"));
  CHECK(slurp(dir / "a" / "model.json") == slurp(dir / "b" / "model.json"));
}
