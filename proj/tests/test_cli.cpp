// End-to-end checks of the command-line surface. argv[1] = CLI binary path.
#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string g_cli;

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("mesofolio_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

int run_cli(const std::string& args) {
  const std::string invocation = "\"" + g_cli + "\" " + args + " > /dev/null 2>&1";
  return std::system(invocation.c_str());
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path);
  out << content;
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  json j;
  in >> j;
  return j;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream content;
  content << in.rdbuf();
  return content.str();
}

}  // namespace

TEST_CASE("synth then filter produces decomposition artifacts") {
  const fs::path dir = fresh_dir("filter");
  write_file(dir / "config.json",
             "{\"seed\": 5, \"out\": \"" + (dir / "out").string() +
                 "\", \"input\": {\"path\": \"" + (dir / "out" / "prices.csv").string() +
                 "\"}, \"synth\": {\"n_assets\": 30, \"n_obs\": 400, "
                 "\"blocks\": [[15, 0.4], [15, 0.4]], \"market_loading\": 0.5}}");
  REQUIRE(run_cli("--config \"" + (dir / "config.json").string() + "\" synth") == 0);
  REQUIRE(run_cli("--config \"" + (dir / "config.json").string() + "\" filter") == 0);
  for (const char* name : {"correlation.csv", "c_random.csv", "c_mesoscopic.csv",
                           "c_market.csv", "eigenvalues.csv", "filter_summary.json",
                           "config_resolved.json", "config_hash.txt"})
    CHECK(fs::exists(dir / "out" / name));
  const json summary = read_json(dir / "out" / "filter_summary.json");
  CHECK(summary.at("indices").at("market").size() == 1);
  CHECK(summary.at("indices").at("mesoscopic").size() >= 1);
}

TEST_CASE("filter on a structure-free panel reports empty structural sets") {
  const fs::path dir = fresh_dir("noise");
  write_file(dir / "config.json",
             "{\"seed\": 1, \"out\": \"" + (dir / "out").string() +
                 "\", \"input\": {\"path\": \"" + (dir / "out" / "prices.csv").string() +
                 "\"}, \"synth\": {\"n_assets\": 20, \"n_obs\": 600, "
                 "\"blocks\": [[20, 0.0]], \"market_loading\": 0.0}}");
  REQUIRE(run_cli("--config \"" + (dir / "config.json").string() + "\" synth") == 0);
  REQUIRE(run_cli("--config \"" + (dir / "config.json").string() + "\" filter") == 0);
  const json summary = read_json(dir / "out" / "filter_summary.json");
  CHECK(summary.at("indices").at("market").empty());
  CHECK(summary.at("indices").at("mesoscopic").empty());
  // and communities must then fail with a nonzero exit plus an error record
  CHECK(run_cli("--config \"" + (dir / "config.json").string() + "\" communities") != 0);
  CHECK(fs::exists(dir / "out" / "error.json"));
}

TEST_CASE("kappa <= 1 input fails with a machine-readable error record") {
  const fs::path dir = fresh_dir("kappa");
  write_file(dir / "config.json",
             "{\"seed\": 7, \"out\": \"" + (dir / "out").string() +
                 "\", \"input\": {\"path\": \"" + (dir / "out" / "prices.csv").string() +
                 "\"}, \"synth\": {\"n_assets\": 50, \"n_obs\": 40, "
                 "\"blocks\": [[50, 0.0]], \"market_loading\": 0.0}}");
  REQUIRE(run_cli("--config \"" + (dir / "config.json").string() + "\" synth") == 0);
  CHECK(run_cli("--config \"" + (dir / "config.json").string() + "\" filter") != 0);
  const json error = read_json(dir / "out" / "error.json");
  CHECK(error.at("error").get<std::string>().find("kappa") != std::string::npos);
}

TEST_CASE("MESOFOLIO_SEED provides the default seed, flag overrides") {
  const fs::path dir = fresh_dir("seed");
  const std::string synth_cfg =
      "\"synth\": {\"n_assets\": 10, \"n_obs\": 50, \"blocks\": [[10, 0.2]], "
      "\"market_loading\": 0.3}";
  write_file(dir / "config.json", "{" + synth_cfg + "}");
  const std::string cfg_flag = "--config \"" + (dir / "config.json").string() + "\"";

  REQUIRE(std::system(("MESOFOLIO_SEED=42 \"" + g_cli + "\" " + cfg_flag + " --out \"" +
                       (dir / "env").string() + "\" synth > /dev/null 2>&1")
                          .c_str()) == 0);
  REQUIRE(run_cli(cfg_flag + " --seed 42 --out \"" + (dir / "flag").string() + "\" synth") == 0);
  REQUIRE(run_cli(cfg_flag + " --seed 43 --out \"" + (dir / "other").string() + "\" synth") == 0);

  CHECK(read_file(dir / "env" / "prices.csv") == read_file(dir / "flag" / "prices.csv"));
  CHECK(read_file(dir / "env" / "prices.csv") != read_file(dir / "other" / "prices.csv"));

  REQUIRE(std::system(("MESOFOLIO_SEED=99 \"" + g_cli + "\" " + cfg_flag + " --seed 42 --out \"" +
                       (dir / "both").string() + "\" synth > /dev/null 2>&1")
                          .c_str()) == 0);
  CHECK(read_file(dir / "both" / "prices.csv") == read_file(dir / "flag" / "prices.csv"));
}

TEST_CASE("the echoed resolved config reproduces the run") {
  const fs::path dir = fresh_dir("echo");
  write_file(dir / "config.json",
             "{\"seed\": 12, \"out\": \"" + (dir / "a").string() +
                 "\", \"synth\": {\"n_assets\": 15, \"n_obs\": 80, "
                 "\"blocks\": [[15, 0.25]], \"market_loading\": 0.4}}");
  REQUIRE(run_cli("--config \"" + (dir / "config.json").string() + "\" synth") == 0);
  REQUIRE(run_cli("--config \"" + (dir / "a" / "config_resolved.json").string() +
                  "\" --out \"" + (dir / "b").string() + "\" synth") == 0);
  CHECK(read_file(dir / "a" / "prices.csv") == read_file(dir / "b" / "prices.csv"));
}

TEST_CASE("backtest rolling spans derive midpoint-split windows") {
  const fs::path dir = fresh_dir("rolling");
  write_file(dir / "config.json",
             "{\"seed\": 9, \"out\": \"" + (dir / "out").string() +
                 "\", \"input\": {\"path\": \"" + (dir / "out" / "prices.csv").string() +
                 "\"}, \"synth\": {\"n_assets\": 20, \"n_obs\": 800, "
                 "\"blocks\": [[10, 0.4], [10, 0.4]], \"market_loading\": 0.5}, "
                 "\"backtest\": {\"rolling\": {\"length\": 400, \"step\": 200}, "
                 "\"strategies\": [\"equal\", \"mesoscopic\"]}}");
  REQUIRE(run_cli("--config \"" + (dir / "config.json").string() + "\" synth") == 0);
  REQUIRE(run_cli("--config \"" + (dir / "config.json").string() + "\" backtest") == 0);
  const json report = read_json(dir / "out" / "backtest.json");
  // spans [0,400), [200,600), [400,800) -> 3 windows x 2 strategies
  CHECK(report.at("rows").size() == 6);
  CHECK(report.at("failures").empty());
}

TEST_CASE("optimize writes per-strategy weights and the comparison table") {
  const fs::path dir = fresh_dir("optimize");
  write_file(dir / "config.json",
             "{\"seed\": 8, \"out\": \"" + (dir / "out").string() +
                 "\", \"input\": {\"path\": \"" + (dir / "out" / "prices.csv").string() +
                 "\"}, \"synth\": {\"n_assets\": 40, \"n_obs\": 500, "
                 "\"blocks\": [[10, 0.4], [10, 0.4], [10, 0.4], [10, 0.4]], "
                 "\"market_loading\": 0.5}}");
  REQUIRE(run_cli("--config \"" + (dir / "config.json").string() + "\" synth") == 0);
  REQUIRE(run_cli("--config \"" + (dir / "config.json").string() + "\" optimize") == 0);
  for (const char* name :
       {"weights_equal.csv", "weights_markowitz.csv", "weights_rmt.csv",
        "weights_mesoscopic.csv", "weights_community.csv", "weight_comparison.csv",
        "weights.json"})
    CHECK(fs::exists(dir / "out" / name));
  const json weights = read_json(dir / "out" / "weights.json");
  CHECK(weights.at("strategies").at("equal").at("effective_size").get<double>() ==
        doctest::Approx(40.0));
}

int main(int argc, char** argv) {
  if (argc > 1 && argv[argc - 1][0] != '-') {
    g_cli = argv[argc - 1];
    --argc;
  }
  if (g_cli.empty()) {
    std::fprintf(stderr, "usage: test_cli [doctest options] <cli-binary>\n");
    return 1;
  }
  doctest::Context context(argc, argv);
  return context.run();
}
