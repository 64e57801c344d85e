#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "lamar/cli.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run lamar_cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = lamar::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("lamar_cli_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

}  // namespace

TEST_CASE("fixture, train, eval smoke path") {
  TempDir dir;
  const auto fx = dir / "fx.lmr1";
  auto r = lamar_cli({"fixture", "--n", "24", "--d", "8", "--delta", "0.8", "--seed", "0",
                      "--out", fx});
  REQUIRE(r.code == 0);

  const std::vector<std::string> train = {"train", "--data", fx, "--mode", "e2e",
                                          "--integration", "gate", "--blocks", "1",
                                          "--heads", "2", "--ff", "16", "--lr", "1e-2",
                                          "--batch", "16", "--epochs", "5",
                                          "--out", dir / "m.lmrc"};
  r = lamar_cli(train);
  REQUIRE(r.code == 0);
  REQUIRE(fs::exists(dir / "m.lmrc"));
  const auto report = nlohmann::json::parse(slurp(dir / "m.lmrc.report.json"));
  const double best = report["train"]["best_metric"];

  r = lamar_cli({"eval", "--checkpoint", dir / "m.lmrc", "--data", fx, "--split", "val"});
  REQUIRE(r.code == 0);
  CHECK(nlohmann::json::parse(r.out)["accuracy"].get<double>() == best);

  SUBCASE("outputs are byte-identical across reruns") {
    const auto ckpt = slurp(dir / "m.lmrc");
    const auto rep = slurp(dir / "m.lmrc.report.json");
    REQUIRE(lamar_cli(train).code == 0);
    CHECK(slurp(dir / "m.lmrc") == ckpt);
    CHECK(slurp(dir / "m.lmrc.report.json") == rep);
    REQUIRE(lamar_cli({"fixture", "--n", "24", "--d", "8", "--out", dir / "fx2.lmr1"}).code == 0);
    CHECK(slurp(dir / "fx2.lmr1") == slurp(fx));
  }
  SUBCASE("diagnose and export") {
    r = lamar_cli({"diagnose", "--checkpoint", dir / "m.lmrc", "--data", fx, "--csv",
                   dir / "d.csv"});
    REQUIRE(r.code == 0);
    CHECK(nlohmann::json::parse(r.out).contains("gate_vs_reconstruction"));
    CHECK(fs::exists(dir / "d.csv"));
    r = lamar_cli({"diagnose", "--checkpoint", dir / "m.lmrc", "--data", fx, "--attention"});
    CHECK(r.code == 1);
    r = lamar_cli({"export", "--checkpoint", dir / "m.lmrc", "--data", fx, "--out",
                   dir / "v.jsonl"});
    REQUIRE(r.code == 0);
    std::istringstream lines(slurp(dir / "v.jsonl"));
    std::string line;
    int n = 0;
    while (std::getline(lines, line)) {
      const auto j = nlohmann::json::parse(line);
      CHECK(j.contains("probabilities"));
      ++n;
    }
    CHECK(n == 2 * 5);
  }
  SUBCASE("filter") {
    r = lamar_cli({"filter", "--data", fx, "--l", "10", "--out", dir / "f.lmr1", "--report",
                   dir / "f.json"});
    REQUIRE(r.code == 0);
    const auto rep = nlohmann::json::parse(slurp(dir / "f.json"));
    CHECK(rep["removed_truthful"] == rep["removed_generated"]);
  }
}

TEST_CASE("validation errors exit 1 with one line") {
  SUBCASE("missing data file names the path") {
    const auto r = lamar_cli({"train", "--data", "/nonexistent/fx.lmr1"});
    CHECK(r.code == 1);
    CHECK(r.err.find("/nonexistent/fx.lmr1") != std::string::npos);
    CHECK(std::count(r.err.begin(), r.err.end(), '\n') == 1);
  }
  SUBCASE("unknown flag") {
    CHECK(lamar_cli({"fixture", "--out", "x", "--bogus"}).code == 1);
  }
  SUBCASE("no subcommand") { CHECK(lamar_cli({}).code == 1); }
  SUBCASE("invalid fixture dimension") {
    TempDir dir;
    CHECK(lamar_cli({"fixture", "--d", "1", "--out", dir / "x.lmr1"}).code == 1);
    CHECK_FALSE(fs::exists(dir / "x.lmr1"));
  }
}

TEST_CASE("prompt scoring through the mock") {
  TempDir dir;
  std::ofstream(dir / "cands.json") << R"(["a", "b"])";
  std::ofstream(dir / "cal.jsonl") << R"({"image": "i0", "caption": "c0"})" "\n"
                                   << R"({"image": "i1", "caption": "c1"})" "\n";
  std::ofstream(dir / "mock.json") << R"({"prompts": {"a": {"images": ["i0"]}, "b": {"images": ["i0", "i1"]}}})";
  const auto r = lamar_cli({"prompt-score", "--candidates", dir / "cands.json", "--calibration",
                            dir / "cal.jsonl", "--mock-script", dir / "mock.json"});
  REQUIRE(r.code == 0);
  const auto j = nlohmann::json::parse(r.out);
  CHECK(j.dump().find("0.75") != std::string::npos);
}
