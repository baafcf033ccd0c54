#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "json.hpp"
#include "test_support.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

/// Runs the hgp binary with the given arguments, capturing the exit code and stderr.
Run run_cli(const std::string& args, const fs::path& dir) {
  const fs::path err = dir / "stderr.txt";
  const std::string cmd = std::string("\"") + HGP_CLI + "\" " + args + " > \"" + (dir / "stdout.txt").string() +
                          "\" 2> \"" + err.string() + "\"";
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.err = slurp(err);
  return r;
}

/// Fresh scratch directory per test case.
fs::path scratch(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("hgp_cli_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string case9() { return hgp::test::data_path("case9.json"); }

int data_rows(const fs::path& csv) {
  std::ifstream in(csv);
  std::string line;
  int n = -1;  // header
  while (std::getline(in, line))
    if (!line.empty()) ++n;
  return n;
}

}  // namespace

TEST_CASE("usage and input errors exit with 2") {
  const fs::path d = scratch("errors");
  const Run missing = run_cli("generate --case " + (d / "nope.json").string() + " --out " + d.string(), d);
  CHECK(missing.code == 2);
  CHECK(missing.err.find("nope.json") != std::string::npos);

  CHECK(run_cli("", d).code == 2);
  CHECK(run_cli("frobnicate", d).code == 2);
  CHECK(run_cli("generate --n-train -3 --case " + case9(), d).code == 2);

  // n_mc = 0 is rejected before any file is read
  CHECK(run_cli("validate --n-mc 0 --case " + case9() + " --out " + d.string(), d).code == 2);

  // corrupted model file
  std::ofstream(d / "model.json") << "{\"mode\": \"hybrid\", \"gp\": [1, 2";
  CHECK(run_cli("solve --case " + case9() + " --out " + d.string(), d).code == 2);
  fs::remove_all(d);
}

TEST_CASE("generate writes bounded, reproducible datasets") {
  const fs::path a = scratch("gen_a"), b = scratch("gen_b");
  const std::string flags = " --case " + case9() + " --seed 5 --n-train 30 --n-test 12";
  REQUIRE(run_cli("generate" + flags + " --out " + a.string(), a).code == 0);
  REQUIRE(run_cli("generate" + flags + " --out " + b.string(), b).code == 0);
  CHECK(data_rows(a / "train.csv") <= 30);
  CHECK(data_rows(a / "train.csv") > 0);
  CHECK(data_rows(a / "test.csv") <= 12);
  CHECK(slurp(a / "train.csv") == slurp(b / "train.csv"));
  CHECK(slurp(a / "test.csv") == slurp(b / "test.csv"));
  CHECK(slurp(a / "train.csv") != slurp(a / "test.csv"));

  // more inducing points than training rows
  const Run sparse = run_cli("train --sparse-m 100" + flags + " --out " + a.string(), a);
  CHECK(sparse.code == 2);
  CHECK(!sparse.err.empty());
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("pipeline stages compose and respect the config file") {
  const fs::path d = scratch("pipeline");
  std::ofstream(d / "run.conf") << "case = " << case9() << "\nseed = 2\nn_train = 40\nn_test = 50\nrestarts = 1\n"
                                << "n_mc = 100\nout = " << d.string() << "\n";
  const std::string cfg = "--config " + (d / "run.conf").string();
  REQUIRE(run_cli("generate " + cfg, d).code == 0);
  REQUIRE(run_cli("train " + cfg, d).code == 0);
  REQUIRE(run_cli("solve " + cfg, d).code == 0);
  const nlohmann::json sol = nlohmann::json::parse(slurp(d / "solution.json"));
  CHECK(sol.at("status") == "optimal");

  // flags override the file: eps_y = 0.5 never costs more
  REQUIRE(run_cli("solve " + cfg + " --eps-y 0.5 --solution " + (d / "loose.json").string(), d).code == 0);
  const nlohmann::json loose = nlohmann::json::parse(slurp(d / "loose.json"));
  CHECK(loose.at("cost").get<double>() <= sol.at("cost").get<double>() + 1e-9);

  REQUIRE(run_cli("validate --baselines " + cfg, d).code == 0);
  const nlohmann::json rep = nlohmann::json::parse(slurp(d / "report.json"));
  CHECK(rep.at("baselines").size() == 2);
  CHECK(slurp(d / "report.txt").find("failure prob") != std::string::npos);

  // no windows: an empty robustness report
  REQUIRE(run_cli("robustness " + cfg, d).code == 0);
  CHECK(nlohmann::json::parse(slurp(d / "robustness.json")).empty());
  fs::remove_all(d);
}
