// Command-line driver: generate -> train -> solve -> validate, plus the
// corrupted-data robustness experiment.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "hgp/ccopf.hpp"
#include "hgp/dataset.hpp"
#include "hgp/errors.hpp"
#include "hgp/grid.hpp"
#include "hgp/log.hpp"
#include "hgp/model.hpp"
#include "hgp/validate.hpp"

namespace fs = std::filesystem;
using namespace hgp;

namespace {

struct RunConfig {
  std::string case_path = "data/case9.json";
  std::uint64_t seed = 1;
  int n_train = 75;
  int n_test = 500;
  std::string mode = "hybrid";
  int sparse_m = 0;  // 0: exact GP
  std::string strategy = "kmeans";
  int restarts = 5;
  double eps_y = 0.025;
  double eps_pg = 0.001;
  double sigma_l = 0.15;
  double sigma_r = 0.30;
  int n_mc = 1000;
  double tol = 1e-5;
  std::string out = "out";
  std::vector<std::string> windows;
  std::vector<std::uint64_t> robustness_seeds{1, 2, 3, 4, 5};
  std::string data_path, test_path, model_path, solution_path;
  bool baselines = false;

  std::string path(const std::string& given, const std::string& name) const {
    return given.empty() ? (fs::path(out) / name).string() : given;
  }
  UncertaintySpec spec() const {
    UncertaintySpec s;
    s.sigma_l = sigma_l;
    s.sigma_r = sigma_r;
    return s;
  }
};

void ensure_out(const RunConfig& c) {
  std::error_code ec;
  fs::create_directories(c.out, ec);
  if (ec) throw InputError("cannot create output directory " + c.out + ": " + ec.message());
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot write " + path);
  f << text;
}

void write_json(const std::string& path, const nlohmann::json& j) { write_text(path, j.dump(1) + "\n"); }

nlohmann::json read_json(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw InputError("cannot open " + path);
  try {
    return nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(path + ": " + e.what());
  }
}

RobustnessWindow parse_window(const std::string& text) {
  // <column>@<lo>:<hi>, MW
  const auto at = text.find('@');
  const auto colon = text.find(':', at == std::string::npos ? 0 : at);
  if (at == std::string::npos || colon == std::string::npos) {
    throw InputError("window '" + text + "' is not of the form <column>@<lo>:<hi>");
  }
  RobustnessWindow w;
  w.column = text.substr(0, at);
  try {
    w.lo = std::stod(text.substr(at + 1, colon - at - 1));
    w.hi = std::stod(text.substr(colon + 1));
  } catch (const std::exception&) {
    throw InputError("window '" + text + "' has a malformed bound");
  }
  if (!(w.lo < w.hi)) throw InputError("window '" + text + "' must satisfy lo < hi");
  return w;
}

void cmd_generate(const RunConfig& c) {
  ensure_out(c);
  const GridCase grid = load_case(c.case_path);
  const UncertaintySpec spec = c.spec();
  auto make = [&](int n, std::uint64_t seed, const std::string& path) {
    Dataset d = generate_dataset(grid, sample_inputs(grid, spec, n, seed));
    d.seed = seed;
    d.spec = spec;
    save_dataset(d, path);
    std::printf("%s: %d rows (%d of %d power flows dropped)\n", path.c_str(), d.rows(), d.dropped_rows, n);
  };
  make(c.n_train, train_seed(c.seed), c.path(c.data_path, "train.csv"));
  make(c.n_test, test_seed(c.seed), c.path(c.test_path, "test.csv"));
}

void cmd_train(const RunConfig& c) {
  ensure_out(c);
  const Dataset data = load_dataset(c.path(c.data_path, "train.csv"));
  TrainConfig cfg;
  cfg.mode = parse_model_mode(c.mode);
  if (c.sparse_m > 0) cfg.sparse_m = c.sparse_m;
  cfg.strategy = parse_inducing_strategy(c.strategy);
  cfg.restarts = c.restarts;
  cfg.seed = c.seed;
  const HybridModel model = train_model(data, cfg);
  const std::string path = c.path(c.model_path, "model.json");
  save_model(model, path);

  std::printf("trained %s model on %d rows%s -> %s\n", to_string(model.mode).c_str(), data.rows(),
              model.sparse() ? (", " + std::to_string(c.sparse_m) + " inducing points").c_str() : "", path.c_str());
  const PosteriorView view = model.view();
  std::printf("%-10s %12s %12s %12s %12s\n", "output", "min l", "max l", "signal var", "noise var");
  for (int a = 0; a < model.n_y(); ++a) {
    const Hyperparams& hp = view.output(a).hp;
    std::printf("%-10s %12.4g %12.4g %12.4g %12.4g\n", model.schema.output_names[a].c_str(),
                hp.lengthscales.minCoeff(), hp.lengthscales.maxCoeff(), hp.signal_var, hp.noise_var);
  }
  const std::string test_path = c.path(c.test_path, "test.csv");
  if (fs::exists(test_path)) {
    const Dataset test = load_dataset(test_path);
    std::printf("held-out RMSE (%d rows): %.4e p.u.\n", test.rows(), rmse(predict_means(model, test.X), test.Y).average);
  }
}

DispatchSolution solve_with(const RunConfig& c, const GridCase& grid, const HybridModel& model, double eps_y) {
  CcopfSettings s;
  s.eps_y = eps_y;
  s.eps_pg = c.eps_pg;
  s.tol = c.tol;
  return solve_ccopf(grid, model, c.spec(), s);
}

void cmd_solve(const RunConfig& c) {
  ensure_out(c);
  const GridCase grid = load_case(c.case_path);
  const HybridModel model = load_model(c.path(c.model_path, "model.json"));
  const DispatchSolution sol = solve_with(c, grid, model, c.eps_y);
  const std::string path = c.path(c.solution_path, "solution.json");
  write_json(path, to_json(sol, model.schema));
  std::printf("status %s after %d iterations, KKT residual %.3e\n", to_string(sol.status).c_str(), sol.iterations,
              sol.kkt_residual);
  std::printf("expected cost %.2f $\n", sol.cost);
  for (int k = 0; k < grid.n_gen(); ++k) {
    std::printf("  generator at bus %d: p_g %.3f MW, alpha %.4f, margin %.3f MW\n",
                grid.buses[grid.generators[k].bus].id, sol.p_g[k], sol.alpha[k],
                sol.margins.lambda_pg[k] * grid.base_mva);
  }
  std::printf("largest output margin %.4e p.u. (tau_y %.4f)\n", sol.margins.lambda_y.maxCoeff(), sol.margins.tau_y);
  std::printf("-> %s\n", path.c_str());
  if (sol.status != SolveStatus::optimal) throw NumericalError("chance-constrained OPF did not converge");
}

void cmd_validate(const RunConfig& c) {
  if (c.n_mc < 1) throw InputError("n_mc must be at least 1");
  ensure_out(c);
  const GridCase grid = load_case(c.case_path);
  const DispatchSolution sol = dispatch_from_json(read_json(c.path(c.solution_path, "solution.json")));
  const IoSchema schema = io_schema(grid);
  if (sol.p_g.size() != grid.n_gen() || sol.moments.mu_y.size() != schema.n_y) {
    throw InputError("solution does not match case " + grid.name);
  }
  ValidationReport rep = validate_solution(grid, sol, schema, c.spec(), c.n_mc, c.seed, c.eps_y, c.eps_pg);
  const std::string model_path = c.path(c.model_path, "model.json");
  const std::string test_path = c.path(c.test_path, "test.csv");
  if (fs::exists(model_path) && fs::exists(test_path)) {
    const HybridModel model = load_model(model_path);
    const Dataset test = load_dataset(test_path);
    rep.model_rmse = rmse(predict_means(model, test.X), test.Y);
  }
  if (c.baselines) {
    rep.baselines.push_back(baseline_full_recourse(grid, c.spec(), c.n_mc, c.seed, c.tol));
    rep.baselines.push_back(baseline_base_case(grid, c.spec(), c.n_mc, c.seed, c.tol));
  }
  write_json((fs::path(c.out) / "report.json").string(), to_json(rep));
  const std::string table = render_table(rep);
  write_text((fs::path(c.out) / "report.txt").string(), table);
  std::cout << table;
}

void cmd_robustness(const RunConfig& c) {
  ensure_out(c);
  const GridCase grid = load_case(c.case_path);
  RobustnessSettings s;
  s.n_train = c.n_train;
  s.n_test = c.n_test;
  s.restarts = c.restarts;
  s.spec = c.spec();
  std::vector<RobustnessResult> results;
  nlohmann::json j = nlohmann::json::array();
  for (const std::string& w : c.windows) {
    results.push_back(robustness_experiment(grid, parse_window(w), c.robustness_seeds, s));
    j.push_back(to_json(results.back()));
  }
  write_json((fs::path(c.out) / "robustness.json").string(), j);
  const std::string table = render_table(results);
  write_text((fs::path(c.out) / "robustness.txt").string(), table);
  std::cout << table;
}

}  // namespace

int main(int argc, char** argv) {
  RunConfig c;
  CLI::App app{"Chance-constrained AC-OPF with hybrid Gaussian-process power-flow models"};
  app.set_config("--config", "", "flat key = value file; command-line flags take precedence");
  app.add_option("--case,--case_path", c.case_path, "case JSON file")->capture_default_str();
  app.add_option("--seed", c.seed, "master seed")->capture_default_str();
  app.add_option("--out,--output_dir", c.out, "output directory")->capture_default_str();
  app.add_option("--n-train,--n_train", c.n_train)->capture_default_str()->check(CLI::PositiveNumber);
  app.add_option("--n-test,--n_test", c.n_test)->capture_default_str()->check(CLI::PositiveNumber);
  app.add_option("--mode", c.mode, "hybrid or full")->capture_default_str();
  app.add_option("--sparse-m,--sparse_m", c.sparse_m, "inducing points (0: exact GP)")->capture_default_str();
  app.add_option("--strategy", c.strategy, "kmeans, random or greedy-variance")->capture_default_str();
  app.add_option("--restarts", c.restarts)->capture_default_str()->check(CLI::PositiveNumber);
  app.add_option("--eps-y,--eps_y", c.eps_y)->capture_default_str();
  app.add_option("--eps-pg,--eps_pg", c.eps_pg)->capture_default_str();
  app.add_option("--sigma-l,--sigma_l,--sigma_l_frac", c.sigma_l)->capture_default_str();
  app.add_option("--sigma-r,--sigma_r,--sigma_r_frac", c.sigma_r)->capture_default_str();
  app.add_option("--n-mc,--n_mc", c.n_mc, "Monte-Carlo samples")->capture_default_str();
  app.add_option("--tol", c.tol, "KKT tolerance")->capture_default_str();
  app.add_option("--window", c.windows, "robustness window <column>@<lo MW>:<hi MW>, repeatable");
  app.add_option("--robustness-seeds,--robustness_seeds", c.robustness_seeds)->capture_default_str();
  app.add_option("--data", c.data_path, "training data (default <out>/train.csv)");
  app.add_option("--test-data,--test_data", c.test_path, "test data (default <out>/test.csv)");
  app.add_option("--model", c.model_path, "model file (default <out>/model.json)");
  app.add_option("--solution", c.solution_path, "solution file (default <out>/solution.json)");

  auto* gen = app.add_subcommand("generate", "sample operating points and run the AC power flow");
  auto* train = app.add_subcommand("train", "fit the hybrid or full GP model");
  auto* solve = app.add_subcommand("solve", "solve the chance-constrained OPF");
  auto* val = app.add_subcommand("validate", "Monte-Carlo validation of a solution");
  auto* rob = app.add_subcommand("robustness", "corrupted-data experiment");
  auto* all = app.add_subcommand("all", "generate, train, solve, validate with baselines, robustness");
  val->add_flag("--baselines", c.baselines, "also evaluate baselines A and B");
  for (auto* s : {gen, train, solve, val, rob, all}) s->fallthrough();
  app.require_subcommand(1);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*gen) cmd_generate(c);
    if (*train) cmd_train(c);
    if (*solve) cmd_solve(c);
    if (*val) cmd_validate(c);
    if (*rob) cmd_robustness(c);
    if (*all) {
      c.baselines = true;
      cmd_generate(c);
      cmd_train(c);
      cmd_solve(c);
      cmd_validate(c);
      if (!c.windows.empty()) cmd_robustness(c);
    }
  } catch (const InputError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return 1;
  }
  return 0;
}
