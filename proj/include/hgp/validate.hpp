#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hgp/ccopf.hpp"
#include "hgp/dataset.hpp"
#include "hgp/grid.hpp"
#include "hgp/model.hpp"
#include "hgp/uncertainty.hpp"
#include "json.hpp"

namespace hgp {

struct RmseResult {
  Eigen::VectorXd per_output;
  double average = 0.0;
};

/// Column-wise root mean square error and its mean over columns.
RmseResult rmse(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& truth);

/// Monte-Carlo check of a dispatch policy p_g(w) = p_g + alpha * Omega.
struct McResult {
  int n_mc = 0;
  int failures = 0;       // samples violating any limit (non-convergence included)
  int nonconverged = 0;
  double violation_prob = 0.0;
  std::vector<std::string> constraint_names;  // "v:<bus>", "p_g:<bus>", "q_g:<bus>", "s:<from>-<to>"
  Eigen::VectorXd constraint_rates;           // per limit, over all samples
  Eigen::MatrixXd outputs;                    // converged samples x n_y, IoSchema order
  /// Largest per-generator active-power violation rate.
  double max_pg_rate() const;
};

McResult mc_violation(const GridCase& grid, const Eigen::VectorXd& p_g_mw, const Eigen::VectorXd& alpha,
                      const UncertaintySpec& spec, int n_mc, std::uint64_t seed);
McResult mc_violation(const GridCase& grid, const DispatchSolution& sol, const UncertaintySpec& spec, int n_mc,
                      std::uint64_t seed);

struct BaselineResult {
  std::string name;
  double cost = 0.0;
  double violation_prob = 0.0;
  int n_mc = 0;
  int failed_solves = 0;  // A: excluded samples; B: 0
  Eigen::VectorXd p_g;    // MW (B only)
};

/// B: one deterministic AC-OPF at the forecast, uniform participation.
BaselineResult baseline_base_case(const GridCase& grid, const UncertaintySpec& spec, int n_mc, std::uint64_t seed,
                                  double tol = 1e-5);
/// A: deterministic AC-OPF re-solved at every realization; cost is the sample mean.
BaselineResult baseline_full_recourse(const GridCase& grid, const UncertaintySpec& spec, int n_mc,
                                      std::uint64_t seed, double tol = 1e-5);

struct RobustnessWindow {
  std::string column;  // input label, e.g. "p_l:4"
  double lo = 0.0;     // MW
  double hi = 0.0;
};

struct RobustnessSeedRow {
  std::uint64_t seed = 0;
  double dropped_fraction = 0.0;
  double rmse_full = 0.0;
  double rmse_hybrid = 0.0;
};

struct RobustnessResult {
  RobustnessWindow window;
  std::vector<RobustnessSeedRow> rows;
  double mean_dropped() const;
};

struct RobustnessSettings {
  int n_train = 75;
  int n_test = 500;
  int restarts = 5;
  UncertaintySpec spec;
};

RobustnessResult robustness_experiment(const GridCase& grid, const RobustnessWindow& window,
                                       const std::vector<std::uint64_t>& seeds, const RobustnessSettings& settings);

/// Seeds of the training and test draws of an experiment; the streams never overlap.
std::uint64_t train_seed(std::uint64_t seed);
std::uint64_t test_seed(std::uint64_t seed);

struct ValidationReport {
  std::string case_id;
  std::uint64_t seed = 0;
  std::vector<std::string> output_names;
  std::optional<RmseResult> model_rmse;
  double cost = 0.0;
  std::string status;
  double kkt_residual = 0.0;
  double eps_y = 0.025;
  double eps_pg = 0.001;
  McResult mc;
  OutputMoments moments;
  Margins margins_analytic;
  EmpiricalMargins margins_empirical;
  /// Fraction of MC samples inside mu_y +- 3 sigma_y, per output.
  Eigen::VectorXd coverage_3sigma;
  std::vector<BaselineResult> baselines;
};

/// Fills every MC-derived field of a report for a solved dispatch.
ValidationReport validate_solution(const GridCase& grid, const DispatchSolution& sol, const IoSchema& schema,
                                   const UncertaintySpec& spec, int n_mc, std::uint64_t seed, double eps_y,
                                   double eps_pg);

nlohmann::json to_json(const ValidationReport& report);
nlohmann::json to_json(const RobustnessResult& result);
std::string render_table(const ValidationReport& report);
std::string render_table(const std::vector<RobustnessResult>& results);

}  // namespace hgp
