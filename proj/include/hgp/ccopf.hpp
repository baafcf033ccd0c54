#pragma once

#include <string>

#include <Eigen/Dense>

#include "hgp/acpf.hpp"
#include "hgp/dataset.hpp"
#include "hgp/errors.hpp"
#include "hgp/grid.hpp"
#include "hgp/ipsolver.hpp"
#include "hgp/model.hpp"
#include "hgp/uncertainty.hpp"
#include "json.hpp"

namespace hgp {

class InfeasibleError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

struct CostCoeffs {
  Eigen::VectorXd c2, c1, c0;
};

/// Generator cost coefficients rescaled for dispatch in p.u.
CostCoeffs cost_coeffs_pu(const GridCase& grid);

struct CostValue {
  double value = 0.0;
  Eigen::VectorXd grad_p;
  Eigen::VectorXd grad_alpha;
};

/// sum_k c2 (p_k^2 + tr(Sigma_d) alpha_k^2) + c1 p_k + c0 (all in consistent units).
CostValue expected_cost(const Eigen::VectorXd& p_g, const Eigen::VectorXd& alpha, const Eigen::VectorXd& sigma_d,
                        const CostCoeffs& coeffs);

struct CcopfSettings {
  double eps_y = 0.025;
  double eps_pg = 0.001;
  double tol = 1e-5;
  int max_iter = 500;
};

/// Decision vector u = [p_g (every generator, p.u.), alpha (every generator)].
/// Equalities: sum(alpha) = 1 and the lossless balance sum(p_g) = sum(p_l) - sum(p_r).
/// Inequalities (>= 0), in this order: upper and lower output limits
/// (2 n_y rows, apparent power lower rows untightened at 0), upper and lower
/// generator limits (2 n_g rows), alpha >= 0 (n_g rows).
/// `margin_scale` multiplies both quantile factors (used for continuation).
NlpProblem assemble_nlp(const GridCase& grid, const HybridModel& model, const UncertaintySpec& spec, double eps_y,
                        double eps_pg, double margin_scale = 1.0);

/// Number of chance-constraint rows (output and generator boxes).
int chance_constraint_count(const GridCase& grid, const IoSchema& schema);

struct DispatchSolution {
  Eigen::VectorXd p_g;    // MW
  Eigen::VectorXd alpha;
  OutputMoments moments;  // p.u.
  Margins margins;        // p.u.
  double cost = 0.0;      // $
  double kkt_residual = 0.0;
  int iterations = 0;
  SolveStatus status = SolveStatus::max_iter;
  double solve_seconds = 0.0;
};

/// Model moments, margins and cost at a dispatch (p_g in MW).
void evaluate_dispatch(const GridCase& grid, const HybridModel& model, const UncertaintySpec& spec, double eps_y,
                       double eps_pg, DispatchSolution& sol);

/// Solves the hybrid chance-constrained OPF. Starts from the deterministic
/// surrogate OPF with uniform alpha; if the full-margin solve fails the margins
/// are ramped in over three continuation steps.
DispatchSolution solve_ccopf(const GridCase& grid, const HybridModel& model, const UncertaintySpec& spec,
                             const CcopfSettings& settings = {});

struct AcopfSolution {
  Eigen::VectorXd p_g, q_g;  // p.u.
  Eigen::VectorXd v, theta;
  double cost = 0.0;
  double kkt_residual = 0.0;
  int iterations = 0;
  SolveStatus status = SolveStatus::max_iter;
};

/// Deterministic AC-OPF at the given operating point demands (p_gen ignored).
AcopfSolution solve_det_acopf(const GridCase& grid, const OperatingPoint& demand, double tol = 1e-5,
                              int max_iter = 300);
/// Deterministic AC-OPF at forecast demand.
AcopfSolution solve_det_acopf(const GridCase& grid, double tol = 1e-5, int max_iter = 300);

/// The AC-OPF program itself (exposed for derivative checks).
/// Variables [v (n_b), theta (non-slack buses), p_g, q_g].
NlpProblem acopf_nlp(const GridCase& grid, const OperatingPoint& demand);

nlohmann::json to_json(const DispatchSolution& sol, const IoSchema& schema);
DispatchSolution dispatch_from_json(const nlohmann::json& j);

}  // namespace hgp
