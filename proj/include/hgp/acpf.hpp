#pragma once

#include <string>

#include <Eigen/Dense>

#include "hgp/errors.hpp"
#include "hgp/grid.hpp"
#include "json.hpp"

namespace hgp {

/// Generator dispatch and per-bus demand/renewables for one power-flow run (p.u.).
struct OperatingPoint {
  Eigen::VectorXd p_gen;  // per generator; the slack entry is ignored by the solver
  Eigen::VectorXd p_load, q_load, p_res, q_res;  // per bus
};

/// Net bus injections p = p_g - p_l + p_r and q = q_g - q_l + q_r, plus the
/// voltage setpoints of generator buses. The slack unit is left out of p.
struct Injections {
  Eigen::VectorXd p;
  Eigen::VectorXd q;
  Eigen::VectorXd v_set;
};

struct PfSolution {
  Eigen::VectorXd v;
  Eigen::VectorXd theta;
  Eigen::VectorXd q_g;  // per generator
  double p_slack = 0.0;
  int iterations = 0;
  double max_mismatch = 0.0;
};

struct BranchFlows {
  Eigen::VectorXd p_from, q_from, p_to, q_to;
  Eigen::VectorXd s;  // max of the two end apparent powers
};

class PowerFlowError : public NumericalError {
 public:
  PowerFlowError(const std::string& what, int iteration, double mismatch)
      : NumericalError(what), iteration(iteration), mismatch(mismatch) {}
  int iteration;
  double mismatch;
};

inline constexpr double kPfTolerance = 1e-8;
inline constexpr int kPfMaxIter = 20;

/// Forecast operating point with every generator at `p_gen`.
OperatingPoint forecast_point(const GridCase& grid, const Eigen::VectorXd& p_gen);

/// Operating point described by an input vector in IoSchema order. Reactive
/// demand follows active demand at the forecast power factor.
OperatingPoint operating_point(const GridCase& grid, const IoSchema& schema,
                               const Eigen::VectorXd& x);

Injections make_injections(const GridCase& grid, const OperatingPoint& op);

/// Newton-Raphson in polar coordinates from a flat start. Reactive limits are
/// not enforced. Throws PowerFlowError on non-convergence or a singular Jacobian.
PfSolution solve_acpf(const GridCase& grid, const Injections& inj, double tol = kPfTolerance,
                      int max_iter = kPfMaxIter);

/// Net active/reactive injections computed from a voltage state.
void bus_power(const Admittance& y, const Eigen::VectorXd& v, const Eigen::VectorXd& theta,
               Eigen::VectorXd& p, Eigen::VectorXd& q);

/// Largest balance mismatch at the buses whose injections are specified
/// (P at every non-slack bus, Q at load buses).
double max_bus_mismatch(const GridCase& grid, const Injections& inj, const PfSolution& sol);

BranchFlows branch_flows(const GridCase& grid, const PfSolution& sol);

/// y = [v at v-buses, q_g, s per line] in IoSchema order.
Eigen::VectorXd evaluate_outputs(const GridCase& grid, const IoSchema& schema,
                                 const PfSolution& sol);

nlohmann::json to_json(const PfSolution& sol);

}  // namespace hgp
