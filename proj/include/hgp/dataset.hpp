#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hgp/grid.hpp"
#include "json.hpp"

namespace hgp {

struct LinearSurrogate;

/// Gaussian forecast errors of loads and renewables, as fractions of forecast.
struct UncertaintySpec {
  double sigma_l = 0.15;
  double sigma_r = 0.30;
  /// Reactive-to-active fluctuation ratio per load bus (by bus position).
  /// Empty means each load keeps its forecast q/p ratio.
  std::vector<double> gamma;

  bool operator==(const UncertaintySpec&) const = default;
};

/// Variances (p.u.^2) of the n_d uncertain inputs in IoSchema order [p_l, p_r].
Eigen::VectorXd demand_variances(const GridCase& grid, const IoSchema& schema,
                                 const UncertaintySpec& spec);

/// Reactive fluctuation factor of bus i (load side).
double load_gamma(const GridCase& grid, const UncertaintySpec& spec, int bus);

struct Dataset {
  IoSchema schema;
  Eigen::MatrixXd X;  // N x n_x
  Eigen::MatrixXd Y;  // N x n_y
  Eigen::MatrixXd R;  // N x n_y residuals, empty until residualize()
  std::uint64_t seed = 0;
  std::string case_id;
  double base_mva = 100.0;
  UncertaintySpec spec;
  int dropped_rows = 0;

  int rows() const { return static_cast<int>(X.rows()); }
  bool has_residuals() const { return R.rows() == X.rows() && R.size() > 0; }
};

/// Rows of random operating points: loads/renewables ~ N(forecast, diag(sigma^2))
/// (clipped at zero), non-slack dispatch uniform within unit limits and then
/// shifted so that the slack unit can close the (lossless) balance.
Eigen::MatrixXd sample_inputs(const GridCase& grid, const UncertaintySpec& spec, int n,
                              std::uint64_t seed);

/// Runs the AC power flow for every input row. Non-convergent rows are dropped;
/// more than 20% failures abort with NumericalError.
Dataset generate_dataset(const GridCase& grid, const Eigen::MatrixXd& X);

/// R = Y - z(X).
Dataset residualize(const Dataset& data, const LinearSurrogate& sur);

struct Corruption {
  Dataset data;
  double dropped_fraction = 0.0;
};

/// Removes every row whose `input_column` value (in MW) falls in [lo, hi).
Corruption corrupt(const Dataset& data, const std::string& input_column, double lo_mw, double hi_mw);

/// Keeps the given rows (in order).
Dataset select_rows(const Dataset& data, const std::vector<int>& rows);

/// CSV of x:/y:/r: columns plus a JSON sidecar at `path + ".meta.json"`.
void save_dataset(const Dataset& data, const std::string& path);
Dataset load_dataset(const std::string& path);

nlohmann::json to_json(const IoSchema& schema);
IoSchema schema_from_json(const nlohmann::json& j);
nlohmann::json to_json(const UncertaintySpec& spec);
UncertaintySpec spec_from_json(const nlohmann::json& j);

}  // namespace hgp
