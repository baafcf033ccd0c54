#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>
#include "json.hpp"

namespace hgp {

enum class BusKind { slack, generator, load };

/// Network bus. Powers and voltages are stored in per-unit.
struct Bus {
  int id = 0;
  BusKind kind = BusKind::load;
  double v_min = 0.9;
  double v_max = 1.1;
  double p_load = 0.0;
  double q_load = 0.0;
  double p_res = 0.0;
  double q_res = 0.0;

  bool operator==(const Bus&) const = default;
};

/// Plain pi-model branch. `from` and `to` are positions in GridCase::buses.
struct Line {
  int from = 0;
  int to = 0;
  double r = 0.0;
  double x = 0.0;
  double g = 0.0;  // series conductance, r / (r^2 + x^2)
  double b = 0.0;  // series susceptance, -x / (r^2 + x^2)
  double b_shunt = 0.0;
  double s_max = 0.0;

  bool operator==(const Line&) const = default;
};

/// Dispatchable unit. `bus` is a position in GridCase::buses; limits in p.u.,
/// cost coefficients in physical units ($/MW^2, $/MW, $).
struct Generator {
  int bus = 0;
  double p_min = 0.0;
  double p_max = 0.0;
  double q_min = 0.0;
  double q_max = 0.0;
  double v_set = 1.0;
  double c2 = 0.0;
  double c1 = 0.0;
  double c0 = 0.0;

  bool operator==(const Generator&) const = default;
};

struct GridCase {
  std::string name;
  double base_mva = 100.0;
  std::vector<Bus> buses;
  std::vector<Line> lines;
  std::vector<Generator> generators;

  int n_bus() const { return static_cast<int>(buses.size()); }
  int n_line() const { return static_cast<int>(lines.size()); }
  int n_gen() const { return static_cast<int>(generators.size()); }

  int slack_bus() const;
  /// Index of the generator attached to the slack bus.
  int slack_generator() const;
  /// Position of the bus with the given external id, or -1.
  int bus_index(int id) const;

  /// Generator cost in $ for an output given in p.u.
  double generator_cost(int k, double p_pu) const;

  bool operator==(const GridCase&) const = default;
};

/// Ordered input/output layout shared by data generation, models and the OPF.
///
/// Inputs are x = [p_g (non-slack generators), p_l (loaded buses),
/// p_r (buses with renewable injection)]. Outputs are y = [v (load buses that
/// carry demand), q_g (all generators), s (all lines)]. Every block is sorted
/// by ascending bus position, lines keep file order.
struct IoSchema {
  std::vector<std::string> input_names;
  std::vector<std::string> output_names;
  int n_x = 0;
  int n_y = 0;

  std::vector<int> gen_inputs;  // generator indices (slack excluded)
  std::vector<int> load_buses;
  std::vector<int> res_buses;
  std::vector<int> v_buses;
  std::vector<int> q_gens;  // generator indices
  std::vector<int> s_lines;

  int n_pg() const { return static_cast<int>(gen_inputs.size()); }
  int n_pl() const { return static_cast<int>(load_buses.size()); }
  int n_pr() const { return static_cast<int>(res_buses.size()); }
  int n_d() const { return n_pl() + n_pr(); }
  int n_v() const { return static_cast<int>(v_buses.size()); }
  int n_q() const { return static_cast<int>(q_gens.size()); }
  int n_s() const { return static_cast<int>(s_lines.size()); }

  int input_index(const std::string& label) const;

  bool operator==(const IoSchema&) const = default;
};

GridCase load_case(const std::string& path);
GridCase parse_case(const std::string& text, const std::string& name = "case");
GridCase case_from_json(const nlohmann::json& doc, const std::string& name = "case");
nlohmann::json case_to_json(const GridCase& grid);
std::string serialize_case(const GridCase& grid);

/// Throws InputError naming the first violated invariant.
void validate_case(const GridCase& grid);

struct Admittance {
  Eigen::MatrixXd G;
  Eigen::MatrixXd B;
};

Admittance build_admittance(const GridCase& grid);

IoSchema io_schema(const GridCase& grid);

/// Forecast input vector x (p.u.) with the given non-slack dispatch.
Eigen::VectorXd forecast_inputs(const GridCase& grid, const IoSchema& schema,
                                const Eigen::VectorXd& pg_nonslack);

/// Lower/upper output limits in IoSchema order (p.u.). Apparent power gets 0
/// as lower bound.
void output_limits(const GridCase& grid, const IoSchema& schema,
                   Eigen::VectorXd& y_min, Eigen::VectorXd& y_max);

}  // namespace hgp
