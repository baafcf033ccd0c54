#include "hgp/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "hgp/acpf.hpp"
#include "hgp/errors.hpp"
#include "hgp/linmodel.hpp"
#include "hgp/log.hpp"
#include "hgp/rng.hpp"

namespace hgp {

double load_gamma(const GridCase& grid, const UncertaintySpec& spec, int bus) {
  if (!spec.gamma.empty()) {
    if (bus < 0 || bus >= static_cast<int>(spec.gamma.size())) throw InputError("gamma: bus out of range");
    return spec.gamma[bus];
  }
  const Bus& b = grid.buses[bus];
  return b.p_load > 0.0 ? b.q_load / b.p_load : 0.0;
}

Eigen::VectorXd demand_variances(const GridCase& grid, const IoSchema& schema,
                                 const UncertaintySpec& spec) {
  Eigen::VectorXd var(schema.n_d());
  int c = 0;
  for (int i : schema.load_buses) {
    const double s = spec.sigma_l * grid.buses[i].p_load;
    var[c++] = s * s;
  }
  for (int i : schema.res_buses) {
    const double s = spec.sigma_r * grid.buses[i].p_res;
    var[c++] = s * s;
  }
  return var;
}

Eigen::MatrixXd sample_inputs(const GridCase& grid, const UncertaintySpec& spec, int n,
                              std::uint64_t seed) {
  if (n < 1) throw InputError("sample_inputs: n must be at least 1");
  if (spec.sigma_l < 0.0 || spec.sigma_r < 0.0) throw InputError("sample_inputs: negative sigma fraction");
  const IoSchema schema = io_schema(grid);
  const int slack = grid.slack_generator();
  const Generator& sg = grid.generators[slack];

  double forecast_net = 0.0;
  for (const Bus& b : grid.buses) forecast_net += b.p_load - b.p_res;
  double capacity = 0.0;
  for (const Generator& g : grid.generators) capacity += g.p_max;
  if (capacity < forecast_net) {
    throw InputError("infeasible case: total generation capacity " + std::to_string(capacity * grid.base_mva) +
                     " MW is below forecast net load " + std::to_string(forecast_net * grid.base_mva) + " MW");
  }

  Rng rng(seed);
  Eigen::MatrixXd X(n, schema.n_x);
  const int n_pg = schema.n_pg();
  for (int r = 0; r < n; ++r) {
    double net = 0.0;
    int c = n_pg;
    for (int i : schema.load_buses) {
      const double f = grid.buses[i].p_load;
      const double p = std::max(0.0, f + spec.sigma_l * f * rng.normal());
      X(r, c++) = p;
      net += p;
    }
    for (int i : schema.res_buses) {
      const double f = grid.buses[i].p_res;
      const double p = std::max(0.0, f + spec.sigma_r * f * rng.normal());
      X(r, c++) = p;
      net -= p;
    }
    double total = 0.0;
    for (int k = 0; k < n_pg; ++k) {
      const Generator& g = grid.generators[schema.gen_inputs[k]];
      X(r, k) = rng.uniform(g.p_min, g.p_max);
      total += X(r, k);
    }
    const double slack_out = net - total;
    if (slack_out > sg.p_max) {
      const double need = slack_out - sg.p_max;
      double room = 0.0;
      for (int k = 0; k < n_pg; ++k) room += grid.generators[schema.gen_inputs[k]].p_max - X(r, k);
      const double frac = room > 0.0 ? std::min(1.0, need / room) : 0.0;
      for (int k = 0; k < n_pg; ++k) X(r, k) += frac * (grid.generators[schema.gen_inputs[k]].p_max - X(r, k));
    } else if (slack_out < sg.p_min) {
      const double need = sg.p_min - slack_out;
      double room = 0.0;
      for (int k = 0; k < n_pg; ++k) room += X(r, k) - grid.generators[schema.gen_inputs[k]].p_min;
      const double frac = room > 0.0 ? std::min(1.0, need / room) : 0.0;
      for (int k = 0; k < n_pg; ++k) X(r, k) -= frac * (X(r, k) - grid.generators[schema.gen_inputs[k]].p_min);
    }
  }
  return X;
}

Dataset generate_dataset(const GridCase& grid, const Eigen::MatrixXd& X) {
  Dataset data;
  data.schema = io_schema(grid);
  data.case_id = grid.name;
  data.base_mva = grid.base_mva;
  if (X.cols() != data.schema.n_x) throw InputError("generate_dataset: input dimension mismatch");
  const int n = static_cast<int>(X.rows());
  std::vector<int> keep;
  std::vector<Eigen::VectorXd> outputs;
  keep.reserve(n);
  for (int r = 0; r < n; ++r) {
    const Eigen::VectorXd x = X.row(r).transpose();
    try {
      const Injections inj = make_injections(grid, operating_point(grid, data.schema, x));
      const PfSolution sol = solve_acpf(grid, inj);
      outputs.push_back(evaluate_outputs(grid, data.schema, sol));
      keep.push_back(r);
    } catch (const PowerFlowError& e) {
      log_warning("generate_dataset: dropping row " + std::to_string(r) + ": " + e.what());
    }
  }
  data.dropped_rows = n - static_cast<int>(keep.size());
  if (n > 0 && data.dropped_rows > 0.2 * n) {
    throw NumericalError("generate_dataset: " + std::to_string(data.dropped_rows) + " of " + std::to_string(n) +
                         " power flows failed to converge");
  }
  data.X.resize(static_cast<Eigen::Index>(keep.size()), X.cols());
  data.Y.resize(static_cast<Eigen::Index>(keep.size()), data.schema.n_y);
  for (std::size_t i = 0; i < keep.size(); ++i) {
    data.X.row(static_cast<Eigen::Index>(i)) = X.row(keep[i]);
    data.Y.row(static_cast<Eigen::Index>(i)) = outputs[i].transpose();
  }
  return data;
}

Dataset residualize(const Dataset& data, const LinearSurrogate& sur) {
  if (sur.n_x() != data.schema.n_x || sur.n_y() != data.schema.n_y || sur.n_v != data.schema.n_v()) {
    throw InputError("residualize: surrogate does not match the dataset schema");
  }
  Dataset out = data;
  out.R = data.Y - predict_linear(sur, data.X);
  return out;
}

Dataset select_rows(const Dataset& data, const std::vector<int>& rows) {
  Dataset out = data;
  const auto n = static_cast<Eigen::Index>(rows.size());
  out.X.resize(n, data.X.cols());
  out.Y.resize(n, data.Y.cols());
  if (data.has_residuals()) out.R.resize(n, data.R.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    out.X.row(i) = data.X.row(rows[i]);
    out.Y.row(i) = data.Y.row(rows[i]);
    if (data.has_residuals()) out.R.row(i) = data.R.row(rows[i]);
  }
  return out;
}

Corruption corrupt(const Dataset& data, const std::string& input_column, double lo_mw, double hi_mw) {
  if (!(lo_mw < hi_mw)) throw InputError("corrupt: window requires lo < hi");
  const int col = data.schema.input_index(input_column);
  if (col < 0) throw InputError("corrupt: unknown input column '" + input_column + "'");
  std::vector<int> keep;
  for (int r = 0; r < data.rows(); ++r) {
    const double mw = data.X(r, col) * data.base_mva;
    if (!(mw >= lo_mw && mw < hi_mw)) keep.push_back(r);
  }
  if (keep.empty()) throw InputError("corrupt: the window removes every row");
  Corruption result;
  result.data = select_rows(data, keep);
  result.dropped_fraction = data.rows() == 0 ? 0.0 : 1.0 - static_cast<double>(keep.size()) / data.rows();
  return result;
}

nlohmann::json to_json(const IoSchema& s) {
  return {{"input_names", s.input_names}, {"output_names", s.output_names}, {"gen_inputs", s.gen_inputs},
          {"load_buses", s.load_buses},   {"res_buses", s.res_buses},       {"v_buses", s.v_buses},
          {"q_gens", s.q_gens},           {"s_lines", s.s_lines}};
}

IoSchema schema_from_json(const nlohmann::json& j) {
  IoSchema s;
  try {
    s.input_names = j.at("input_names").get<std::vector<std::string>>();
    s.output_names = j.at("output_names").get<std::vector<std::string>>();
    s.gen_inputs = j.at("gen_inputs").get<std::vector<int>>();
    s.load_buses = j.at("load_buses").get<std::vector<int>>();
    s.res_buses = j.at("res_buses").get<std::vector<int>>();
    s.v_buses = j.at("v_buses").get<std::vector<int>>();
    s.q_gens = j.at("q_gens").get<std::vector<int>>();
    s.s_lines = j.at("s_lines").get<std::vector<int>>();
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("schema: ") + e.what());
  }
  s.n_x = static_cast<int>(s.input_names.size());
  s.n_y = static_cast<int>(s.output_names.size());
  if (s.n_x != s.n_pg() + s.n_d() || s.n_y != s.n_v() + s.n_q() + s.n_s()) {
    throw InputError("schema: block sizes do not match label counts");
  }
  return s;
}

nlohmann::json to_json(const UncertaintySpec& spec) {
  nlohmann::json j = {{"sigma_l", spec.sigma_l}, {"sigma_r", spec.sigma_r}};
  if (!spec.gamma.empty()) j["gamma"] = spec.gamma;
  return j;
}

UncertaintySpec spec_from_json(const nlohmann::json& j) {
  UncertaintySpec spec;
  try {
    spec.sigma_l = j.at("sigma_l").get<double>();
    spec.sigma_r = j.at("sigma_r").get<double>();
    if (j.contains("gamma")) spec.gamma = j.at("gamma").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("uncertainty spec: ") + e.what());
  }
  return spec;
}

namespace {

std::vector<std::string> csv_header(const Dataset& data, bool with_r) {
  std::vector<std::string> h;
  for (const auto& n : data.schema.input_names) h.push_back("x:" + n);
  for (const auto& n : data.schema.output_names) h.push_back("y:" + n);
  if (with_r) {
    for (const auto& n : data.schema.output_names) h.push_back("r:" + n);
  }
  return h;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  std::istringstream ss(line);
  while (std::getline(ss, cur, sep)) parts.push_back(cur);
  if (!line.empty() && line.back() == sep) parts.emplace_back();
  return parts;
}

std::string meta_path(const std::string& path) { return path + ".meta.json"; }

}  // namespace

void save_dataset(const Dataset& data, const std::string& path) {
  const bool with_r = data.has_residuals();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write dataset: " + path);
  const auto header = csv_header(data, with_r);
  for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << '\n';
  char buf[40];
  for (int r = 0; r < data.rows(); ++r) {
    bool first = true;
    auto put = [&](double v) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      out << (first ? "" : ",") << buf;
      first = false;
    };
    for (Eigen::Index c = 0; c < data.X.cols(); ++c) put(data.X(r, c));
    for (Eigen::Index c = 0; c < data.Y.cols(); ++c) put(data.Y(r, c));
    if (with_r) {
      for (Eigen::Index c = 0; c < data.R.cols(); ++c) put(data.R(r, c));
    }
    out << '\n';
  }
  if (!out) throw InputError("failed writing dataset: " + path);

  nlohmann::json meta = {{"case_id", data.case_id},        {"seed", data.seed},
                         {"spec", to_json(data.spec)},      {"dropped_rows", data.dropped_rows},
                         {"base_mva", data.base_mva},       {"rows", data.rows()},
                         {"has_residuals", with_r},         {"schema", to_json(data.schema)}};
  std::ofstream mout(meta_path(path), std::ios::binary);
  if (!mout) throw InputError("cannot write dataset sidecar: " + meta_path(path));
  mout << meta.dump(2) << '\n';
}

Dataset load_dataset(const std::string& path) {
  std::ifstream min(meta_path(path));
  if (!min) throw InputError("cannot open dataset sidecar: " + meta_path(path));
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(min);
  } catch (const nlohmann::json::parse_error& e) {
    throw InputError("dataset sidecar parse error: " + std::string(e.what()));
  }
  Dataset data;
  int rows = 0;
  bool with_r = false;
  try {
    data.schema = schema_from_json(meta.at("schema"));
    data.case_id = meta.at("case_id").get<std::string>();
    data.seed = meta.at("seed").get<std::uint64_t>();
    data.spec = spec_from_json(meta.at("spec"));
    data.dropped_rows = meta.at("dropped_rows").get<int>();
    data.base_mva = meta.at("base_mva").get<double>();
    rows = meta.at("rows").get<int>();
    with_r = meta.at("has_residuals").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw InputError("dataset sidecar: " + std::string(e.what()));
  }

  std::ifstream in(path);
  if (!in) throw InputError("cannot open dataset: " + path);
  std::string line;
  if (!std::getline(in, line)) throw InputError(path + ": missing header");
  const auto expected = csv_header(data, with_r);
  if (split(line, ',') != expected) throw InputError(path + ": header does not match the dataset schema");

  const int nx = data.schema.n_x;
  const int ny = data.schema.n_y;
  data.X.resize(rows, nx);
  data.Y.resize(rows, ny);
  if (with_r) data.R.resize(rows, ny);
  int r = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (r >= rows) throw InputError(path + ": more data lines than recorded in the sidecar");
    const auto fields = split(line, ',');
    if (fields.size() != expected.size()) {
      throw InputError(path + ":" + std::to_string(r + 2) + ": expected " + std::to_string(expected.size()) +
                       " fields, found " + std::to_string(fields.size()));
    }
    for (std::size_t c = 0; c < fields.size(); ++c) {
      const char* s = fields[c].c_str();
      char* end = nullptr;
      const double v = std::strtod(s, &end);
      if (end == s || *end != '\0') {
        throw InputError(path + ":" + std::to_string(r + 2) + ": bad number in column " + expected[c]);
      }
      const int ci = static_cast<int>(c);
      if (ci < nx) {
        data.X(r, ci) = v;
      } else if (ci < nx + ny) {
        data.Y(r, ci - nx) = v;
      } else {
        data.R(r, ci - nx - ny) = v;
      }
    }
    ++r;
  }
  if (r != rows) {
    throw InputError(path + ": truncated, expected " + std::to_string(rows) + " rows, found " + std::to_string(r));
  }
  return data;
}

}  // namespace hgp
