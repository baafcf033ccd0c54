#include "hgp/grid.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "hgp/errors.hpp"

namespace hgp {

namespace {

using nlohmann::json;

const char* kind_name(BusKind kind) {
  switch (kind) {
    case BusKind::slack:
      return "slack";
    case BusKind::generator:
      return "generator";
    case BusKind::load:
      return "load";
  }
  return "load";
}

BusKind parse_kind(const std::string& s, const std::string& where) {
  if (s == "slack") return BusKind::slack;
  if (s == "generator") return BusKind::generator;
  if (s == "load") return BusKind::load;
  throw InputError(where + ".kind: unknown bus kind '" + s + "'");
}

double number(const json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) throw InputError(where + "." + key + ": missing field");
  if (!it->is_number()) throw InputError(where + "." + key + ": expected number");
  double v = it->get<double>();
  if (!std::isfinite(v)) throw InputError(where + "." + key + ": not finite");
  return v;
}

double number_or(const json& obj, const char* key, double fallback, const std::string& where) {
  if (!obj.contains(key)) return fallback;
  return number(obj, key, where);
}

int integer(const json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) throw InputError(where + "." + key + ": missing field");
  if (!it->is_number_integer()) throw InputError(where + "." + key + ": expected integer");
  return it->get<int>();
}

const json& array(const json& doc, const char* key) {
  auto it = doc.find(key);
  if (it == doc.end()) throw InputError(std::string(key) + ": missing field");
  if (!it->is_array()) throw InputError(std::string(key) + ": expected array");
  return *it;
}

std::string label_with_suffix(std::map<std::string, int>& seen, std::string label) {
  int count = ++seen[label];
  if (count > 1) label += "#" + std::to_string(count);
  return label;
}

}  // namespace

int GridCase::slack_bus() const {
  for (int i = 0; i < n_bus(); ++i) {
    if (buses[i].kind == BusKind::slack) return i;
  }
  throw InputError("case has no slack bus");
}

int GridCase::slack_generator() const {
  const int s = slack_bus();
  for (int k = 0; k < n_gen(); ++k) {
    if (generators[k].bus == s) return k;
  }
  throw InputError("slack bus has no generator");
}

int GridCase::bus_index(int id) const {
  for (int i = 0; i < n_bus(); ++i) {
    if (buses[i].id == id) return i;
  }
  return -1;
}

double GridCase::generator_cost(int k, double p_pu) const {
  const Generator& g = generators[k];
  const double p = p_pu * base_mva;
  return g.c2 * p * p + g.c1 * p + g.c0;
}

void validate_case(const GridCase& grid) {
  if (!(grid.base_mva > 0.0)) throw InputError("base_mva must be positive");
  if (grid.buses.empty()) throw InputError("case has no buses");
  int slack_count = 0;
  for (int i = 0; i < grid.n_bus(); ++i) {
    const Bus& b = grid.buses[i];
    const std::string where = "buses[" + std::to_string(i) + "]";
    if (!(b.v_min < b.v_max)) throw InputError(where + ": v_min < v_max violated");
    if (b.p_load < 0.0) throw InputError(where + ": p_load >= 0 violated");
    if (b.p_res < 0.0) throw InputError(where + ": p_res >= 0 violated");
    if (b.kind == BusKind::slack) ++slack_count;
    for (int j = 0; j < i; ++j) {
      if (grid.buses[j].id == b.id) throw InputError(where + ": duplicate bus id " + std::to_string(b.id));
    }
  }
  if (slack_count != 1) {
    throw InputError("exactly one slack bus required, found " + std::to_string(slack_count));
  }
  for (int l = 0; l < grid.n_line(); ++l) {
    const Line& ln = grid.lines[l];
    const std::string where = "lines[" + std::to_string(l) + "]";
    if (ln.from < 0 || ln.from >= grid.n_bus() || ln.to < 0 || ln.to >= grid.n_bus()) {
      throw InputError(where + ": endpoint references a missing bus");
    }
    if (ln.from == ln.to) throw InputError(where + ": from != to violated");
    if (!(ln.s_max > 0.0)) throw InputError(where + ": s_max > 0 violated");
  }
  bool slack_has_gen = false;
  for (int k = 0; k < grid.n_gen(); ++k) {
    const Generator& g = grid.generators[k];
    const std::string where = "generators[" + std::to_string(k) + "]";
    if (g.bus < 0 || g.bus >= grid.n_bus()) throw InputError(where + ": bus does not exist");
    if (!(g.p_min < g.p_max)) throw InputError(where + ": p_min < p_max violated");
    if (!(g.q_min < g.q_max)) throw InputError(where + ": q_min < q_max violated");
    if (g.c2 < 0.0 || g.c1 < 0.0 || g.c0 < 0.0) throw InputError(where + ": cost coefficients must be >= 0");
    if (grid.buses[g.bus].kind == BusKind::load) {
      throw InputError(where + ": generator attached to a load-kind bus");
    }
    if (grid.buses[g.bus].kind == BusKind::slack) slack_has_gen = true;
  }
  if (!slack_has_gen) throw InputError("slack bus has no generator");
}

GridCase case_from_json(const json& doc, const std::string& name) {
  if (!doc.is_object()) throw InputError("case document must be a JSON object");
  GridCase grid;
  grid.name = doc.value("name", name);
  grid.base_mva = number(doc, "base_mva", "case");
  const double base = grid.base_mva;
  if (!(base > 0.0)) throw InputError("base_mva must be positive");

  const json& buses = array(doc, "buses");
  for (std::size_t i = 0; i < buses.size(); ++i) {
    const std::string where = "buses[" + std::to_string(i) + "]";
    const json& jb = buses[i];
    if (!jb.is_object()) throw InputError(where + ": expected object");
    Bus b;
    b.id = integer(jb, "id", where);
    if (!jb.contains("kind") || !jb["kind"].is_string()) throw InputError(where + ".kind: expected string");
    b.kind = parse_kind(jb["kind"].get<std::string>(), where);
    b.v_min = number(jb, "v_min", where);
    b.v_max = number(jb, "v_max", where);
    b.p_load = number_or(jb, "p_load", 0.0, where) / base;
    b.q_load = number_or(jb, "q_load", 0.0, where) / base;
    b.p_res = number_or(jb, "p_res", 0.0, where) / base;
    b.q_res = number_or(jb, "q_res", 0.0, where) / base;
    grid.buses.push_back(b);
  }

  auto index_of = [&](const json& obj, const char* key, const std::string& where) {
    const int id = integer(obj, key, where);
    const int idx = grid.bus_index(id);
    if (idx < 0) throw InputError(where + "." + key + ": unknown bus id " + std::to_string(id));
    return idx;
  };

  const json& lines = array(doc, "lines");
  for (std::size_t l = 0; l < lines.size(); ++l) {
    const std::string where = "lines[" + std::to_string(l) + "]";
    const json& jl = lines[l];
    if (!jl.is_object()) throw InputError(where + ": expected object");
    Line ln;
    ln.from = index_of(jl, "from", where);
    ln.to = index_of(jl, "to", where);
    ln.r = number(jl, "r", where);
    ln.x = number(jl, "x", where);
    const double z2 = ln.r * ln.r + ln.x * ln.x;
    if (!(z2 > 0.0)) throw InputError(where + ": zero series impedance");
    ln.g = ln.r / z2;
    ln.b = -ln.x / z2;
    ln.b_shunt = number_or(jl, "b_shunt", 0.0, where);
    ln.s_max = number(jl, "s_max", where) / base;
    grid.lines.push_back(ln);
  }

  const json& gens = array(doc, "generators");
  for (std::size_t k = 0; k < gens.size(); ++k) {
    const std::string where = "generators[" + std::to_string(k) + "]";
    const json& jg = gens[k];
    if (!jg.is_object()) throw InputError(where + ": expected object");
    Generator g;
    g.bus = index_of(jg, "bus", where);
    g.p_min = number(jg, "p_min", where) / base;
    g.p_max = number(jg, "p_max", where) / base;
    g.q_min = number(jg, "q_min", where) / base;
    g.q_max = number(jg, "q_max", where) / base;
    g.v_set = number_or(jg, "v_set", 1.0, where);
    g.c2 = number_or(jg, "c2", 0.0, where);
    g.c1 = number_or(jg, "c1", 0.0, where);
    g.c0 = number_or(jg, "c0", 0.0, where);
    grid.generators.push_back(g);
  }

  validate_case(grid);
  return grid;
}

GridCase parse_case(const std::string& text, const std::string& name) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw InputError(name + ": parse error: " + e.what());
  }
  return case_from_json(doc, name);
}

GridCase load_case(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open case file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  std::string name = path;
  if (auto slash = name.find_last_of('/'); slash != std::string::npos) name = name.substr(slash + 1);
  if (auto dot = name.find_last_of('.'); dot != std::string::npos) name = name.substr(0, dot);
  return parse_case(ss.str(), name);
}

json case_to_json(const GridCase& grid) {
  const double base = grid.base_mva;
  json doc;
  doc["name"] = grid.name;
  doc["base_mva"] = base;
  doc["buses"] = json::array();
  for (const Bus& b : grid.buses) {
    doc["buses"].push_back({{"id", b.id},
                            {"kind", kind_name(b.kind)},
                            {"v_min", b.v_min},
                            {"v_max", b.v_max},
                            {"p_load", b.p_load * base},
                            {"q_load", b.q_load * base},
                            {"p_res", b.p_res * base},
                            {"q_res", b.q_res * base}});
  }
  doc["lines"] = json::array();
  for (const Line& ln : grid.lines) {
    doc["lines"].push_back({{"from", grid.buses[ln.from].id},
                            {"to", grid.buses[ln.to].id},
                            {"r", ln.r},
                            {"x", ln.x},
                            {"b_shunt", ln.b_shunt},
                            {"s_max", ln.s_max * base}});
  }
  doc["generators"] = json::array();
  for (const Generator& g : grid.generators) {
    doc["generators"].push_back({{"bus", grid.buses[g.bus].id},
                                 {"p_min", g.p_min * base},
                                 {"p_max", g.p_max * base},
                                 {"q_min", g.q_min * base},
                                 {"q_max", g.q_max * base},
                                 {"v_set", g.v_set},
                                 {"c2", g.c2},
                                 {"c1", g.c1},
                                 {"c0", g.c0}});
  }
  return doc;
}

std::string serialize_case(const GridCase& grid) { return case_to_json(grid).dump(2); }

Admittance build_admittance(const GridCase& grid) {
  const int n = grid.n_bus();
  Admittance y{Eigen::MatrixXd::Zero(n, n), Eigen::MatrixXd::Zero(n, n)};
  for (const Line& ln : grid.lines) {
    const int i = ln.from;
    const int j = ln.to;
    y.G(i, i) += ln.g;
    y.G(j, j) += ln.g;
    y.G(i, j) -= ln.g;
    y.G(j, i) -= ln.g;
    y.B(i, i) += ln.b + 0.5 * ln.b_shunt;
    y.B(j, j) += ln.b + 0.5 * ln.b_shunt;
    y.B(i, j) -= ln.b;
    y.B(j, i) -= ln.b;
  }
  return y;
}

IoSchema io_schema(const GridCase& grid) {
  IoSchema s;
  const int slack_gen = grid.slack_generator();

  std::vector<int> gens(grid.n_gen());
  for (int k = 0; k < grid.n_gen(); ++k) gens[k] = k;
  std::stable_sort(gens.begin(), gens.end(), [&](int a, int b) {
    return grid.generators[a].bus < grid.generators[b].bus;
  });
  for (int k : gens) {
    if (k != slack_gen) s.gen_inputs.push_back(k);
    s.q_gens.push_back(k);
  }
  for (int i = 0; i < grid.n_bus(); ++i) {
    const Bus& b = grid.buses[i];
    if (b.p_load > 0.0) s.load_buses.push_back(i);
    if (b.p_res > 0.0) s.res_buses.push_back(i);
    if (b.kind == BusKind::load && (b.p_load > 0.0 || b.q_load != 0.0)) s.v_buses.push_back(i);
  }
  for (int l = 0; l < grid.n_line(); ++l) s.s_lines.push_back(l);

  std::map<std::string, int> seen;
  auto bus_id = [&](int i) { return std::to_string(grid.buses[i].id); };
  for (int k : s.gen_inputs) s.input_names.push_back(label_with_suffix(seen, "p_g:" + bus_id(grid.generators[k].bus)));
  for (int i : s.load_buses) s.input_names.push_back(label_with_suffix(seen, "p_l:" + bus_id(i)));
  for (int i : s.res_buses) s.input_names.push_back(label_with_suffix(seen, "p_r:" + bus_id(i)));
  for (int i : s.v_buses) s.output_names.push_back(label_with_suffix(seen, "v:" + bus_id(i)));
  for (int k : s.q_gens) s.output_names.push_back(label_with_suffix(seen, "q_g:" + bus_id(grid.generators[k].bus)));
  for (int l : s.s_lines) {
    const Line& ln = grid.lines[l];
    s.output_names.push_back(label_with_suffix(seen, "s:" + bus_id(ln.from) + "-" + bus_id(ln.to)));
  }
  s.n_x = static_cast<int>(s.input_names.size());
  s.n_y = static_cast<int>(s.output_names.size());
  return s;
}

int IoSchema::input_index(const std::string& label) const {
  for (int i = 0; i < n_x; ++i) {
    if (input_names[i] == label) return i;
  }
  return -1;
}

Eigen::VectorXd forecast_inputs(const GridCase& grid, const IoSchema& schema,
                                const Eigen::VectorXd& pg_nonslack) {
  if (pg_nonslack.size() != schema.n_pg()) throw InputError("forecast_inputs: dispatch dimension mismatch");
  Eigen::VectorXd x(schema.n_x);
  int c = 0;
  for (int k = 0; k < schema.n_pg(); ++k) x[c++] = pg_nonslack[k];
  for (int i : schema.load_buses) x[c++] = grid.buses[i].p_load;
  for (int i : schema.res_buses) x[c++] = grid.buses[i].p_res;
  return x;
}

void output_limits(const GridCase& grid, const IoSchema& schema, Eigen::VectorXd& y_min,
                   Eigen::VectorXd& y_max) {
  y_min.resize(schema.n_y);
  y_max.resize(schema.n_y);
  int c = 0;
  for (int i : schema.v_buses) {
    y_min[c] = grid.buses[i].v_min;
    y_max[c++] = grid.buses[i].v_max;
  }
  for (int k : schema.q_gens) {
    y_min[c] = grid.generators[k].q_min;
    y_max[c++] = grid.generators[k].q_max;
  }
  for (int l : schema.s_lines) {
    y_min[c] = 0.0;
    y_max[c++] = grid.lines[l].s_max;
  }
}

}  // namespace hgp
