#include "hgp/model.hpp"

#include <fstream>
#include <sstream>

#include "hgp/errors.hpp"
#include "hgp/matrix_json.hpp"

namespace hgp {

ModelMode parse_model_mode(const std::string& name) {
  if (name == "hybrid") return ModelMode::hybrid;
  if (name == "full") return ModelMode::full;
  throw InputError("unknown model mode '" + name + "' (expected hybrid or full)");
}

std::string to_string(ModelMode m) { return m == ModelMode::hybrid ? "hybrid" : "full"; }

PosteriorView HybridModel::view() const {
  if (const auto* s = std::get_if<SparseGpModel>(&gp)) return s->view();
  return std::get<GpModel>(gp).view();
}

HybridModel train_model(const Dataset& data, const TrainConfig& cfg) {
  if (data.rows() < 2) throw InputError("training needs at least two rows");
  HybridModel model;
  model.schema = data.schema;
  model.mode = cfg.mode;
  model.case_id = data.case_id;
  model.seed = cfg.seed;
  model.train_X = data.X;
  if (cfg.mode == ModelMode::hybrid) {
    model.surrogate = fit_linear(data);
    model.train_targets = data.Y - predict_linear(*model.surrogate, data.X);
  } else {
    model.train_targets = data.Y;
  }
  if (cfg.sparse_m) {
    if (*cfg.sparse_m > data.rows()) {
      throw InputError("sparse_m (" + std::to_string(*cfg.sparse_m) + ") exceeds the number of training rows (" +
                       std::to_string(data.rows()) + ")");
    }
    SparseTrainOptions opts;
    opts.m = *cfg.sparse_m;
    opts.strategy = cfg.strategy;
    opts.restarts = cfg.restarts;
    opts.seed = cfg.seed;
    model.gp = train_sparse(model.train_X, model.train_targets, opts);
  } else {
    GpTrainOptions opts;
    opts.restarts = cfg.restarts;
    opts.seed = cfg.seed;
    model.gp = train_gp(model.train_X, model.train_targets, opts);
  }
  return model;
}

Eigen::VectorXd linear_part(const HybridModel& model, const Eigen::VectorXd& x) {
  if (model.surrogate) return predict_linear(*model.surrogate, x);
  return Eigen::VectorXd::Zero(model.n_y());
}

PosteriorMoments predict_model(const HybridModel& model, const Eigen::VectorXd& x) {
  PosteriorMoments m = predict(model.view(), x);
  m.mean += linear_part(model, x);
  return m;
}

Eigen::MatrixXd predict_means(const HybridModel& model, const Eigen::MatrixXd& X) {
  const PosteriorView view = model.view();
  Eigen::MatrixXd out(X.rows(), model.n_y());
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const Eigen::VectorXd x = X.row(i).transpose();
    Eigen::VectorXd mu = linear_part(model, x);
    for (int a = 0; a < view.n_y(); ++a) mu[a] += evaluate_posterior(*view.support, view.output(a), x, 0).mean;
    out.row(i) = mu.transpose();
  }
  return out;
}

namespace {

nlohmann::json hp_json(const Hyperparams& hp) {
  return {{"lengthscales", vector_json(hp.lengthscales)}, {"signal_var", hp.signal_var}, {"noise_var", hp.noise_var}};
}

Hyperparams hp_from_json(const nlohmann::json& j) {
  Hyperparams hp;
  hp.lengthscales = json_vector(j.at("lengthscales"));
  hp.signal_var = j.at("signal_var").get<double>();
  hp.noise_var = j.at("noise_var").get<double>();
  if (!(hp.signal_var > 0.0) || !(hp.noise_var > 0.0) || (hp.lengthscales.array() <= 0.0).any()) {
    throw InputError("model file has non-positive hyperparameters");
  }
  return hp;
}

}  // namespace

nlohmann::json to_json(const HybridModel& model) {
  nlohmann::json j;
  j["format"] = "hybrid-gp-model";
  j["version"] = 1;
  j["case_id"] = model.case_id;
  j["seed"] = model.seed;
  j["mode"] = to_string(model.mode);
  j["schema"] = to_json(model.schema);
  if (model.surrogate) j["surrogate"] = to_json(*model.surrogate);
  j["X"] = matrix_json(model.train_X);
  j["targets"] = matrix_json(model.train_targets);
  nlohmann::json outs = nlohmann::json::array();
  const PosteriorView view = model.view();
  for (int a = 0; a < view.n_y(); ++a) {
    nlohmann::json o;
    o["name"] = model.schema.output_names[static_cast<std::size_t>(a)];
    o["hyperparams"] = hp_json(view.output(a).hp);
    o["w"] = vector_json(view.output(a).weights);
    if (const auto* s = std::get_if<SparseGpModel>(&model.gp)) {
      o["mu_m"] = vector_json(s->mu_m[static_cast<std::size_t>(a)]);
      o["A_m"] = matrix_json(s->A_m[static_cast<std::size_t>(a)]);
    }
    outs.push_back(std::move(o));
  }
  j["outputs"] = std::move(outs);
  if (const auto* s = std::get_if<SparseGpModel>(&model.gp)) j["inducing"] = matrix_json(s->Z);
  return j;
}

HybridModel model_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "hybrid-gp-model") throw InputError("not a model file");
    HybridModel model;
    model.case_id = j.at("case_id").get<std::string>();
    model.seed = j.at("seed").get<std::uint64_t>();
    model.mode = parse_model_mode(j.at("mode").get<std::string>());
    model.schema = schema_from_json(j.at("schema"));
    if (j.contains("surrogate")) model.surrogate = surrogate_from_json(j.at("surrogate"));
    if ((model.mode == ModelMode::hybrid) != model.surrogate.has_value()) {
      throw InputError("model file: surrogate presence does not match mode");
    }
    model.train_X = json_matrix(j.at("X"), model.schema.n_x);
    model.train_targets = json_matrix(j.at("targets"), model.schema.n_y);
    if (model.train_X.cols() != model.schema.n_x || model.train_targets.cols() != model.schema.n_y ||
        model.train_X.rows() != model.train_targets.rows()) {
      throw InputError("model file: training data does not match the schema");
    }
    std::vector<Hyperparams> hps;
    for (const auto& o : j.at("outputs")) {
      hps.push_back(hp_from_json(o.at("hyperparams")));
      if (hps.back().dim() != model.schema.n_x) throw InputError("model file: hyperparameter dimension mismatch");
    }
    if (static_cast<int>(hps.size()) != model.schema.n_y) throw InputError("model file: output count mismatch");
    if (j.contains("inducing")) {
      const Eigen::MatrixXd Z = json_matrix(j.at("inducing"), model.schema.n_x);
      model.gp = make_sparse(model.train_X, model.train_targets, Z, hps);
    } else {
      model.gp = make_gp(model.train_X, model.train_targets, hps);
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed model file: ") + e.what());
  }
}

void save_model(const HybridModel& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write model file '" + path + "'");
  out << to_json(model).dump(1) << '\n';
}

HybridModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open model file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InputError("malformed model file '" + path + "': " + e.what());
  }
  return model_from_json(j);
}

}  // namespace hgp
