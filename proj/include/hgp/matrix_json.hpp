#pragma once

#include <vector>

#include <Eigen/Dense>

#include "hgp/errors.hpp"
#include "json.hpp"

namespace hgp {

inline nlohmann::json vector_json(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

/// Row-major nested arrays.
inline nlohmann::json matrix_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    std::vector<double> row(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index j = 0; j < m.cols(); ++j) row[static_cast<std::size_t>(j)] = m(i, j);
    rows.push_back(row);
  }
  return rows;
}

inline Eigen::VectorXd json_vector(const nlohmann::json& j) {
  if (!j.is_array()) throw InputError("expected a numeric array");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw InputError("expected a numeric array");
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return v;
}

inline Eigen::MatrixXd json_matrix(const nlohmann::json& j, Eigen::Index cols_if_empty = 0) {
  if (!j.is_array()) throw InputError("expected a matrix (array of rows)");
  if (j.empty()) return Eigen::MatrixXd(0, cols_if_empty);
  const std::size_t cols = j[0].size();
  Eigen::MatrixXd m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_array() || j[i].size() != cols) throw InputError("ragged matrix");
    for (std::size_t c = 0; c < cols; ++c) {
      if (!j[i][c].is_number()) throw InputError("expected a numeric matrix");
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = j[i][c].get<double>();
    }
  }
  return m;
}

}  // namespace hgp
