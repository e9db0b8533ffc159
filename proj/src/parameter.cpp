#include "moehealth/parameter.hpp"

#include <cmath>

#include "moehealth/errors.hpp"

namespace moehealth {

Parameter& ParameterStore::create(const std::string& name, Index rows, Index cols) {
  if (index_.count(name) > 0) {
    throw ConfigError("parameter '" + name + "' already exists");
  }
  if (rows <= 0 || cols <= 0) {
    throw ConfigError("parameter '" + name + "' has non-positive shape");
  }
  index_.emplace(name, params_.size());
  Parameter& p = params_.emplace_back();
  p.name = name;
  p.values = Matrix::Zero(rows, cols);
  p.gradient = Matrix::Zero(rows, cols);
  return p;
}

Parameter& ParameterStore::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) {
    throw ConfigError("unknown parameter '" + name + "'");
  }
  return params_[it->second];
}

const Parameter& ParameterStore::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) {
    throw ConfigError("unknown parameter '" + name + "'");
  }
  return params_[it->second];
}

std::vector<std::string> ParameterStore::names() const {
  std::vector<std::string> out;
  out.reserve(params_.size());
  for (const Parameter& p : params_) out.push_back(p.name);
  return out;
}

void ParameterStore::zero_gradients() {
  for (Parameter& p : params_) p.gradient.setZero();
}

std::vector<Matrix> ParameterStore::snapshot_values() const {
  std::vector<Matrix> out;
  out.reserve(params_.size());
  for (const Parameter& p : params_) out.push_back(p.values);
  return out;
}

void ParameterStore::restore_values(const std::vector<Matrix>& snapshot) {
  if (snapshot.size() != params_.size()) {
    throw ShapeError("restore_values: snapshot has " + std::to_string(snapshot.size()) +
                     " entries, store has " + std::to_string(params_.size()));
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (snapshot[i].rows() != params_[i].values.rows() ||
        snapshot[i].cols() != params_[i].values.cols()) {
      throw ShapeError("restore_values: shape drift on parameter '" + params_[i].name + "'");
    }
    params_[i].values = snapshot[i];
  }
}

void init_xavier_uniform(Matrix& values, Rng& rng) {
  const real_t fan_in = static_cast<real_t>(values.cols());
  const real_t fan_out = static_cast<real_t>(values.rows());
  const real_t bound = std::sqrt(6.0 / (fan_in + fan_out));
  for (Index c = 0; c < values.cols(); ++c) {
    for (Index r = 0; r < values.rows(); ++r) {
      values(r, c) = rng.uniform(-bound, bound);
    }
  }
}

}  // namespace moehealth
