#pragma once

#include <deque>
#include <string>
#include <unordered_map>
#include <vector>

#include "moehealth/rng.hpp"
#include "moehealth/types.hpp"

namespace moehealth {

/// A named trainable array with a same-shape gradient slot. Vectors are
/// stored as n x 1 matrices.
struct Parameter {
  std::string name;
  Matrix values;
  Matrix gradient;

  Index rows() const { return values.rows(); }
  Index cols() const { return values.cols(); }

  /// [n] for vectors, [rows, cols] for matrices.
  std::vector<Index> shape() const {
    if (values.cols() == 1) return {values.rows()};
    return {values.rows(), values.cols()};
  }
};

/// Insertion-ordered collection of uniquely named parameters.
class ParameterStore {
 public:
  /// Creates a zero-initialized parameter. Throws ConfigError on duplicate names.
  Parameter& create(const std::string& name, Index rows, Index cols = 1);

  Parameter& at(const std::string& name);
  const Parameter& at(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  std::size_t size() const { return params_.size(); }
  Parameter& operator[](std::size_t i) { return params_[i]; }
  const Parameter& operator[](std::size_t i) const { return params_[i]; }

  std::vector<std::string> names() const;

  void zero_gradients();

  /// Deep copy of all values, in insertion order.
  std::vector<Matrix> snapshot_values() const;
  /// Restores values captured by snapshot_values(). Throws ShapeError on drift.
  void restore_values(const std::vector<Matrix>& snapshot);

 private:
  // Deque keeps Parameter references stable across create() calls.
  std::deque<Parameter> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Fills a matrix uniformly from [-s, s] with s = sqrt(6 / (fan_in + fan_out)).
void init_xavier_uniform(Matrix& values, Rng& rng);

}  // namespace moehealth
