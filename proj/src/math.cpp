#include "moehealth/math.hpp"

#include <string>

#include "moehealth/errors.hpp"

namespace moehealth {

namespace {

std::string shape_of(Index rows, Index cols) {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

}  // namespace

Vector linear_forward(const Matrix& weight, const Vector& bias, const Vector& x) {
  if (weight.cols() != x.size() || weight.rows() != bias.size()) {
    throw ShapeError("linear_forward: W is " + shape_of(weight.rows(), weight.cols()) +
                     ", b is " + shape_of(bias.size(), 1) + ", x is " + shape_of(x.size(), 1));
  }
  Vector out = bias;
  out.noalias() += weight * x;
  return out;
}

Vector softmax(const Vector& logits) {
  if (logits.size() < 1) {
    throw ValueError("softmax: input is empty");
  }
  if (!logits.allFinite()) {
    throw ValueError("softmax: input contains non-finite entries");
  }
  Vector shifted = (logits.array() - logits.maxCoeff()).exp().matrix();
  return shifted / shifted.sum();
}

}  // namespace moehealth
