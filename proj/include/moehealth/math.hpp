#pragma once

#include <cmath>

#include "moehealth/types.hpp"

namespace moehealth {

/// W * x + b. Throws ShapeError naming both shapes on mismatch.
Vector linear_forward(const Matrix& weight, const Vector& bias, const Vector& x);

/// Numerically stable softmax (max-subtraction). Entries are positive and sum
/// to 1. Throws ValueError on empty or non-finite input.
Vector softmax(const Vector& logits);

inline Vector relu(const Vector& x) { return x.cwiseMax(0.0); }

inline Vector sigmoid(const Vector& x) {
  return (1.0 + (-x.array()).exp()).inverse().matrix();
}

inline real_t sigmoid(real_t x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace moehealth
