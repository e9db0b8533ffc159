#pragma once

#include <Eigen/Dense>

#include <cstdint>

namespace moehealth {

// All numerics run in 64-bit reals; swap the scalar here if ever needed.
using real_t = double;

template <typename T>
using MatrixX = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using VectorX = Eigen::Matrix<T, Eigen::Dynamic, 1>;
template <typename T>
using ArrayX = Eigen::Array<T, Eigen::Dynamic, 1>;

using Matrix = MatrixX<real_t>;
using Vector = VectorX<real_t>;
using Array = ArrayX<real_t>;

using Index = Eigen::Index;

}  // namespace moehealth
