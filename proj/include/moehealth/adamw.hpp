#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "moehealth/parameter.hpp"
#include "moehealth/types.hpp"

namespace moehealth {

struct AdamWConfig {
  real_t learning_rate = 1e-4;
  real_t beta1 = 0.9;
  real_t beta2 = 0.999;
  real_t epsilon = 1e-8;
  real_t weight_decay = 0.01;
};

/// Adaptive-moment optimizer with decoupled weight decay. Moment buffers are
/// created lazily per parameter name; the step counter advances by exactly one
/// per step() call. Gradients of stepped parameters are zeroed afterwards.
class AdamW {
 public:
  explicit AdamW(AdamWConfig config) : config_(config) {}

  /// Steps every parameter in the store.
  void step(ParameterStore& store);

  /// Steps only the named parameters (the others are left untouched,
  /// including their gradients).
  void step(ParameterStore& store, const std::vector<std::string>& names);

  std::uint64_t step_count() const { return step_count_; }
  const AdamWConfig& config() const { return config_; }

 private:
  struct Moments {
    Matrix first;
    Matrix second;
    std::uint64_t steps = 0;  // per-parameter update count for bias correction
  };

  void update(Parameter& p);

  AdamWConfig config_;
  std::unordered_map<std::string, Moments> moments_;
  std::uint64_t step_count_ = 0;
};

}  // namespace moehealth
