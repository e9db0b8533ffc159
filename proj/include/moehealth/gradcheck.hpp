#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "moehealth/types.hpp"

namespace moehealth {

/// Outcome of comparing analytic gradients of the composite loss against
/// central finite differences on a small random instance. Failure is a
/// reportable result, not an exception.
struct GradCheckReport {
  bool passed = false;
  real_t max_rel_error = 0.0;
  std::string worst_parameter;  // "name[row,col]" of the largest deviation
  Index entries_checked = 0;
  int redraws = 0;  // instances rejected for sitting on a routing/ReLU boundary
  real_t tolerance = 1e-4;
};

/// Builds a tiny model (embedding width 4, three experts over {E, ET, ETI},
/// batch of 8 covering all three patterns), then checks every parameter entry
/// of the composite loss. Instances whose tape sits within the boundary
/// margin of a top-k selection change or a ReLU kink are re-drawn, since
/// finite differences are meaningless across a discontinuity.
GradCheckReport run_gradcheck(std::uint64_t seed);

nlohmann::json gradcheck_to_json(const GradCheckReport& report);

}  // namespace moehealth
