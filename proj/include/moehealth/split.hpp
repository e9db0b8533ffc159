#pragma once

#include <cstdint>
#include <vector>

#include "moehealth/sample.hpp"
#include "moehealth/types.hpp"

namespace moehealth {

/// Deterministic shuffled partition. With stratify on, the shuffle-and-cut
/// happens inside each label group, so every split's positive fraction stays
/// close to the global one.
struct SplitSpec {
  real_t train_fraction = 0.8;
  real_t val_fraction = 0.1;
  real_t test_fraction = 0.1;
  std::uint64_t seed = 7;
  bool stratify = true;
};

struct Splits {
  std::vector<Sample> train;
  std::vector<Sample> val;
  std::vector<Sample> test;
};

/// Throws ConfigError on invalid fractions, ValueError on fewer than 10
/// samples.
Splits split(const std::vector<Sample>& samples, const SplitSpec& spec);

}  // namespace moehealth
