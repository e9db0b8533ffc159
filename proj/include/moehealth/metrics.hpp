#pragma once

#include <optional>

#include "moehealth/types.hpp"

namespace moehealth {

/// Scores in [0,1] paired with 0/1 labels; the unit every metric consumes.
struct ScoredBatch {
  Vector scores;
  Vector labels;
};

/// Throws if lengths differ, the batch is empty, scores leave [0,1], or
/// labels are not exactly 0 or 1.
void validate_scored_batch(const ScoredBatch& batch);

/// Probability that a uniformly random positive outranks a uniformly random
/// negative, ties counted 1/2 (rank-statistic form; equals trapezoidal ROC
/// area). A single-class batch has no defined value and returns nullopt.
std::optional<real_t> auroc(const ScoredBatch& batch);

/// F1 at `threshold` (prediction = score >= threshold); 0 when precision and
/// recall are both undefined or zero.
real_t f1(const ScoredBatch& batch, real_t threshold = 0.5);

}  // namespace moehealth
