#include "moehealth/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <vector>

#include "moehealth/errors.hpp"

namespace moehealth {

void validate_scored_batch(const ScoredBatch& batch) {
  if (batch.scores.size() != batch.labels.size()) {
    throw ShapeError("scored batch: " + std::to_string(batch.scores.size()) + " scores vs " +
                     std::to_string(batch.labels.size()) + " labels");
  }
  if (batch.scores.size() == 0) {
    throw ValueError("scored batch: empty");
  }
  for (Index i = 0; i < batch.scores.size(); ++i) {
    const real_t s = batch.scores[i];
    if (!(s >= 0.0 && s <= 1.0)) {
      throw ValueError("scored batch: score " + std::to_string(s) + " outside [0,1] at index " +
                       std::to_string(i));
    }
    const real_t y = batch.labels[i];
    if (y != 0.0 && y != 1.0) {
      throw ValueError("scored batch: label must be 0 or 1, got " + std::to_string(y) +
                       " at index " + std::to_string(i));
    }
  }
}

std::optional<real_t> auroc(const ScoredBatch& batch) {
  validate_scored_batch(batch);
  const Index n = batch.scores.size();
  const auto positives = static_cast<Index>(batch.labels.sum());
  const Index negatives = n - positives;
  if (positives == 0 || negatives == 0) {
    return std::nullopt;  // single-class: no positive-negative pairs to rank
  }

  // Midranks: tied scores share the average of the ranks they span, which is
  // exactly the "ties count 1/2" convention of the pairwise definition.
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::sort(order.begin(), order.end(),
            [&](Index a, Index b) { return batch.scores[a] < batch.scores[b]; });

  std::vector<real_t> rank(static_cast<std::size_t>(n));
  Index i = 0;
  while (i < n) {
    Index j = i;
    while (j + 1 < n &&
           batch.scores[order[static_cast<std::size_t>(j + 1)]] ==
               batch.scores[order[static_cast<std::size_t>(i)]]) {
      ++j;
    }
    const real_t midrank = static_cast<real_t>(i + j) / 2.0 + 1.0;  // ranks are 1-based
    for (Index m = i; m <= j; ++m) {
      rank[static_cast<std::size_t>(order[static_cast<std::size_t>(m)])] = midrank;
    }
    i = j + 1;
  }

  real_t positive_rank_sum = 0.0;
  for (Index idx = 0; idx < n; ++idx) {
    if (batch.labels[idx] == 1.0) positive_rank_sum += rank[static_cast<std::size_t>(idx)];
  }
  const real_t p = static_cast<real_t>(positives);
  const real_t q = static_cast<real_t>(negatives);
  return (positive_rank_sum - p * (p + 1.0) / 2.0) / (p * q);
}

real_t f1(const ScoredBatch& batch, real_t threshold) {
  validate_scored_batch(batch);
  Index true_pos = 0;
  Index pred_pos = 0;
  Index actual_pos = 0;
  for (Index i = 0; i < batch.scores.size(); ++i) {
    const bool predicted = batch.scores[i] >= threshold;
    const bool actual = batch.labels[i] == 1.0;
    pred_pos += predicted;
    actual_pos += actual;
    true_pos += (predicted && actual);
  }
  // F1 = 2TP / (2TP + FP + FN); zero when there is nothing to score.
  const real_t denom = static_cast<real_t>(2 * true_pos + (pred_pos - true_pos) +
                                           (actual_pos - true_pos));
  if (denom == 0.0) return 0.0;
  return 2.0 * static_cast<real_t>(true_pos) / denom;
}

}  // namespace moehealth
