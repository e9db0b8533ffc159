#pragma once

#include <vector>

#include "moehealth/moe.hpp"
#include "moehealth/tape.hpp"
#include "moehealth/types.hpp"

namespace moehealth {

/// Predictions are clamped to [kBceEps, 1 - kBceEps] before the logarithm so
/// saturated experts cannot produce log(0).
inline constexpr real_t kBceEps = 1e-7;

/// Balance loss returns 0 when the mean of the usage products is at or below
/// this guard, avoiding division blow-ups on degenerate batches.
inline constexpr real_t kBalanceMeanGuard = 1e-12;

/// Per-batch expert usage: f counts how often each expert appears in some
/// top-k selection; p is the batch mean of the full gate distributions.
struct UsageStats {
  Vector f;
  Vector p;
};

// -- Pure (tape-free) evaluations, used for reporting and as test oracles. --

/// Mean binary cross-entropy of probability predictions against 0/1 labels.
real_t bce_loss(const Vector& predictions, const Vector& labels);

/// Selection counts per expert over a batch of routing decisions.
Vector selection_counts(const std::vector<RoutingDecision>& decisions, Index pool_size);

UsageStats usage_stats(const std::vector<RoutingDecision>& decisions,
                       const std::vector<GateDistribution>& gates);

/// alpha * CV(f ⊙ p) with the population standard deviation; 0 when the mean
/// of the products falls below the guard.
real_t load_balance_loss(const UsageStats& stats, real_t alpha);

/// Task loss plus balance loss (alpha already inside the balance term).
real_t composite_loss(real_t task_loss, real_t balance_loss);

// -- Tape builders for the differentiable training path. --

/// Mean BCE over per-sample scalar prediction nodes. Gradient is zero for a
/// prediction outside the clamp range (the clamp is flat there).
NodeId bce(Tape& t, const std::vector<NodeId>& predictions, const Vector& labels);

/// Batch mean of gate-distribution nodes (the differentiable p of UsageStats).
NodeId mean_gate(Tape& t, const std::vector<NodeId>& gates);

/// alpha * CV(f ⊙ p) where f is a constant count vector (selection is
/// piecewise-constant, so gradient flows only through p).
NodeId balance_penalty(Tape& t, NodeId mean_gate_node, const Vector& f, real_t alpha);

}  // namespace moehealth
