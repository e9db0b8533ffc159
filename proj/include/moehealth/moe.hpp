#pragma once

#include <optional>
#include <string>
#include <vector>

#include "moehealth/encoders.hpp"
#include "moehealth/parameter.hpp"
#include "moehealth/sample.hpp"
#include "moehealth/tape.hpp"
#include "moehealth/types.hpp"

namespace moehealth {

inline constexpr NodeId kNoNode = -1;

/// Probability vector over the expert pool (full softmax output).
using GateDistribution = Vector;

/// Top-k selection over a gate distribution. `selected` holds the indices of
/// the k largest gate values in rank order (ties toward the smaller index);
/// `weights` are the selected gate values renormalized to sum to 1.
struct RoutingDecision {
  std::vector<Index> selected;
  Vector weights;
  bool clamped = false;  // requested k exceeded the pool size
};

/// Distinct availability patterns in `samples`, sorted by canonical key.
/// Throws DataError on an empty input.
std::vector<ModalityCombination> enumerate_combinations(const std::vector<Sample>& samples);

/// Pure routing step (no tape involvement; selection is piecewise-constant).
RoutingDecision route_topk(const GateDistribution& gate, int k);

/// Gating network:
///   softmax(W_skip * R + W_out * ReLU(W_hidden * R + b_hidden) + b_out).
/// The linear skip path makes routing priors expressible directly on the
/// fused representation; the MLP branch learns per-sample refinements.
class GatingNetwork {
 public:
  /// Neutral start: the skip path is zero-initialized, so the initial gate
  /// is the Xavier-initialized MLP alone.
  GatingNetwork(Index input_dim, Index hidden_dim, Index num_experts, ParameterStore& store,
                Rng& init_rng);

  /// Combination-prior start for pools of combination-specialized experts.
  /// `slot_markers` (embed_dim x num-modalities, column m = the initial
  /// missing-slot embedding of modality m) lets the skip path read each
  /// sample's availability pattern at initialization; it is set so expert
  /// k's logit starts strictly highest exactly for samples whose pattern
  /// matches combination k (rewarding markers of modalities outside the
  /// combination, penalizing markers of modalities inside it, with a small
  /// output bias favoring larger combinations to break subset ties). All
  /// parameters, including the prior, remain trainable.
  GatingNetwork(Index input_dim, Index hidden_dim, ParameterStore& store, Rng& init_rng,
                const std::vector<ModalityCombination>& expert_combos, const Matrix& slot_markers);

  NodeId distribution(Tape& t, NodeId fused) const;

  Index num_experts() const { return num_experts_; }
  const std::vector<std::string>& parameter_names() const { return names_; }

 private:
  Index num_experts_;
  std::vector<std::string> names_;
  Parameter* hidden_w_;
  Parameter* hidden_b_;
  Parameter* out_w_;
  Parameter* out_b_;
  Parameter* skip_w_;
};

/// One combination-keyed expert: a two-hidden-layer perceptron over the fused
/// representation with a sigmoid head, so its output lies strictly in (0, 1).
class Expert {
 public:
  Expert(const std::string& combination_key, Index input_dim, Index hidden_dim,
         ParameterStore& store, Rng& init_rng);

  NodeId predict(Tape& t, NodeId fused) const;

  const std::string& combination_key() const { return key_; }
  const std::vector<std::string>& parameter_names() const { return names_; }

 private:
  std::string key_;
  std::vector<std::string> names_;
  Parameter* l1_w_;
  Parameter* l1_b_;
  Parameter* l2_w_;
  Parameter* l2_b_;
  Parameter* head_w_;
  Parameter* head_b_;
};

/// Ordered expert list, one per combination observed in training data. The
/// ordering is fixed at construction and persisted in checkpoints.
class ExpertPool {
 public:
  ExpertPool(const std::vector<ModalityCombination>& combinations, Index input_dim,
             Index hidden_dim, ParameterStore& store, Rng& init_rng);

  Index size() const { return static_cast<Index>(experts_.size()); }
  const Expert& operator[](Index i) const { return experts_[static_cast<std::size_t>(i)]; }

  std::vector<std::string> keys() const;
  std::optional<Index> index_of(const std::string& key) const;

  std::vector<std::string> parameter_names() const;

 private:
  std::vector<Expert> experts_;
};

/// Result of routing a fused representation through the pool.
struct FusePrediction {
  NodeId prediction;    // scalar in (0, 1)
  NodeId gate;          // full softmax node, or kNoNode under uniform fusion
  RoutingDecision routing;
};

/// Weighted sum of the top-k experts' predictions. Gradient flows through the
/// selected experts and through the full softmax (selection itself is
/// piecewise-constant).
FusePrediction fuse_predict(Tape& t, NodeId fused, const GatingNetwork& gating,
                            const ExpertPool& pool, int k);

/// Uniform average of all expert outputs (the non-dynamic-gating wiring).
/// The gating network is never evaluated, so its parameters see no gradient.
FusePrediction fuse_uniform(Tape& t, NodeId fused, const ExpertPool& pool);

}  // namespace moehealth
