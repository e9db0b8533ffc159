#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "moehealth/encoders.hpp"
#include "moehealth/losses.hpp"
#include "moehealth/moe.hpp"
#include "moehealth/parameter.hpp"
#include "moehealth/sample.hpp"
#include "moehealth/tape.hpp"

namespace moehealth {

/// Controlled architecture degradations. Each mode changes exactly one thing
/// relative to the full model:
///   no_missing_indicator — absent slots are zero vectors, not learned embeddings
///   no_specialization    — combination-specific pretraining is skipped
///   no_dynamic_gating    — uniform average over all experts, gate unused
///   top1                 — route to the single highest-gated expert
enum class AblationMode {
  kNone,
  kNoMissingIndicator,
  kNoSpecialization,
  kNoDynamicGating,
  kTop1,
};

AblationMode ablation_from_string(const std::string& name);
std::string to_string(AblationMode mode);

/// The five recognized modes in canonical order (full model first).
extern const std::vector<AblationMode> kAllAblationModes;

struct ModelConfig {
  EncoderConfig encoder;
  Index expert_hidden_dim = 64;
  Index gate_hidden_dim = 64;
  int top_k = 2;
  AblationMode ablation = AblationMode::kNone;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// The complete network: encoders + missingness embeddings + gating + expert
/// pool, owning all parameters. Forward passes honor the configured ablation.
class Model {
 public:
  Model(const ModelConfig& config, const std::vector<ModalityCombination>& combinations,
        std::uint64_t init_seed);

  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  /// Records the sample's full forward pass on `t`.
  FusePrediction forward(Tape& t, const Sample& sample) const;

  /// Frozen-parameter prediction on a throwaway tape. Safe to call from
  /// multiple threads as long as nothing mutates parameters concurrently.
  struct Scored {
    real_t probability;
    RoutingDecision routing;
  };
  Scored score(const Sample& sample) const;

  /// k actually used for routing: 1 under top1, otherwise config.top_k.
  int effective_k() const;

  /// Names the optimizer may update: everything, minus the missingness
  /// embeddings under no_missing_indicator and minus the gate under
  /// no_dynamic_gating (neither participates in those forward graphs, and
  /// weight decay must not silently move unused parameters).
  std::vector<std::string> trainable_names() const;

  /// Names updated during one expert's pretraining pass: the shared encoder
  /// stack plus that expert. Missingness embeddings are always excluded —
  /// within a single-pattern pass they are constant inputs, so updating them
  /// would let each pass drag the shared embeddings toward one expert and
  /// invalidate the previously pretrained ones. They train jointly instead.
  std::vector<std::string> pretrain_names(Index expert_index) const;

  const ModelConfig& config() const { return config_; }
  const std::vector<ModalityCombination>& combinations() const { return combinations_; }
  ParameterStore& params() { return store_; }
  const ParameterStore& params() const { return store_; }
  const Encoders& encoders() const { return *encoders_; }
  const GatingNetwork& gating() const { return *gating_; }
  const ExpertPool& pool() const { return *pool_; }

 private:
  ModelConfig config_;
  std::vector<ModalityCombination> combinations_;
  ParameterStore store_;
  std::unique_ptr<Encoders> encoders_;
  std::unique_ptr<GatingNetwork> gating_;
  std::unique_ptr<ExpertPool> pool_;
};

/// One mini-batch's recorded loss graph plus everything the trainer needs to
/// log usage and the gradcheck needs to reject boundary instances.
struct BatchGraph {
  Tape tape;
  NodeId loss = kNoNode;          // composite (or plain BCE when no balance term)
  NodeId task_loss = kNoNode;     // BCE component
  NodeId balance_loss = kNoNode;  // kNoNode when gating is off or alpha == 0
  std::vector<RoutingDecision> decisions;
  real_t min_topk_gap = 0.0;  // smallest gate gap across the selection boundaries
};

/// Builds the composite-loss graph for a batch: per-sample forward passes,
/// mean BCE, and (when the gate is active and alpha > 0) the CV balance
/// penalty over the batch's gate distributions.
BatchGraph build_batch_loss(const Model& model, const std::vector<const Sample*>& batch,
                            real_t alpha);

/// BCE-only graph routed through a single fixed expert; the pretraining
/// objective (no gating, no balance term).
BatchGraph build_expert_loss(const Model& model, const std::vector<const Sample*>& batch,
                             Index expert_index);

}  // namespace moehealth
