#include "moehealth/model.hpp"

#include <algorithm>
#include <limits>

#include "moehealth/errors.hpp"
#include "moehealth/rng.hpp"

namespace moehealth {

const std::vector<AblationMode> kAllAblationModes = {
    AblationMode::kNone,         AblationMode::kNoMissingIndicator,
    AblationMode::kNoSpecialization, AblationMode::kNoDynamicGating,
    AblationMode::kTop1,
};

AblationMode ablation_from_string(const std::string& name) {
  if (name == "none") return AblationMode::kNone;
  if (name == "no_missing_indicator") return AblationMode::kNoMissingIndicator;
  if (name == "no_specialization") return AblationMode::kNoSpecialization;
  if (name == "no_dynamic_gating") return AblationMode::kNoDynamicGating;
  if (name == "top1") return AblationMode::kTop1;
  throw ConfigError("unknown ablation mode \"" + name +
                    "\" (expected none, no_missing_indicator, no_specialization, "
                    "no_dynamic_gating, or top1)");
}

std::string to_string(AblationMode mode) {
  switch (mode) {
    case AblationMode::kNone: return "none";
    case AblationMode::kNoMissingIndicator: return "no_missing_indicator";
    case AblationMode::kNoSpecialization: return "no_specialization";
    case AblationMode::kNoDynamicGating: return "no_dynamic_gating";
    case AblationMode::kTop1: return "top1";
  }
  throw ConfigError("unrepresentable ablation mode");
}

Model::Model(const ModelConfig& config, const std::vector<ModalityCombination>& combinations,
             std::uint64_t init_seed)
    : config_(config), combinations_(combinations) {
  if (config_.expert_hidden_dim < 1 || config_.gate_hidden_dim < 1) {
    throw ConfigError("model: hidden dimensions must be positive");
  }
  if (config_.top_k < 1) {
    throw ConfigError("model: top_k must be at least 1");
  }
  if (combinations_.empty()) {
    throw ConfigError("model: need at least one modality combination");
  }
  Rng init_rng(init_seed);
  encoders_ = std::make_unique<Encoders>(config_.encoder, store_, init_rng);
  gating_ = std::make_unique<GatingNetwork>(config_.encoder.fused_dim(), config_.gate_hidden_dim,
                                            static_cast<Index>(combinations_.size()), store_,
                                            init_rng);
  pool_ = std::make_unique<ExpertPool>(combinations_, config_.encoder.fused_dim(),
                                       config_.expert_hidden_dim, store_, init_rng);
}

FusePrediction Model::forward(Tape& t, const Sample& sample) const {
  const bool zero_missing = config_.ablation == AblationMode::kNoMissingIndicator;
  const FusedRepresentation fused = encoders_->assemble(t, sample, zero_missing);
  if (config_.ablation == AblationMode::kNoDynamicGating) {
    return fuse_uniform(t, fused.node, *pool_);
  }
  return fuse_predict(t, fused.node, *gating_, *pool_, effective_k());
}

Model::Scored Model::score(const Sample& sample) const {
  Tape t;
  const FusePrediction pred = forward(t, sample);
  return Scored{t.scalar(pred.prediction), pred.routing};
}

int Model::effective_k() const {
  return config_.ablation == AblationMode::kTop1 ? 1 : config_.top_k;
}

std::vector<std::string> Model::trainable_names() const {
  std::vector<std::string> names;
  const bool skip_missing = config_.ablation == AblationMode::kNoMissingIndicator;
  for (const std::string& name : encoders_->parameter_names()) {
    if (skip_missing && name.rfind("missing.", 0) == 0) continue;
    names.push_back(name);
  }
  if (config_.ablation != AblationMode::kNoDynamicGating) {
    const auto& gate_names = gating_->parameter_names();
    names.insert(names.end(), gate_names.begin(), gate_names.end());
  }
  const auto pool_names = pool_->parameter_names();
  names.insert(names.end(), pool_names.begin(), pool_names.end());
  return names;
}

std::vector<std::string> Model::pretrain_names(Index expert_index) const {
  if (expert_index < 0 || expert_index >= pool_->size()) {
    throw ValueError("pretrain_names: expert index " + std::to_string(expert_index) +
                     " outside pool of size " + std::to_string(pool_->size()));
  }
  std::vector<std::string> names;
  // Missingness embeddings stay frozen through every pretraining pass (not
  // just under the zero-padding ablation): within one expert's pass they act
  // as constant inputs to every sample, so each pass would drag the shared
  // embeddings toward that expert alone and invalidate the functions the
  // earlier experts just learned. They train in the joint phase, where
  // batches mix all patterns.
  for (const std::string& name : encoders_->parameter_names()) {
    if (name.rfind("missing.", 0) == 0) continue;
    names.push_back(name);
  }
  const auto& expert_names = (*pool_)[expert_index].parameter_names();
  names.insert(names.end(), expert_names.begin(), expert_names.end());
  return names;
}

namespace {

/// Gap between the weakest selected and strongest unselected gate value;
/// infinity when nothing was left out.
real_t selection_gap(const GateDistribution& gate, const RoutingDecision& decision) {
  if (static_cast<Index>(decision.selected.size()) >= gate.size()) {
    return std::numeric_limits<real_t>::infinity();
  }
  real_t weakest_selected = std::numeric_limits<real_t>::infinity();
  std::vector<bool> taken(static_cast<std::size_t>(gate.size()), false);
  for (Index idx : decision.selected) {
    taken[static_cast<std::size_t>(idx)] = true;
    weakest_selected = std::min(weakest_selected, gate[idx]);
  }
  real_t strongest_rest = -std::numeric_limits<real_t>::infinity();
  for (Index i = 0; i < gate.size(); ++i) {
    if (!taken[static_cast<std::size_t>(i)]) strongest_rest = std::max(strongest_rest, gate[i]);
  }
  return weakest_selected - strongest_rest;
}

Vector batch_labels(const std::vector<const Sample*>& batch) {
  Vector labels(static_cast<Index>(batch.size()));
  for (std::size_t i = 0; i < batch.size(); ++i) {
    labels[static_cast<Index>(i)] = static_cast<real_t>(batch[i]->label);
  }
  return labels;
}

}  // namespace

BatchGraph build_batch_loss(const Model& model, const std::vector<const Sample*>& batch,
                            real_t alpha) {
  if (batch.empty()) {
    throw ValueError("build_batch_loss: empty batch");
  }
  BatchGraph g;
  g.min_topk_gap = std::numeric_limits<real_t>::infinity();

  std::vector<NodeId> predictions;
  std::vector<NodeId> gates;
  predictions.reserve(batch.size());
  gates.reserve(batch.size());
  for (const Sample* s : batch) {
    const FusePrediction pred = model.forward(g.tape, *s);
    predictions.push_back(pred.prediction);
    g.decisions.push_back(pred.routing);
    if (pred.gate != kNoNode) {
      gates.push_back(pred.gate);
      g.min_topk_gap = std::min(
          g.min_topk_gap, selection_gap(g.tape.value(pred.gate).col(0), pred.routing));
    }
  }

  g.task_loss = bce(g.tape, predictions, batch_labels(batch));
  if (!gates.empty() && alpha > 0.0) {
    const Vector f = selection_counts(g.decisions, model.pool().size());
    const NodeId p = mean_gate(g.tape, gates);
    g.balance_loss = balance_penalty(g.tape, p, f, alpha);
    g.loss = add(g.tape, g.task_loss, g.balance_loss);
  } else {
    g.loss = g.task_loss;
  }
  return g;
}

BatchGraph build_expert_loss(const Model& model, const std::vector<const Sample*>& batch,
                             Index expert_index) {
  if (batch.empty()) {
    throw ValueError("build_expert_loss: empty batch");
  }
  if (expert_index < 0 || expert_index >= model.pool().size()) {
    throw ValueError("build_expert_loss: expert index out of range");
  }
  const bool zero_missing = model.config().ablation == AblationMode::kNoMissingIndicator;

  BatchGraph g;
  g.min_topk_gap = std::numeric_limits<real_t>::infinity();
  std::vector<NodeId> predictions;
  predictions.reserve(batch.size());
  for (const Sample* s : batch) {
    const FusedRepresentation fused = model.encoders().assemble(g.tape, *s, zero_missing);
    predictions.push_back(model.pool()[expert_index].predict(g.tape, fused.node));
  }
  g.task_loss = bce(g.tape, predictions, batch_labels(batch));
  g.loss = g.task_loss;
  return g;
}

}  // namespace moehealth
