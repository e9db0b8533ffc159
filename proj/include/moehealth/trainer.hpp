#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "moehealth/model.hpp"
#include "moehealth/sample.hpp"
#include "moehealth/types.hpp"

namespace moehealth {

struct TrainConfig {
  real_t learning_rate = 1e-4;
  real_t weight_decay = 0.01;
  Index batch_size = 32;
  int max_epochs = 50;
  int patience = 5;
  real_t alpha = 0.01;  // balance-loss weight
  int top_k = 2;
  int pretrain_epochs = 5;
  /// Pretraining learning rate = learning_rate * pretrain_lr_scale. The
  /// warm-up phase starts from fresh parameters on clean per-pattern
  /// subsets, where a hotter step size is safe; at the joint-phase rate a
  /// handful of epochs barely moves an expert and the specialization head
  /// start dissolves into noise.
  real_t pretrain_lr_scale = 10.0;
  std::uint64_t seed = 7;
  AblationMode ablation = AblationMode::kNone;
};

void validate_train_config(const TrainConfig& config);

/// Tracks the best validation metric and the epochs elapsed since it.
/// Epochs with an undefined metric are skipped: they neither improve the
/// best nor consume patience.
class EarlyStopping {
 public:
  explicit EarlyStopping(int patience);

  /// Returns true when this epoch sets a new best (strict improvement;
  /// ties keep the earlier epoch).
  bool observe(int epoch, std::optional<real_t> metric);

  bool should_stop() const { return epochs_since_best_ >= patience_; }
  int best_epoch() const { return best_epoch_; }
  std::optional<real_t> best_metric() const { return best_metric_; }

 private:
  int patience_;
  int best_epoch_ = 0;
  std::optional<real_t> best_metric_;
  int epochs_since_best_ = 0;
};

struct EpochRecord {
  int epoch = 0;  // 1-based
  real_t train_loss = 0.0;
  std::optional<real_t> val_auroc;
  Vector train_usage;  // expert-selection counts over the epoch
  bool is_best = false;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;  // 0 when no epoch produced a defined validation AUROC
  std::optional<real_t> best_val_auroc;
  int stopped_epoch = 0;
  bool early_stopped = false;
  bool routing_clamped = false;  // k exceeded the pool size at least once
  std::vector<std::string> expert_keys;
};

struct EvalGroup {
  std::string key;  // "all" or a combination key
  Index n = 0;
  Index positives = 0;
  std::optional<real_t> auroc;
  real_t f1 = 0.0;
};

struct EvaluationReport {
  EvalGroup overall;
  std::vector<EvalGroup> by_combination;  // sorted by key; sizes sum to overall.n
  Vector selection_counts;                // per expert over the split
  std::vector<std::string> expert_keys;
};

/// Replaces the per-epoch validation metric; tests inject fixed sequences to
/// pin the early-stopping contract.
using ValidationProbe =
    std::function<std::optional<real_t>(const Model&, const std::vector<Sample>& val, int epoch)>;

/// Per-epoch observer for progress output.
using EpochCallback = std::function<void(const EpochRecord&)>;

struct TrainResult {
  std::unique_ptr<Model> model;  // best-epoch parameters restored
  TrainReport report;
};

/// Combination-specific pretraining: for each expert in canonical order, runs
/// BCE-only epochs over exactly the samples matching its combination,
/// updating that expert plus the shared encoders (fresh optimizer per
/// expert). No gating, no balance term.
void pretrain_experts(Model& model, const std::vector<Sample>& train_split,
                      const TrainConfig& config);

/// Full pipeline: enumerate combinations, build the model, optionally
/// pretrain, then jointly minimize BCE + balance with early stopping on
/// validation AUROC. The returned model carries the best epoch's parameters.
TrainResult train(const std::vector<Sample>& train_split, const std::vector<Sample>& val_split,
                  const EncoderConfig& encoder_config, const TrainConfig& config,
                  const ValidationProbe& probe = {}, const EpochCallback& on_epoch = {});

/// Frozen-model metrics on a split: overall and per availability pattern.
/// Scoring fans out over `max_threads` (results are written by index, so the
/// thread count never changes the output).
EvaluationReport evaluate(const Model& model, const std::vector<Sample>& split,
                          int max_threads = 1);

nlohmann::json report_to_json(const TrainReport& report);
nlohmann::json evaluation_to_json(const EvaluationReport& report);

}  // namespace moehealth
