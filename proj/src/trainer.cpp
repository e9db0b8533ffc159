#include "moehealth/trainer.hpp"

#include <algorithm>
#include <map>
#include <thread>
#include <utility>

#include "moehealth/adamw.hpp"
#include "moehealth/errors.hpp"
#include "moehealth/metrics.hpp"
#include "moehealth/rng.hpp"

namespace moehealth {

namespace {

// Disjoint shuffle streams per purpose, mixed into the run seed.
constexpr std::uint64_t kInitStream = 0x01;
constexpr std::uint64_t kJointShuffleStream = 0x1000;
constexpr std::uint64_t kPretrainShuffleStream = 0x2000000;

std::vector<const Sample*> gather(const std::vector<Sample>& samples,
                                  const std::vector<std::size_t>& order, std::size_t begin,
                                  std::size_t end) {
  std::vector<const Sample*> batch;
  batch.reserve(end - begin);
  for (std::size_t i = begin; i < end; ++i) {
    batch.push_back(&samples[order[i]]);
  }
  return batch;
}

/// One optimization pass over `samples` in `order`, batched by config. Reports
/// the sample-weighted mean loss; accumulates usage counts when given.
real_t run_epoch(Model& model, const std::vector<Sample>& samples,
                 const std::vector<std::size_t>& order, const TrainConfig& config, real_t alpha,
                 Index fixed_expert, AdamW& optimizer, const std::vector<std::string>& updatable,
                 Vector* usage, bool* clamped) {
  const auto n = order.size();
  const auto stride = static_cast<std::size_t>(config.batch_size);
  real_t loss_sum = 0.0;
  for (std::size_t at = 0; at < n; at += stride) {
    const std::size_t stop = std::min(n, at + stride);
    const std::vector<const Sample*> batch = gather(samples, order, at, stop);
    BatchGraph g = fixed_expert >= 0 ? build_expert_loss(model, batch, fixed_expert)
                                     : build_batch_loss(model, batch, alpha);
    loss_sum += g.tape.scalar(g.loss) * static_cast<real_t>(batch.size());
    if (usage != nullptr) {
      *usage += selection_counts(g.decisions, model.pool().size());
    }
    if (clamped != nullptr) {
      for (const RoutingDecision& d : g.decisions) {
        *clamped = *clamped || d.clamped;
      }
    }
    g.tape.backward(g.loss);
    optimizer.step(model.params(), updatable);
  }
  return loss_sum / static_cast<real_t>(n);
}

EvalGroup group_metrics(std::string key, const ScoredBatch& batch) {
  EvalGroup g;
  g.key = std::move(key);
  g.n = batch.scores.size();
  g.positives = static_cast<Index>(batch.labels.sum());
  g.auroc = auroc(batch);
  g.f1 = f1(batch);
  return g;
}

nlohmann::json group_to_json(const EvalGroup& g) {
  nlohmann::json j{{"key", g.key}, {"n", g.n}, {"positives", g.positives}, {"f1", g.f1}};
  if (g.auroc) {
    j["auroc"] = *g.auroc;
  } else {
    j["auroc"] = nullptr;
  }
  return j;
}

}  // namespace

void validate_train_config(const TrainConfig& config) {
  if (config.learning_rate <= 0.0) throw ConfigError("train: learning_rate must be positive");
  if (config.weight_decay < 0.0) throw ConfigError("train: weight_decay must be non-negative");
  if (config.batch_size < 1) throw ConfigError("train: batch_size must be positive");
  if (config.max_epochs < 1) throw ConfigError("train: max_epochs must be positive");
  if (config.patience < 1) throw ConfigError("train: patience must be positive");
  if (config.alpha < 0.0) throw ConfigError("train: alpha must be non-negative");
  if (config.top_k < 1) throw ConfigError("train: top_k must be positive");
  if (config.pretrain_epochs < 0) throw ConfigError("train: pretrain_epochs must be non-negative");
  if (config.pretrain_lr_scale <= 0.0) {
    throw ConfigError("train: pretrain_lr_scale must be positive");
  }
}

EarlyStopping::EarlyStopping(int patience) : patience_(patience) {
  if (patience < 1) {
    throw ConfigError("early stopping: patience must be positive, got " + std::to_string(patience));
  }
}

bool EarlyStopping::observe(int epoch, std::optional<real_t> metric) {
  if (!metric.has_value()) {
    return false;  // undefined metric: skipped entirely
  }
  if (!best_metric_.has_value() || *metric > *best_metric_) {
    best_metric_ = metric;
    best_epoch_ = epoch;
    epochs_since_best_ = 0;
    return true;
  }
  ++epochs_since_best_;
  return false;
}

void pretrain_experts(Model& model, const std::vector<Sample>& train_split,
                      const TrainConfig& config) {
  validate_train_config(config);
  if (config.pretrain_epochs == 0) return;

  // Partition once; every sample lands in exactly one expert's subset.
  std::map<std::string, std::vector<std::size_t>> by_key;
  for (std::size_t i = 0; i < train_split.size(); ++i) {
    by_key[train_split[i].combination().key()].push_back(i);
  }

  AdamWConfig opt_config;
  opt_config.learning_rate = config.learning_rate * config.pretrain_lr_scale;
  opt_config.weight_decay = config.weight_decay;

  const ExpertPool& pool = model.pool();
  for (Index e = 0; e < pool.size(); ++e) {
    const auto it = by_key.find(pool[e].combination_key());
    if (it == by_key.end()) continue;  // pool built from another split
    const std::vector<std::size_t>& subset = it->second;

    AdamW optimizer(opt_config);  // fresh state per expert pass
    const std::vector<std::string> updatable = model.pretrain_names(e);
    for (int epoch = 1; epoch <= config.pretrain_epochs; ++epoch) {
      Rng shuffle_rng(derive_seed(config.seed, kPretrainShuffleStream +
                                                   static_cast<std::uint64_t>(e) * 1024 +
                                                   static_cast<std::uint64_t>(epoch)));
      std::vector<std::size_t> order = shuffle_rng.permutation(subset.size());
      for (std::size_t& idx : order) idx = subset[idx];
      run_epoch(model, train_split, order, config, /*alpha=*/0.0, e, optimizer, updatable,
                nullptr, nullptr);
    }
  }
}

TrainResult train(const std::vector<Sample>& train_split, const std::vector<Sample>& val_split,
                  const EncoderConfig& encoder_config, const TrainConfig& config,
                  const ValidationProbe& probe, const EpochCallback& on_epoch) {
  validate_train_config(config);
  if (train_split.empty()) throw ValueError("train: empty training split");
  if (val_split.empty()) throw ValueError("train: empty validation split");

  const std::vector<ModalityCombination> combinations = enumerate_combinations(train_split);
  ModelConfig model_config;
  model_config.encoder = encoder_config;
  model_config.top_k = config.top_k;
  model_config.ablation = config.ablation;

  TrainResult result;
  result.model = std::make_unique<Model>(model_config, combinations,
                                         derive_seed(config.seed, kInitStream));
  Model& model = *result.model;
  result.report.expert_keys = model.pool().keys();

  if (config.ablation != AblationMode::kNoSpecialization) {
    pretrain_experts(model, train_split, config);
  }

  AdamWConfig opt_config;
  opt_config.learning_rate = config.learning_rate;
  opt_config.weight_decay = config.weight_decay;
  AdamW optimizer(opt_config);
  const std::vector<std::string> updatable = model.trainable_names();

  const ValidationProbe validate =
      probe ? probe
            : ValidationProbe([](const Model& m, const std::vector<Sample>& val, int) {
                const EvaluationReport r = evaluate(m, val);
                return r.overall.auroc;
              });

  EarlyStopping stopper(config.patience);
  std::vector<Matrix> best_snapshot;
  TrainReport& report = result.report;

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    Rng shuffle_rng(
        derive_seed(config.seed, kJointShuffleStream + static_cast<std::uint64_t>(epoch)));
    const std::vector<std::size_t> order = shuffle_rng.permutation(train_split.size());

    EpochRecord record;
    record.epoch = epoch;
    record.train_usage = Vector::Zero(model.pool().size());
    record.train_loss = run_epoch(model, train_split, order, config, config.alpha,
                                  /*fixed_expert=*/-1, optimizer, updatable, &record.train_usage,
                                  &report.routing_clamped);
    record.val_auroc = validate(model, val_split, epoch);
    record.is_best = stopper.observe(epoch, record.val_auroc);
    if (record.is_best) {
      best_snapshot = model.params().snapshot_values();
    }
    report.epochs.push_back(record);
    if (on_epoch) on_epoch(record);
    report.stopped_epoch = epoch;
    if (stopper.should_stop()) {
      report.early_stopped = true;
      break;
    }
  }

  report.best_epoch = stopper.best_epoch();
  report.best_val_auroc = stopper.best_metric();
  if (report.best_epoch >= 1) {
    model.params().restore_values(best_snapshot);
  }
  return result;
}

EvaluationReport evaluate(const Model& model, const std::vector<Sample>& split, int max_threads) {
  if (split.empty()) {
    throw ValueError("evaluate: empty split");
  }
  const auto n = split.size();
  std::vector<Model::Scored> scored(n);

  const auto hw = static_cast<int>(std::thread::hardware_concurrency());
  int threads = std::clamp(max_threads, 1, std::max(1, hw));
  threads = std::min<int>(threads, static_cast<int>(n));

  auto score_range = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      scored[i] = model.score(split[i]);
    }
  };
  if (threads <= 1) {
    score_range(0, n);
  } else {
    std::vector<std::thread> workers;
    workers.reserve(static_cast<std::size_t>(threads));
    const std::size_t chunk = (n + static_cast<std::size_t>(threads) - 1) /
                              static_cast<std::size_t>(threads);
    for (int w = 0; w < threads; ++w) {
      const std::size_t begin = static_cast<std::size_t>(w) * chunk;
      const std::size_t end = std::min(n, begin + chunk);
      if (begin >= end) break;
      workers.emplace_back(score_range, begin, end);
    }
    for (std::thread& t : workers) t.join();
  }

  EvaluationReport out;
  out.expert_keys = model.pool().keys();
  out.selection_counts = Vector::Zero(model.pool().size());

  ScoredBatch all;
  all.scores = Vector(static_cast<Index>(n));
  all.labels = Vector(static_cast<Index>(n));
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < n; ++i) {
    all.scores[static_cast<Index>(i)] = scored[i].probability;
    all.labels[static_cast<Index>(i)] = static_cast<real_t>(split[i].label);
    groups[split[i].combination().key()].push_back(i);
    for (Index idx : scored[i].routing.selected) {
      out.selection_counts[idx] += 1.0;
    }
  }
  out.overall = group_metrics("all", all);

  for (const auto& [key, indices] : groups) {
    ScoredBatch batch;
    batch.scores = Vector(static_cast<Index>(indices.size()));
    batch.labels = Vector(static_cast<Index>(indices.size()));
    for (std::size_t j = 0; j < indices.size(); ++j) {
      batch.scores[static_cast<Index>(j)] = scored[indices[j]].probability;
      batch.labels[static_cast<Index>(j)] = static_cast<real_t>(split[indices[j]].label);
    }
    out.by_combination.push_back(group_metrics(key, batch));
  }
  return out;
}

nlohmann::json report_to_json(const TrainReport& report) {
  nlohmann::json epochs = nlohmann::json::array();
  for (const EpochRecord& r : report.epochs) {
    nlohmann::json e{
        {"epoch", r.epoch}, {"train_loss", r.train_loss}, {"is_best", r.is_best}};
    if (r.val_auroc) {
      e["val_auroc"] = *r.val_auroc;
    } else {
      e["val_auroc"] = nullptr;
    }
    auto usage = nlohmann::json::array();
    for (Index i = 0; i < r.train_usage.size(); ++i) usage.push_back(r.train_usage[i]);
    e["train_usage"] = std::move(usage);
    epochs.push_back(std::move(e));
  }
  nlohmann::json j{{"epochs", std::move(epochs)},
                   {"best_epoch", report.best_epoch},
                   {"stopped_epoch", report.stopped_epoch},
                   {"early_stopped", report.early_stopped},
                   {"routing_clamped", report.routing_clamped},
                   {"expert_keys", report.expert_keys}};
  if (report.best_val_auroc) {
    j["best_val_auroc"] = *report.best_val_auroc;
  } else {
    j["best_val_auroc"] = nullptr;
  }
  return j;
}

nlohmann::json evaluation_to_json(const EvaluationReport& report) {
  nlohmann::json by_combo = nlohmann::json::array();
  for (const EvalGroup& g : report.by_combination) {
    by_combo.push_back(group_to_json(g));
  }
  auto counts = nlohmann::json::array();
  for (Index i = 0; i < report.selection_counts.size(); ++i) {
    counts.push_back(report.selection_counts[i]);
  }
  return nlohmann::json{{"overall", group_to_json(report.overall)},
                        {"by_combination", std::move(by_combo)},
                        {"selection_counts", std::move(counts)},
                        {"expert_keys", report.expert_keys}};
}

}  // namespace moehealth
