#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "moehealth/adamw.hpp"
#include "moehealth/checkpoint.hpp"
#include "moehealth/errors.hpp"
#include "moehealth/generator.hpp"
#include "moehealth/io.hpp"
#include "moehealth/losses.hpp"
#include "moehealth/split.hpp"
#include "moehealth/trainer.hpp"

using namespace moehealth;

namespace {

// Small data and model so a full train() call stays well under a second.
GeneratorConfig tiny_data_config(Index n = 300) {
  GeneratorConfig g;
  g.n_samples = n;
  g.seed = 7;
  g.dims.static_dim = 4;
  g.dims.series_dim = 3;
  g.dims.series_len = 6;
  g.dims.vocab_size = 32;
  g.dims.image_dim = 8;
  g.tokens_per_sample = 6;
  return g;
}

EncoderConfig tiny_encoder(const DatasetDims& dims) {
  EncoderConfig e;
  e.dims = dims;
  e.embed_dim = 8;
  e.static_embed_dim = 4;
  e.rnn_hidden_dim = 4;
  e.token_embed_dim = 4;
  e.image_hidden_dim = 5;
  return e;
}

ModelConfig tiny_model_config(const DatasetDims& dims) {
  ModelConfig m;
  m.encoder = tiny_encoder(dims);
  m.expert_hidden_dim = 6;
  m.gate_hidden_dim = 6;
  return m;
}

TrainConfig quick_train(int epochs = 3) {
  TrainConfig t;
  t.max_epochs = epochs;
  t.pretrain_epochs = 1;
  t.batch_size = 32;
  t.learning_rate = 3e-3;
  return t;
}

struct TinySplits {
  explicit TinySplits(Index n = 300) {
    const GeneratorConfig g = tiny_data_config(n);
    samples = generate(g);
    dims = g.dims;
    SplitSpec spec;
    splits = split(samples, spec);
  }
  std::vector<Sample> samples;
  DatasetDims dims;
  Splits splits;
};

struct TempDir {
  TempDir() {
    path = std::filesystem::temp_directory_path() /
           ("moehealth-trainer-" + std::to_string(::getpid()) + "-" +
            std::to_string(counter++));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
  std::filesystem::path path;
  static int counter;
};

int TempDir::counter = 0;

// Validation probe that replays a fixed metric sequence, ignoring the model.
ValidationProbe scripted(std::vector<std::optional<real_t>> sequence) {
  return [sequence](const Model&, const std::vector<Sample>&, int epoch) {
    return sequence.at(static_cast<std::size_t>(epoch - 1));
  };
}

}  // namespace

TEST_CASE("train configuration is validated") {
  TrainConfig t;
  t.patience = 0;
  CHECK_THROWS_AS(validate_train_config(t), ConfigError);
  t = TrainConfig{};
  t.top_k = 0;
  CHECK_THROWS_AS(validate_train_config(t), ConfigError);
  t = TrainConfig{};
  t.batch_size = 0;
  CHECK_THROWS_AS(validate_train_config(t), ConfigError);
  t = TrainConfig{};
  t.alpha = -0.5;
  CHECK_THROWS_AS(validate_train_config(t), ConfigError);
  CHECK_NOTHROW(validate_train_config(TrainConfig{}));
}

TEST_CASE("early stopping keeps the first best on ties and stops after patience") {
  EarlyStopping stopper(2);
  CHECK(stopper.observe(1, 0.6));
  CHECK(!stopper.observe(2, 0.6));  // tie is not an improvement
  CHECK(stopper.best_epoch() == 1);
  CHECK(!stopper.should_stop());
  CHECK(!stopper.observe(3, 0.55));
  CHECK(stopper.should_stop());
}

TEST_CASE("the documented metric trace stops after the fourth epoch keeping the second") {
  // Metrics 0.6, 0.7, 0.65, 0.64 with patience 2: epochs 3 and 4 fail to
  // improve on 0.7, so training halts after epoch 4 with epoch 2 best.
  EarlyStopping stopper(2);
  stopper.observe(1, 0.6);
  stopper.observe(2, 0.7);
  stopper.observe(3, 0.65);
  CHECK(!stopper.should_stop());
  stopper.observe(4, 0.64);
  CHECK(stopper.should_stop());
  CHECK(stopper.best_epoch() == 2);
  CHECK(*stopper.best_metric() == doctest::Approx(0.7));
}

TEST_CASE("epochs with an undefined metric neither improve nor consume patience") {
  EarlyStopping stopper(1);
  stopper.observe(1, 0.6);
  stopper.observe(2, std::nullopt);
  stopper.observe(3, std::nullopt);
  CHECK(!stopper.should_stop());
  CHECK(stopper.best_epoch() == 1);
  stopper.observe(4, 0.5);
  CHECK(stopper.should_stop());
}

TEST_CASE("a patience of one stops as soon as an epoch fails to improve") {
  TinySplits data;
  TrainConfig tc = quick_train(10);
  tc.patience = 1;
  const TrainResult r =
      train(data.splits.train, data.splits.val, tiny_encoder(data.dims), tc,
            scripted({0.6, 0.5, 0.9, 0.9, 0.9, 0.9, 0.9, 0.9, 0.9, 0.9}));
  CHECK(r.report.stopped_epoch == 2);
  CHECK(r.report.early_stopped);
  CHECK(r.report.best_epoch == 1);
  CHECK(r.report.epochs.size() == 2);
}

TEST_CASE("the full scripted trace is reproduced end to end by train()") {
  TinySplits data;
  TrainConfig tc = quick_train(50);
  tc.patience = 2;
  const TrainResult r =
      train(data.splits.train, data.splits.val, tiny_encoder(data.dims), tc,
            scripted({0.6, 0.7, 0.65, 0.64, 0.9, 0.9, 0.9, 0.9, 0.9, 0.9,
                      0.9,  0.9, 0.9,  0.9,  0.9, 0.9, 0.9, 0.9, 0.9, 0.9,
                      0.9,  0.9, 0.9,  0.9,  0.9, 0.9, 0.9, 0.9, 0.9, 0.9,
                      0.9,  0.9, 0.9,  0.9,  0.9, 0.9, 0.9, 0.9, 0.9, 0.9,
                      0.9,  0.9, 0.9,  0.9,  0.9, 0.9, 0.9, 0.9, 0.9, 0.9}));
  CHECK(r.report.stopped_epoch == 4);
  CHECK(r.report.best_epoch == 2);
  CHECK(r.report.early_stopped);
  CHECK(*r.report.best_val_auroc == doctest::Approx(0.7));
  REQUIRE(r.report.epochs.size() == 4);
  CHECK(r.report.epochs[1].is_best);
  CHECK(!r.report.epochs[3].is_best);
}

TEST_CASE("exhausting max epochs without a patience trip is not an early stop") {
  TinySplits data;
  TrainConfig tc = quick_train(3);
  const TrainResult r = train(data.splits.train, data.splits.val,
                              tiny_encoder(data.dims), tc, scripted({0.5, 0.6, 0.7}));
  CHECK(r.report.stopped_epoch == 3);
  CHECK(!r.report.early_stopped);
  CHECK(r.report.best_epoch == 3);
}

TEST_CASE("the returned model carries the best epoch's parameters, not the last") {
  TinySplits data;
  TrainConfig tc = quick_train(4);
  tc.patience = 10;

  // Capture each epoch's own snapshot through the callback.
  std::vector<std::vector<Matrix>> per_epoch;
  const TrainResult r = train(
      data.splits.train, data.splits.val, tiny_encoder(data.dims), tc,
      scripted({0.6, 0.9, 0.7, 0.65}), [&per_epoch](const EpochRecord&) {});
  // best is epoch 2; rerun with an observer that snapshots at epoch 2
  // is unnecessary: instead verify through scores. Train a twin run whose
  // probe makes the LAST epoch best; identical data and seed, so parameter
  // trajectories match epoch for epoch.
  const TrainResult last_best =
      train(data.splits.train, data.splits.val, tiny_encoder(data.dims), tc,
            scripted({0.6, 0.65, 0.7, 0.9}));

  CHECK(r.report.best_epoch == 2);
  CHECK(last_best.report.best_epoch == 4);

  // Same trajectory, different restored epoch: the two returned models must
  // disagree somewhere on the validation set.
  bool differs = false;
  for (const Sample& s : data.splits.val) {
    if (std::abs(r.model->score(s).probability - last_best.model->score(s).probability) > 1e-12) {
      differs = true;
      break;
    }
  }
  CHECK(differs);
}

TEST_CASE("pretraining lowers each expert's own-subset task loss") {
  TinySplits data(400);
  const auto combos = enumerate_combinations(data.splits.train);
  Model model(tiny_model_config(data.dims), combos, 11);

  TrainConfig tc = quick_train();
  tc.pretrain_epochs = 4;

  auto subset_loss = [&](Index expert) {
    std::vector<const Sample*> subset;
    for (const Sample& s : data.splits.train) {
      if (s.combination().key() == model.pool()[expert].combination_key()) {
        subset.push_back(&s);
      }
    }
    BatchGraph g = build_expert_loss(model, subset, expert);
    return g.tape.scalar(g.loss);
  };

  std::vector<real_t> before;
  for (Index e = 0; e < model.pool().size(); ++e) before.push_back(subset_loss(e));

  pretrain_experts(model, data.splits.train, tc);

  for (Index e = 0; e < model.pool().size(); ++e) {
    CHECK(subset_loss(e) < before[static_cast<std::size_t>(e)]);
  }
}

TEST_CASE("pretraining never touches the gating parameters") {
  TinySplits data;
  const auto combos = enumerate_combinations(data.splits.train);
  Model model(tiny_model_config(data.dims), combos, 13);

  const Matrix gate_w = model.params().at("moe.gate.hidden.w").values;
  const Matrix gate_out = model.params().at("moe.gate.out.w").values;

  pretrain_experts(model, data.splits.train, quick_train());

  CHECK(model.params().at("moe.gate.hidden.w").values == gate_w);
  CHECK(model.params().at("moe.gate.out.w").values == gate_out);
}

TEST_CASE("zero pretraining epochs is the identity on all parameters") {
  TinySplits data;
  const auto combos = enumerate_combinations(data.splits.train);
  Model model(tiny_model_config(data.dims), combos, 17);

  const auto snapshot = model.params().snapshot_values();
  TrainConfig tc = quick_train();
  tc.pretrain_epochs = 0;
  pretrain_experts(model, data.splits.train, tc);

  const auto after = model.params().snapshot_values();
  for (std::size_t i = 0; i < snapshot.size(); ++i) {
    CHECK(snapshot[i] == after[i]);
  }
}

TEST_CASE("identical seeds give bit-identical reports and final parameters") {
  TinySplits data;
  const TrainConfig tc = quick_train(3);
  const TrainResult a = train(data.splits.train, data.splits.val, tiny_encoder(data.dims), tc);
  const TrainResult b = train(data.splits.train, data.splits.val, tiny_encoder(data.dims), tc);

  CHECK(report_to_json(a.report) == report_to_json(b.report));
  const auto pa = a.model->params().snapshot_values();
  const auto pb = b.model->params().snapshot_values();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    REQUIRE(pa[i] == pb[i]);
  }

  TrainConfig other = tc;
  other.seed = tc.seed + 1;
  const TrainResult c = train(data.splits.train, data.splits.val, tiny_encoder(data.dims), other);
  CHECK(report_to_json(a.report) != report_to_json(c.report));
}

TEST_CASE("ablation wiring: static gating leaves gate parameters at initialization") {
  TinySplits data;
  TrainConfig tc = quick_train(2);
  tc.ablation = AblationMode::kNoDynamicGating;
  const TrainResult r = train(data.splits.train, data.splits.val, tiny_encoder(data.dims), tc);

  // A twin model built from the same init seed shares the gate init values.
  Model twin(r.model->config(), r.model->combinations(),
             derive_seed(tc.seed, 0x01));
  CHECK(r.model->params().at("moe.gate.hidden.w").values ==
        twin.params().at("moe.gate.hidden.w").values);
  CHECK(r.model->params().at("moe.gate.out.b").values ==
        twin.params().at("moe.gate.out.b").values);
  // While trained parameters moved.
  CHECK(r.model->params().at("moe.expert.E.l1.w").values !=
        twin.params().at("moe.expert.E.l1.w").values);
}

TEST_CASE("ablation wiring: zero-padded missingness keeps embeddings frozen") {
  TinySplits data;
  TrainConfig tc = quick_train(2);
  tc.ablation = AblationMode::kNoMissingIndicator;
  const TrainResult r = train(data.splits.train, data.splits.val, tiny_encoder(data.dims), tc);

  Model twin(r.model->config(), r.model->combinations(), derive_seed(tc.seed, 0x01));
  for (const char* name : {"missing.EHR", "missing.TEXT", "missing.IMAGE"}) {
    CHECK(r.model->params().at(name).values == twin.params().at(name).values);
  }
}

TEST_CASE("ablation wiring: single-expert routing uses exactly one expert per sample") {
  TinySplits data;
  TrainConfig tc = quick_train(1);
  tc.ablation = AblationMode::kTop1;
  const TrainResult r = train(data.splits.train, data.splits.val, tiny_encoder(data.dims), tc);
  CHECK(r.model->effective_k() == 1);
  const Model::Scored s = r.model->score(data.splits.test.front());
  CHECK(s.routing.selected.size() == 1);
  CHECK(s.routing.weights[0] == 1.0);
}

TEST_CASE("trainable names honor the ablation exclusions") {
  TinySplits data;
  const auto combos = enumerate_combinations(data.samples);

  ModelConfig full = tiny_model_config(data.dims);
  Model m1(full, combos, 1);
  const auto all_names = m1.trainable_names();
  CHECK(std::find(all_names.begin(), all_names.end(), "missing.TEXT") != all_names.end());
  CHECK(std::find(all_names.begin(), all_names.end(), "moe.gate.out.w") != all_names.end());

  ModelConfig no_missing = full;
  no_missing.ablation = AblationMode::kNoMissingIndicator;
  Model m2(no_missing, combos, 1);
  for (const std::string& n : m2.trainable_names()) {
    CHECK(n.rfind("missing.", 0) != 0);
  }

  ModelConfig no_gate = full;
  no_gate.ablation = AblationMode::kNoDynamicGating;
  Model m3(no_gate, combos, 1);
  for (const std::string& n : m3.trainable_names()) {
    CHECK(n.rfind("moe.gate.", 0) != 0);
  }
}

TEST_CASE("evaluation groups partition the split and cover every pattern") {
  TinySplits data;
  const TrainResult r = train(data.splits.train, data.splits.val,
                              tiny_encoder(data.dims), quick_train(1));
  const EvaluationReport eval = evaluate(*r.model, data.splits.test);

  CHECK(eval.overall.key == "all");
  CHECK(eval.overall.n == static_cast<Index>(data.splits.test.size()));

  Index total = 0;
  std::set<std::string> seen;
  for (const EvalGroup& g : eval.by_combination) {
    total += g.n;
    seen.insert(g.key);
  }
  CHECK(total == eval.overall.n);

  std::set<std::string> expected;
  for (const Sample& s : data.splits.test) expected.insert(s.combination().key());
  CHECK(seen == expected);

  // Selection counts cover the whole split: with top-2 routing over >= 2
  // experts, every sample contributes exactly k selections.
  CHECK(eval.selection_counts.sum() ==
        doctest::Approx(2.0 * static_cast<real_t>(data.splits.test.size())));
}

TEST_CASE("evaluation is idempotent and thread-count invariant") {
  TinySplits data;
  const TrainResult r = train(data.splits.train, data.splits.val,
                              tiny_encoder(data.dims), quick_train(1));
  const EvaluationReport a = evaluate(*r.model, data.splits.test, 1);
  const EvaluationReport b = evaluate(*r.model, data.splits.test, 1);
  const EvaluationReport c = evaluate(*r.model, data.splits.test, 7);

  CHECK(evaluation_to_json(a) == evaluation_to_json(b));
  CHECK(evaluation_to_json(a) == evaluation_to_json(c));
  CHECK_THROWS_AS(evaluate(*r.model, {}), ValueError);
}

TEST_CASE("a constant-output model evaluates to chance-level ranking") {
  TinySplits data;
  const auto combos = enumerate_combinations(data.samples);
  // k = 1 so the routing weight is exactly 1.0 and predictions tie bitwise;
  // with k = 2 the renormalized weights can sum to 1 +/- 1 ulp, which would
  // leak rank noise into what must be an all-ties AUROC.
  ModelConfig mc = tiny_model_config(data.dims);
  mc.top_k = 1;
  Model model(mc, combos, 23);
  // Zero every expert head: every prediction becomes sigmoid(0) = 0.5.
  for (const std::string& key : model.pool().keys()) {
    model.params().at("moe.expert." + key + ".head.w").values.setZero();
    model.params().at("moe.expert." + key + ".head.b").values.setZero();
  }
  const EvaluationReport eval = evaluate(model, data.splits.test);
  REQUIRE(eval.overall.auroc.has_value());
  CHECK(*eval.overall.auroc == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("checkpoints round-trip bit-exactly and score identically") {
  TempDir dir;
  TinySplits data;
  const TrainResult r = train(data.splits.train, data.splits.val,
                              tiny_encoder(data.dims), quick_train(2));
  const std::string path = dir.file("model.json");
  save_checkpoint(path, *r.model, {{"origin", "trainer-test"}});

  const LoadedCheckpoint loaded = load_checkpoint(path);
  CHECK(loaded.meta.at("origin") == "trainer-test");
  CHECK(loaded.model->config() == r.model->config());

  const auto pa = r.model->params().snapshot_values();
  const auto pb = loaded.model->params().snapshot_values();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    REQUIRE(pa[i] == pb[i]);
  }

  for (const Sample& s : data.splits.test) {
    REQUIRE(r.model->score(s).probability == loaded.model->score(s).probability);
  }

  // Saving the reloaded model reproduces the file byte for byte.
  const std::string again = dir.file("model2.json");
  save_checkpoint(again, *loaded.model, {{"origin", "trainer-test"}});
  CHECK(read_text(path) == read_text(again));
}

TEST_CASE("checkpoint loading validates structure") {
  TempDir dir;
  TinySplits data;
  const auto combos = enumerate_combinations(data.samples);
  Model model(tiny_model_config(data.dims), combos, 29);
  const std::string path = dir.file("model.json");
  save_checkpoint(path, model, {});

  CHECK_THROWS_AS(load_checkpoint(dir.file("absent.json")), IoError);

  nlohmann::json j = nlohmann::json::parse(read_text(path));
  j["format"] = "other";
  write_text_atomic(dir.file("badformat.json"), j.dump());
  CHECK_THROWS_AS(load_checkpoint(dir.file("badformat.json")), DataError);

  j = nlohmann::json::parse(read_text(path));
  j["parameters"].erase(j["parameters"].begin());
  write_text_atomic(dir.file("missingparam.json"), j.dump());
  CHECK_THROWS_AS(load_checkpoint(dir.file("missingparam.json")), DataError);

  j = nlohmann::json::parse(read_text(path));
  j["parameters"]["moe.gate.out.b"]["values"].push_back(0.0);
  write_text_atomic(dir.file("badshape.json"), j.dump());
  CHECK_THROWS_AS(load_checkpoint(dir.file("badshape.json")), DataError);
}

TEST_CASE("the balance term steers usage away from collapse on a skewed batch") {
  // Direct check of the training-side coupling: a single gradient step under
  // a strong balance weight must raise the gate mass of underused experts.
  TinySplits data;
  const auto combos = enumerate_combinations(data.splits.train);
  Model model(tiny_model_config(data.dims), combos, 31);

  std::vector<const Sample*> batch;
  for (std::size_t i = 0; i < 16 && i < data.splits.train.size(); ++i) {
    batch.push_back(&data.splits.train[i]);
  }

  BatchGraph g = build_batch_loss(model, batch, 10.0);
  REQUIRE(g.balance_loss != kNoNode);
  const real_t balance_before = g.tape.scalar(g.balance_loss);

  AdamWConfig oc;
  oc.learning_rate = 5e-3;
  oc.weight_decay = 0.0;
  AdamW opt(oc);
  for (int step = 0; step < 20; ++step) {
    BatchGraph gg = build_batch_loss(model, batch, 10.0);
    gg.tape.backward(gg.loss);
    opt.step(model.params(), model.trainable_names());
  }

  BatchGraph after = build_batch_loss(model, batch, 10.0);
  CHECK(after.tape.scalar(after.balance_loss) < balance_before);
}

TEST_CASE("report serialization reflects undefined metrics as null") {
  TrainReport r;
  EpochRecord e;
  e.epoch = 1;
  e.train_loss = 0.5;
  e.val_auroc = std::nullopt;
  r.epochs.push_back(e);
  r.best_epoch = 0;
  const nlohmann::json j = report_to_json(r);
  CHECK(j.at("epochs").at(0).at("val_auroc").is_null());
  CHECK(j.at("best_val_auroc").is_null());
}
