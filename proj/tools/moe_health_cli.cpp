// Command-line front end: generate / train / evaluate / ablate / gradcheck.
//
// Exit codes: 0 success, 2 configuration or argument validation, 3 file I/O,
// 4 dataset/checkpoint content validation. Progress goes to stderr;
// machine-readable results go to files and stdout.

#include <cstdlib>
#include <exception>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "moehealth/checkpoint.hpp"
#include "moehealth/dataset_io.hpp"
#include "moehealth/errors.hpp"
#include "moehealth/generator.hpp"
#include "moehealth/gradcheck.hpp"
#include "moehealth/io.hpp"
#include "moehealth/model.hpp"
#include "moehealth/split.hpp"
#include "moehealth/trainer.hpp"

namespace {

using nlohmann::json;
using namespace moehealth;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitData = 4;

int env_threads() {
  const char* raw = std::getenv("MOE_HEALTH_THREADS");
  if (raw == nullptr) return 1;
  try {
    const int n = std::stoi(raw);
    if (n >= 1) return n;
  } catch (const std::exception&) {
  }
  std::cerr << "warning: ignoring invalid MOE_HEALTH_THREADS=\"" << raw << "\"\n";
  return 1;
}

json load_config_file(const std::string& path) {
  if (path.empty()) return json::object();
  json parsed;
  try {
    parsed = json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw ConfigError("config file " + path + ": " + e.what());
  }
  if (!parsed.is_object()) {
    throw ConfigError("config file " + path + " must hold a JSON object");
  }
  return parsed;
}

template <typename T>
void maybe_set(const json& block, const char* key, T& target) {
  if (!block.contains(key)) return;
  try {
    target = block.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config key \"") + key + "\": " + e.what());
  }
}

GeneratorConfig generator_from_config(const json& root) {
  GeneratorConfig g;
  if (!root.contains("generator")) return g;
  const json& c = root.at("generator");
  maybe_set(c, "n_samples", g.n_samples);
  maybe_set(c, "seed", g.seed);
  maybe_set(c, "latent_dim", g.latent_dim);
  maybe_set(c, "tokens_per_sample", g.tokens_per_sample);
  maybe_set(c, "noise_ehr", g.noise_ehr);
  maybe_set(c, "noise_text", g.noise_text);
  maybe_set(c, "noise_image", g.noise_image);
  maybe_set(c, "label_steepness", g.label_steepness);
  maybe_set(c, "label_offset", g.label_offset);
  maybe_set(c, "cross_weight", g.cross_weight);
  if (c.contains("combination_probs")) {
    try {
      g.combination_probs =
          c.at("combination_probs").get<std::map<std::string, real_t>>();
    } catch (const json::exception& e) {
      throw ConfigError(std::string("config key \"combination_probs\": ") + e.what());
    }
  }
  if (c.contains("dims")) {
    const json& d = c.at("dims");
    maybe_set(d, "static_dim", g.dims.static_dim);
    maybe_set(d, "series_dim", g.dims.series_dim);
    maybe_set(d, "series_len", g.dims.series_len);
    maybe_set(d, "vocab_size", g.dims.vocab_size);
    maybe_set(d, "image_dim", g.dims.image_dim);
  }
  return g;
}

TrainConfig train_from_config(const json& root) {
  TrainConfig t;
  if (!root.contains("train")) return t;
  const json& c = root.at("train");
  maybe_set(c, "learning_rate", t.learning_rate);
  maybe_set(c, "weight_decay", t.weight_decay);
  maybe_set(c, "batch_size", t.batch_size);
  maybe_set(c, "max_epochs", t.max_epochs);
  maybe_set(c, "patience", t.patience);
  maybe_set(c, "alpha", t.alpha);
  maybe_set(c, "top_k", t.top_k);
  maybe_set(c, "pretrain_epochs", t.pretrain_epochs);
  maybe_set(c, "pretrain_lr_scale", t.pretrain_lr_scale);
  maybe_set(c, "seed", t.seed);
  if (c.contains("ablation")) {
    t.ablation = ablation_from_string(c.at("ablation").get<std::string>());
  }
  return t;
}

EncoderConfig encoder_from_config(const json& root, const DatasetDims& dims) {
  EncoderConfig e;
  e.dims = dims;
  if (!root.contains("encoder")) return e;
  const json& c = root.at("encoder");
  maybe_set(c, "embed_dim", e.embed_dim);
  maybe_set(c, "static_embed_dim", e.static_embed_dim);
  maybe_set(c, "rnn_hidden_dim", e.rnn_hidden_dim);
  maybe_set(c, "token_embed_dim", e.token_embed_dim);
  maybe_set(c, "image_hidden_dim", e.image_hidden_dim);
  maybe_set(c, "shared_missing_embedding", e.shared_missing_embedding);
  return e;
}

SplitSpec split_from_config(const json& root) {
  SplitSpec s;
  if (!root.contains("split")) return s;
  const json& c = root.at("split");
  maybe_set(c, "train_fraction", s.train_fraction);
  maybe_set(c, "val_fraction", s.val_fraction);
  maybe_set(c, "test_fraction", s.test_fraction);
  maybe_set(c, "seed", s.seed);
  maybe_set(c, "stratify", s.stratify);
  return s;
}

json generator_meta(const GeneratorConfig& g) {
  return json{{"n_samples", g.n_samples},
              {"seed", g.seed},
              {"combination_probs", g.combination_probs},
              {"latent_dim", g.latent_dim},
              {"tokens_per_sample", g.tokens_per_sample},
              {"noise_ehr", g.noise_ehr},
              {"noise_text", g.noise_text},
              {"noise_image", g.noise_image},
              {"label_steepness", g.label_steepness},
              {"label_offset", g.label_offset},
              {"cross_weight", g.cross_weight}};
}

json train_meta(const TrainConfig& t, const SplitSpec& sp, const std::string& data_path,
                const std::string& data_digest, const Splits& splits) {
  return json{{"command", "train"},
              {"train",
               {{"learning_rate", t.learning_rate},
                {"weight_decay", t.weight_decay},
                {"batch_size", t.batch_size},
                {"max_epochs", t.max_epochs},
                {"patience", t.patience},
                {"alpha", t.alpha},
                {"top_k", t.top_k},
                {"pretrain_epochs", t.pretrain_epochs},
                {"pretrain_lr_scale", t.pretrain_lr_scale},
                {"seed", t.seed},
                {"ablation", to_string(t.ablation)}}},
              {"split",
               {{"train_fraction", sp.train_fraction},
                {"val_fraction", sp.val_fraction},
                {"test_fraction", sp.test_fraction},
                {"seed", sp.seed},
                {"stratify", sp.stratify},
                {"sizes",
                 {{"train", splits.train.size()},
                  {"val", splits.val.size()},
                  {"test", splits.test.size()}}}}},
              {"dataset", {{"path", data_path}, {"digest", data_digest}}}};
}

// --- subcommand payloads -------------------------------------------------

struct CommonFlags {
  std::string config_path;
  std::string data_path;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> ablation;
  std::optional<real_t> alpha;
  std::optional<int> topk;
  std::optional<int> epochs;
  std::optional<int> patience;
};

TrainConfig resolve_train_config(const json& config, const CommonFlags& f) {
  TrainConfig t = train_from_config(config);
  if (f.seed) t.seed = *f.seed;
  if (f.ablation) t.ablation = ablation_from_string(*f.ablation);
  if (f.alpha) t.alpha = *f.alpha;
  if (f.topk) t.top_k = *f.topk;
  if (f.epochs) t.max_epochs = *f.epochs;
  if (f.patience) t.patience = *f.patience;
  validate_train_config(t);
  return t;
}

void print_epoch_progress(const EpochRecord& r) {
  std::cerr << "epoch " << r.epoch << ": train_loss=" << r.train_loss << " val_auroc=";
  if (r.val_auroc) {
    std::cerr << *r.val_auroc;
  } else {
    std::cerr << "undefined";
  }
  if (r.is_best) std::cerr << " (best)";
  std::cerr << '\n';
}

int run_generate(const CommonFlags& f, std::optional<long> n) {
  const json config = load_config_file(f.config_path);
  GeneratorConfig gen = generator_from_config(config);
  if (f.seed) gen.seed = *f.seed;
  if (n) gen.n_samples = static_cast<Index>(*n);
  validate_generator_config(gen);

  std::cerr << "generating " << gen.n_samples << " samples (seed " << gen.seed << ")\n";
  const std::vector<Sample> samples = generate(gen);

  json meta = generator_meta(gen);
  save_dataset(f.out, gen.dims, samples, meta);

  std::map<std::string, std::size_t> counts;
  std::size_t positives = 0;
  for (const Sample& s : samples) {
    ++counts[s.combination().key()];
    positives += static_cast<std::size_t>(s.label);
  }
  json summary{{"path", f.out},
               {"digest", file_digest(f.out)},
               {"n_samples", samples.size()},
               {"base_rate", static_cast<real_t>(positives) / static_cast<real_t>(samples.size())},
               {"combination_counts", counts}};
  std::cout << summary.dump(2) << '\n';
  return kExitOk;
}

int run_train(const CommonFlags& f) {
  const json config = load_config_file(f.config_path);
  const TrainConfig tc = resolve_train_config(config, f);
  const SplitSpec sp = split_from_config(config);

  const DatasetFile data = load_dataset(f.data_path);
  const std::string digest = file_digest(f.data_path);
  const Splits splits = split(data.samples, sp);
  const EncoderConfig enc = encoder_from_config(config, data.dims);

  std::cerr << "training on " << splits.train.size() << " samples (val " << splits.val.size()
            << ", test " << splits.test.size() << "), ablation=" << to_string(tc.ablation)
            << ", seed=" << tc.seed << '\n';
  TrainResult result = train(splits.train, splits.val, enc, tc, {}, print_epoch_progress);
  if (result.report.routing_clamped) {
    std::cerr << "warning: requested top-k exceeded the expert pool size; clamped\n";
  }

  const EvaluationReport test_eval = evaluate(*result.model, splits.test, env_threads());

  const json meta = train_meta(tc, sp, f.data_path, digest, splits);
  const std::filesystem::path out_dir(f.out);
  const std::string checkpoint_path = (out_dir / "checkpoint.json").string();
  const std::string report_path = (out_dir / "train_report.json").string();
  const std::string metrics_path = (out_dir / "test_metrics.json").string();

  save_checkpoint(checkpoint_path, *result.model, meta);
  write_text_atomic(report_path,
                    json{{"meta", meta}, {"report", report_to_json(result.report)}}.dump(2) + "\n");
  write_text_atomic(metrics_path,
                    json{{"meta", meta}, {"test", evaluation_to_json(test_eval)}}.dump(2) + "\n");

  json summary{{"checkpoint", checkpoint_path},
               {"train_report", report_path},
               {"test_metrics", metrics_path},
               {"best_epoch", result.report.best_epoch},
               {"stopped_epoch", result.report.stopped_epoch},
               {"test", evaluation_to_json(test_eval)["overall"]}};
  if (result.report.best_val_auroc) {
    summary["best_val_auroc"] = *result.report.best_val_auroc;
  }
  std::cout << summary.dump(2) << '\n';
  return kExitOk;
}

int run_evaluate(const CommonFlags& f, const std::string& checkpoint_path) {
  LoadedCheckpoint loaded = load_checkpoint(checkpoint_path);
  const DatasetFile data = load_dataset(f.data_path);
  if (!(loaded.model->config().encoder.dims == data.dims)) {
    throw DataError("dataset dimensions do not match the checkpoint's encoder configuration");
  }

  std::cerr << "evaluating " << data.samples.size() << " samples\n";
  const EvaluationReport eval = evaluate(*loaded.model, data.samples, env_threads());
  const json payload{{"meta",
                      {{"command", "evaluate"},
                       {"checkpoint", checkpoint_path},
                       {"dataset", {{"path", f.data_path}, {"digest", file_digest(f.data_path)}}},
                       {"checkpoint_meta", loaded.meta}}},
                     {"evaluation", evaluation_to_json(eval)}};
  if (!f.out.empty()) {
    const std::string path =
        (std::filesystem::path(f.out) / "evaluation.json").string();
    write_text_atomic(path, payload.dump(2) + "\n");
    std::cerr << "wrote " << path << '\n';
  }
  std::cout << payload["evaluation"].dump(2) << '\n';
  return kExitOk;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& raw) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(raw);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      seeds.push_back(std::stoull(item));
    } catch (const std::exception&) {
      throw ConfigError("--seeds: cannot parse \"" + item + "\" as an unsigned integer");
    }
  }
  if (seeds.empty()) {
    throw ConfigError("--seeds: need at least one seed");
  }
  return seeds;
}

int run_ablate(const CommonFlags& f, const std::string& seeds_raw) {
  const json config = load_config_file(f.config_path);
  TrainConfig base = resolve_train_config(config, f);
  const SplitSpec sp = split_from_config(config);
  const std::vector<std::uint64_t> seeds = parse_seed_list(seeds_raw);

  const DatasetFile data = load_dataset(f.data_path);
  const std::string digest = file_digest(f.data_path);
  const Splits splits = split(data.samples, sp);
  const EncoderConfig enc = encoder_from_config(config, data.dims);

  // mode -> per-seed test AUROC, in kAllAblationModes order (full model first).
  std::map<std::string, std::vector<real_t>> auroc_by_mode;
  for (const AblationMode mode : kAllAblationModes) {
    for (const std::uint64_t seed : seeds) {
      TrainConfig tc = base;
      tc.ablation = mode;
      tc.seed = seed;
      std::cerr << "ablate: mode=" << to_string(mode) << " seed=" << seed << '\n';
      TrainResult result = train(splits.train, splits.val, enc, tc);
      const EvaluationReport eval = evaluate(*result.model, splits.test, env_threads());
      if (!eval.overall.auroc) {
        throw DataError("ablate: test AUROC undefined (single-class test split)");
      }
      auroc_by_mode[to_string(mode)].push_back(*eval.overall.auroc);
    }
  }

  auto mean = [](const std::vector<real_t>& xs) {
    real_t s = 0.0;
    for (real_t x : xs) s += x;
    return s / static_cast<real_t>(xs.size());
  };
  const real_t full_mean = mean(auroc_by_mode.at("none"));

  json rows = json::array();
  std::ostringstream table;
  table << std::fixed << std::setprecision(4);
  table << "Configuration           AUROC     dAUROC\n";
  for (const AblationMode mode : kAllAblationModes) {
    const std::string key = to_string(mode);
    const std::vector<real_t>& per_seed = auroc_by_mode.at(key);
    const real_t m = mean(per_seed);
    rows.push_back(json{{"configuration", key},
                        {"auroc_per_seed", per_seed},
                        {"auroc_mean", m},
                        {"delta_auroc_mean", m - full_mean}});
    table << std::left << std::setw(24) << key << std::setw(10) << m << std::showpos
          << (m - full_mean) << std::noshowpos << '\n';
  }

  const json payload{
      {"meta",
       {{"command", "ablate"},
        {"seeds", seeds},
        {"dataset", {{"path", f.data_path}, {"digest", digest}}},
        {"base_train",
         {{"learning_rate", base.learning_rate},
          {"batch_size", base.batch_size},
          {"max_epochs", base.max_epochs},
          {"patience", base.patience},
          {"alpha", base.alpha},
          {"top_k", base.top_k},
          {"pretrain_epochs", base.pretrain_epochs},
          {"pretrain_lr_scale", base.pretrain_lr_scale}}}}},
      {"rows", rows}};

  if (!f.out.empty()) {
    const std::string path = (std::filesystem::path(f.out) / "ablation_report.json").string();
    write_text_atomic(path, payload.dump(2) + "\n");
    std::cerr << "wrote " << path << '\n';
  }
  std::cout << table.str();
  return kExitOk;
}

int run_gradcheck(const CommonFlags& f) {
  const std::uint64_t seed = f.seed.value_or(7);
  std::cerr << "gradcheck: seed=" << seed << '\n';
  const GradCheckReport report = moehealth::run_gradcheck(seed);

  json payload = gradcheck_to_json(report);
  payload["seed"] = seed;
  if (!f.out.empty()) {
    const std::string path = (std::filesystem::path(f.out) / "gradcheck_report.json").string();
    write_text_atomic(path, payload.dump(2) + "\n");
    std::cerr << "wrote " << path << '\n';
  }
  std::cout << (report.passed ? "PASS" : "FAIL") << ": max relative error "
            << report.max_rel_error << " (tolerance " << report.tolerance << ") at "
            << report.worst_parameter << ", " << report.entries_checked << " entries, "
            << report.redraws << " redraws\n";
  // Exit 0 whenever the report was produced; pass/fail is report content.
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multimodal mixture-of-experts benchmark: synthetic data, training, ablations"};
  app.require_subcommand(1);

  CommonFlags flags;
  std::optional<long> n_flag;
  std::string checkpoint_path;
  std::string seeds_raw = "1,2,3";

  auto add_common = [&flags](CLI::App* cmd, bool with_train_flags) {
    cmd->add_option("--config", flags.config_path, "JSON config file");
    cmd->add_option("--seed", flags.seed, "seed override");
    if (with_train_flags) {
      cmd->add_option("--ablation", flags.ablation,
                      "none|no_missing_indicator|no_specialization|no_dynamic_gating|top1");
      cmd->add_option("--alpha", flags.alpha, "balance-loss weight");
      cmd->add_option("--topk", flags.topk, "experts routed per sample");
      cmd->add_option("--epochs", flags.epochs, "maximum training epochs");
      cmd->add_option("--patience", flags.patience, "early-stopping patience");
    }
  };

  CLI::App* generate = app.add_subcommand("generate", "write a synthetic dataset");
  add_common(generate, false);
  generate->add_option("--n", n_flag, "number of samples");
  generate->add_option("--out", flags.out, "output dataset path")->required();

  CLI::App* train_cmd = app.add_subcommand("train", "split, train, evaluate, checkpoint");
  add_common(train_cmd, true);
  train_cmd->add_option("--data", flags.data_path, "dataset file")->required();
  train_cmd->add_option("--out", flags.out, "output directory")->required();

  CLI::App* evaluate_cmd = app.add_subcommand("evaluate", "metrics of a checkpoint on a dataset");
  add_common(evaluate_cmd, false);
  evaluate_cmd->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
  evaluate_cmd->add_option("--data", flags.data_path, "dataset file")->required();
  evaluate_cmd->add_option("--out", flags.out, "output directory (optional)");

  CLI::App* ablate = app.add_subcommand("ablate", "train all five configurations and compare");
  add_common(ablate, true);
  ablate->add_option("--data", flags.data_path, "dataset file")->required();
  ablate->add_option("--out", flags.out, "output directory (optional)");
  ablate->add_option("--seeds", seeds_raw, "comma-separated seeds (default 1,2,3)");

  CLI::App* gradcheck_cmd =
      app.add_subcommand("gradcheck", "compare analytic gradients with finite differences");
  add_common(gradcheck_cmd, false);
  gradcheck_cmd->add_option("--out", flags.out, "output directory (optional)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (generate->parsed()) return run_generate(flags, n_flag);
    if (train_cmd->parsed()) return run_train(flags);
    if (evaluate_cmd->parsed()) return run_evaluate(flags, checkpoint_path);
    if (ablate->parsed()) return run_ablate(flags, seeds_raw);
    if (gradcheck_cmd->parsed()) return run_gradcheck(flags);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ValueError& e) {
    std::cerr << "validation error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ShapeError& e) {
    std::cerr << "shape error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return kExitIo;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return kExitConfig;
}
