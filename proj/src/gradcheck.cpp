#include "moehealth/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "moehealth/errors.hpp"
#include "moehealth/generator.hpp"
#include "moehealth/model.hpp"
#include "moehealth/rng.hpp"

namespace moehealth {
namespace {

constexpr real_t kStep = 1e-5;       // central-difference half-step
constexpr real_t kTolerance = 1e-4;  // max allowed relative error
constexpr real_t kAlpha = 0.01;
constexpr int kBatch = 8;
constexpr int kMaxRedraws = 40;

/// Margin below which an instance is re-drawn. Covers the documented 1e-6
/// top-k tie exclusion with room to spare: a 1e-5 parameter step moves gate
/// values and ReLU pre-activations by O(1e-5), so anything this close to a
/// boundary could flip under perturbation.
constexpr real_t kBoundaryMargin = 1e-4;

GeneratorConfig tiny_generator(std::uint64_t seed) {
  GeneratorConfig g;
  g.n_samples = kBatch;
  g.seed = seed;
  g.combination_probs = {{"E", 1.0 / 3}, {"ET", 1.0 / 3}, {"ETI", 1.0 / 3}};
  g.dims.static_dim = 3;
  g.dims.series_dim = 4;
  g.dims.series_len = 5;
  g.dims.vocab_size = 16;
  g.dims.image_dim = 5;
  g.tokens_per_sample = 6;
  return g;
}

ModelConfig tiny_model(const DatasetDims& dims) {
  ModelConfig m;
  m.encoder.dims = dims;
  m.encoder.embed_dim = 4;
  m.encoder.static_embed_dim = 4;
  m.encoder.rnn_hidden_dim = 4;
  m.encoder.token_embed_dim = 4;
  m.encoder.image_hidden_dim = 4;
  m.expert_hidden_dim = 6;
  m.gate_hidden_dim = 6;
  m.top_k = 2;
  return m;
}

bool covers_all_patterns(const std::vector<Sample>& batch) {
  bool e = false;
  bool et = false;
  bool eti = false;
  for (const Sample& s : batch) {
    const std::string key = s.combination().key();
    e = e || key == "E";
    et = et || key == "ET";
    eti = eti || key == "ETI";
  }
  return e && et && eti;
}

real_t batch_loss_value(const Model& model, const std::vector<const Sample*>& batch) {
  BatchGraph g = build_batch_loss(model, batch, kAlpha);
  return g.tape.scalar(g.loss);
}

}  // namespace

GradCheckReport run_gradcheck(std::uint64_t seed) {
  GradCheckReport report;
  report.tolerance = kTolerance;

  const std::vector<ModalityCombination> combos = {
      ModalityCombination::from_key("E"),
      ModalityCombination::from_key("ET"),
      ModalityCombination::from_key("ETI"),
  };

  for (int attempt = 0;; ++attempt) {
    if (attempt > kMaxRedraws) {
      throw ValueError("gradcheck: exhausted redraws without a boundary-safe instance");
    }
    const GeneratorConfig gen = tiny_generator(derive_seed(seed, 2000 + attempt));
    const std::vector<Sample> batch = generate(gen);
    if (!covers_all_patterns(batch)) {
      report.redraws = attempt + 1;
      continue;
    }
    std::vector<const Sample*> ptrs;
    for (const Sample& s : batch) ptrs.push_back(&s);

    Model model(tiny_model(gen.dims), combos, derive_seed(seed, 1000 + attempt));

    BatchGraph g = build_batch_loss(model, ptrs, kAlpha);
    if (g.min_topk_gap < kBoundaryMargin ||
        g.tape.min_boundary_margin() < kBoundaryMargin) {
      report.redraws = attempt + 1;
      continue;
    }

    model.params().zero_gradients();
    g.tape.backward(g.loss);
    std::map<std::string, Matrix> analytic;
    for (const std::string& name : model.params().names()) {
      analytic[name] = model.params().at(name).gradient;
    }

    report.max_rel_error = 0.0;
    for (const std::string& name : model.params().names()) {
      Parameter& p = model.params().at(name);
      const Matrix& a = analytic[name];
      for (Index c = 0; c < p.cols(); ++c) {
        for (Index r = 0; r < p.rows(); ++r) {
          const real_t saved = p.values(r, c);
          p.values(r, c) = saved + kStep;
          const real_t up = batch_loss_value(model, ptrs);
          p.values(r, c) = saved - kStep;
          const real_t down = batch_loss_value(model, ptrs);
          p.values(r, c) = saved;

          const real_t numeric = (up - down) / (2.0 * kStep);
          const real_t scale = std::max({std::abs(a(r, c)), std::abs(numeric), 1e-6});
          const real_t rel = std::abs(a(r, c) - numeric) / scale;
          ++report.entries_checked;
          if (rel > report.max_rel_error) {
            report.max_rel_error = rel;
            report.worst_parameter = name + "[" + std::to_string(r) + "," + std::to_string(c) + "]";
          }
        }
      }
    }
    report.passed = report.max_rel_error < kTolerance;
    return report;
  }
}

nlohmann::json gradcheck_to_json(const GradCheckReport& report) {
  return nlohmann::json{{"passed", report.passed},
                        {"max_rel_error", report.max_rel_error},
                        {"worst_parameter", report.worst_parameter},
                        {"entries_checked", report.entries_checked},
                        {"redraws", report.redraws},
                        {"tolerance", report.tolerance}};
}

}  // namespace moehealth
