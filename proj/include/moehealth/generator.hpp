#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "moehealth/sample.hpp"
#include "moehealth/types.hpp"

namespace moehealth {

/// Synthetic benchmark generator. Each sample owns a latent z in R^L; the
/// modalities expose noisy views of disjoint slices of z (EHR the first
/// third, text the middle, image the last). The label mixes a weighted sum
/// of z with a product term over a pair of latent dims chosen by the
/// sample's availability pattern — so no single modality carries the full
/// signal, and the pattern itself decides which interaction is in play:
/// fusion helps, and pattern-aware specialization helps beyond fusion.
struct GeneratorConfig {
  Index n_samples = 8000;
  std::uint64_t seed = 7;

  /// Availability-pattern distribution. Defaults mirror a cohort of 31,088
  /// admissions where 11,636 are complete, 12,160 lack the image, 581 lack
  /// the notes, and 6,711 have EHR only.
  std::map<std::string, real_t> combination_probs = {
      {"E", 0.2159}, {"EI", 0.0187}, {"ET", 0.3911}, {"ETI", 0.3743}};

  Index latent_dim = 6;  // must be a positive multiple of 3 (one slice per modality)
  DatasetDims dims;
  Index tokens_per_sample = 24;

  real_t noise_ehr = 0.3;
  real_t noise_text = 0.25;
  real_t noise_image = 0.3;

  /// Label = Bernoulli(sigmoid(steepness * (w·z ± cross_weight·z_a·z_b - offset))),
  /// where the pair (a, b) and the sign are fixed by the sample's availability
  /// pattern: a is the first dim observed by the pattern's first modality, b
  /// the first dim of its middle modality (the slice's last dim when the two
  /// collide), and the sign flips on even-sized patterns. Neighboring patterns
  /// share a pair with opposite signs — "ET" and "ETI" both use (z0, z2) — so
  /// the interaction is always learnable from the present modalities, but
  /// only by a predictor that knows which pattern it is looking at.
  real_t label_steepness = 2.0;
  real_t label_offset = 2.4;  // tuned for a base positive rate near 0.15
  real_t cross_weight = 1.2;
};

/// Throws ConfigError when probabilities do not form a distribution over
/// valid combination keys or any dimension is non-positive.
void validate_generator_config(const GeneratorConfig& config);

/// Samples [begin, end) of the dataset the config describes. Every sample is
/// drawn from its own counter-based random stream, so any sharding by index
/// range reassembles to the exact same dataset.
std::vector<Sample> generate_range(const GeneratorConfig& config, Index begin, Index end);

/// The full dataset: generate_range(config, 0, n_samples).
std::vector<Sample> generate(const GeneratorConfig& config);

}  // namespace moehealth
