#include "moehealth/generator.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>
#include <utility>

#include "moehealth/errors.hpp"
#include "moehealth/math.hpp"
#include "moehealth/rng.hpp"

namespace moehealth {
namespace {

/// Projection matrices are drawn from this fixed stream regardless of the
/// config seed: they define the task itself, while the seed only varies the
/// sampled instances. This also keeps index-range sharding trivially exact.
constexpr std::uint64_t kProjectionSeed = 0x6d6f652d7461736bULL;

/// Six decimal places; applied at generation time so that a write/load round
/// trip reproduces the in-memory dataset exactly.
real_t quantize(real_t x) { return std::round(x * 1e6) / 1e6; }

struct Projections {
  Matrix static_view;   // static_dim x slice
  Matrix series_drift;  // series_dim x slice
  Matrix image_view;    // image_dim x slice
};

Matrix draw_projection(Rng& rng, Index rows, Index cols) {
  Matrix m(rows, cols);
  const real_t scale = 1.0 / std::sqrt(static_cast<real_t>(cols));
  for (Index c = 0; c < cols; ++c) {
    for (Index r = 0; r < rows; ++r) {
      m(r, c) = scale * rng.normal();
    }
  }
  return m;
}

Projections make_projections(const GeneratorConfig& config) {
  Rng rng(derive_seed(kProjectionSeed, 0));
  const Index slice = config.latent_dim / kNumModalities;
  Projections p;
  p.static_view = draw_projection(rng, config.dims.static_dim, slice);
  p.series_drift = draw_projection(rng, config.dims.series_dim, slice);
  p.image_view = draw_projection(rng, config.dims.image_dim, slice);
  return p;
}

/// Label weights decay across z, so earlier slices (EHR first) carry more
/// signal: the strongest single modality should be EHR, echoing the usual
/// clinical ordering.
Vector label_weights(Index latent_dim) {
  Vector w(latent_dim);
  for (Index i = 0; i < latent_dim; ++i) {
    w[i] = 1.0 - 0.6 * static_cast<real_t>(i) / static_cast<real_t>(latent_dim - 1);
  }
  return w;
}

/// The label's interaction term, chosen by the availability pattern: `a` is
/// the first dim observed by the pattern's first modality, `b` the first dim
/// of its middle modality (falling back to the slice's last dim when the two
/// collide), and the sign flips on even-sized patterns. Every pattern thus
/// poses a different prediction problem over dims it actually exposes, and
/// neighboring patterns land on the same pair with opposite signs — "ET" and
/// "ETI" both use (z0, z2) — so a pattern-blind predictor sees cancelling
/// gradients from the two dominant patterns and only pattern-aware
/// specialists can learn the term. The availability and feature
/// distributions themselves are untouched.
struct Interaction {
  Index a;
  Index b;
  real_t sign;
};

Interaction label_interaction(ModalityCombination combo, Index slice) {
  std::vector<ModalityKind> mods;
  for (ModalityKind m : kAllModalities) {
    if (combo.has(m)) mods.push_back(m);
  }
  const Index a = static_cast<Index>(mods.front()) * slice;
  Index b = static_cast<Index>(mods[mods.size() / 2]) * slice;
  if (b == a) b += slice - 1;  // single-modality pattern: pair within its slice
  return {a, b, mods.size() % 2 == 1 ? real_t{1.0} : real_t{-1.0}};
}

ModalityCombination draw_combination(const GeneratorConfig& config, Rng& rng) {
  const real_t u = rng.uniform01();
  real_t cumulative = 0.0;
  std::string last_key;
  for (const auto& [key, prob] : config.combination_probs) {
    cumulative += prob;
    last_key = key;
    if (u < cumulative) return ModalityCombination::from_key(key);
  }
  return ModalityCombination::from_key(last_key);  // numeric tail
}

std::string sample_id(Index index) {
  std::ostringstream out;
  out << 's' << std::setw(7) << std::setfill('0') << index;
  return out.str();
}

}  // namespace

void validate_generator_config(const GeneratorConfig& config) {
  if (config.n_samples < 1) {
    throw ConfigError("generator: n_samples must be at least 1, got " +
                      std::to_string(config.n_samples));
  }
  if (config.latent_dim < kNumModalities || config.latent_dim % kNumModalities != 0) {
    throw ConfigError("generator: latent_dim must be a positive multiple of " +
                      std::to_string(kNumModalities));
  }
  if (config.dims.static_dim < 1 || config.dims.series_dim < 1 || config.dims.series_len < 1 ||
      config.dims.vocab_size < 1 || config.dims.image_dim < 1) {
    throw ConfigError("generator: all dataset dimensions must be positive");
  }
  if (config.tokens_per_sample < 1) {
    throw ConfigError("generator: tokens_per_sample must be positive");
  }
  const Index slice = config.latent_dim / kNumModalities;
  if (config.dims.vocab_size < slice) {
    throw ConfigError("generator: vocab_size must be at least the text slice width");
  }
  if (config.noise_ehr < 0.0 || config.noise_text < 0.0 || config.noise_image < 0.0) {
    throw ConfigError("generator: noise scales must be non-negative");
  }
  if (config.label_steepness <= 0.0) {
    throw ConfigError("generator: label_steepness must be positive");
  }
  if (config.combination_probs.empty()) {
    throw ConfigError("generator: combination_probs must not be empty");
  }
  real_t total = 0.0;
  for (const auto& [key, prob] : config.combination_probs) {
    std::string canonical;
    try {
      canonical = ModalityCombination::from_key(key).key();
    } catch (const ValueError& e) {
      throw ConfigError(std::string("generator: bad combination key: ") + e.what());
    }
    if (canonical != key) {
      throw ConfigError("generator: combination key \"" + key + "\" is not canonical (want \"" +
                        canonical + "\")");
    }
    if (prob < 0.0) {
      throw ConfigError("generator: probability for \"" + key + "\" is negative");
    }
    total += prob;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw ConfigError("generator: combination probabilities sum to " + std::to_string(total) +
                      ", expected 1");
  }
}

std::vector<Sample> generate_range(const GeneratorConfig& config, Index begin, Index end) {
  validate_generator_config(config);
  if (begin < 0 || end > config.n_samples || begin > end) {
    throw ValueError("generate_range: invalid index range [" + std::to_string(begin) + ", " +
                     std::to_string(end) + ") for n_samples = " +
                     std::to_string(config.n_samples));
  }

  const Projections proj = make_projections(config);
  const Vector w = label_weights(config.latent_dim);
  const Index slice = config.latent_dim / kNumModalities;
  const Index ehr_lo = 0;
  const Index text_lo = slice;
  const Index image_lo = 2 * slice;
  // Tokens in [c*bucket_count, (c+1)*bucket_count) encode the c-th text-slice
  // coordinate, so a bag-of-embeddings encoder can separate the coordinates.
  const Index bucket_count = config.dims.vocab_size / slice;

  std::vector<Sample> samples;
  samples.reserve(static_cast<std::size_t>(end - begin));

  for (Index i = begin; i < end; ++i) {
    Rng rng(derive_seed(config.seed, static_cast<std::uint64_t>(i)));
    Sample s;
    s.id = sample_id(i);

    Vector z(config.latent_dim);
    for (Index d = 0; d < config.latent_dim; ++d) {
      z[d] = rng.normal();
    }

    const ModalityCombination combo = draw_combination(config, rng);

    const Interaction ix = label_interaction(combo, slice);
    const real_t score = w.dot(z) + ix.sign * config.cross_weight * z[ix.a] * z[ix.b];
    const real_t p = sigmoid(config.label_steepness * (score - config.label_offset));
    s.label = rng.bernoulli(p) ? 1 : 0;

    if (combo.has(ModalityKind::kEhr)) {
      const Vector z_ehr = z.segment(ehr_lo, slice);
      Vector statics = proj.static_view * z_ehr;
      for (Index j = 0; j < statics.size(); ++j) {
        statics[j] = quantize(statics[j] + config.noise_ehr * rng.normal());
      }
      s.ehr_static = std::move(statics);

      const Vector drift = proj.series_drift * z_ehr;
      Matrix series(config.dims.series_len, config.dims.series_dim);
      for (Index t = 0; t < config.dims.series_len; ++t) {
        const real_t ramp =
            static_cast<real_t>(t + 1) / static_cast<real_t>(config.dims.series_len);
        for (Index f = 0; f < config.dims.series_dim; ++f) {
          series(t, f) = quantize(drift[f] * ramp + config.noise_ehr * rng.normal());
        }
      }
      s.ehr_series = std::move(series);
    }

    if (combo.has(ModalityKind::kText)) {
      std::vector<int> tokens;
      tokens.reserve(static_cast<std::size_t>(config.tokens_per_sample));
      for (Index j = 0; j < config.tokens_per_sample; ++j) {
        const Index coord = j % slice;
        const real_t v = z[text_lo + coord] + config.noise_text * rng.normal();
        // Affine bucketing of a roughly N(0, 1+noise²) value; ±3.5 covers it.
        auto bucket = static_cast<Index>(std::floor((v + 3.5) / 7.0 *
                                                    static_cast<real_t>(bucket_count)));
        bucket = std::min(std::max(bucket, Index{0}), bucket_count - 1);
        tokens.push_back(static_cast<int>(coord * bucket_count + bucket));
      }
      s.text_tokens = std::move(tokens);
    }

    if (combo.has(ModalityKind::kImage)) {
      const Vector z_image = z.segment(image_lo, slice);
      Vector features = proj.image_view * z_image;
      for (Index j = 0; j < features.size(); ++j) {
        features[j] = quantize(features[j] + config.noise_image * rng.normal());
      }
      s.image_features = std::move(features);
    }

    samples.push_back(std::move(s));
  }
  return samples;
}

std::vector<Sample> generate(const GeneratorConfig& config) {
  return generate_range(config, 0, config.n_samples);
}

}  // namespace moehealth
