#include "moehealth/split.hpp"

#include <cmath>

#include "moehealth/errors.hpp"
#include "moehealth/rng.hpp"

namespace moehealth {
namespace {

void validate_spec(const SplitSpec& spec) {
  if (spec.train_fraction < 0.0 || spec.val_fraction < 0.0 || spec.test_fraction < 0.0) {
    throw ConfigError("split: fractions must be non-negative");
  }
  const real_t total = spec.train_fraction + spec.val_fraction + spec.test_fraction;
  if (std::abs(total - 1.0) > 1e-9) {
    throw ConfigError("split: fractions sum to " + std::to_string(total) + ", expected 1");
  }
}

/// Shuffles one group of indices and deals them into the three splits.
void deal_group(const std::vector<Sample>& samples, std::vector<std::size_t> group,
                const SplitSpec& spec, std::uint64_t stream, Splits& out) {
  Rng rng(derive_seed(spec.seed, stream));
  rng.shuffle(group);
  const auto n = static_cast<real_t>(group.size());
  auto n_train = static_cast<std::size_t>(std::llround(n * spec.train_fraction));
  auto n_val = static_cast<std::size_t>(std::llround(n * spec.val_fraction));
  if (n_train > group.size()) n_train = group.size();
  if (n_train + n_val > group.size()) n_val = group.size() - n_train;

  for (std::size_t i = 0; i < group.size(); ++i) {
    const Sample& s = samples[group[i]];
    if (i < n_train) {
      out.train.push_back(s);
    } else if (i < n_train + n_val) {
      out.val.push_back(s);
    } else {
      out.test.push_back(s);
    }
  }
}

}  // namespace

Splits split(const std::vector<Sample>& samples, const SplitSpec& spec) {
  validate_spec(spec);
  if (samples.size() < 10) {
    throw ValueError("split: need at least 10 samples, got " + std::to_string(samples.size()));
  }

  Splits out;
  if (spec.stratify) {
    std::vector<std::size_t> negatives;
    std::vector<std::size_t> positives;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      (samples[i].label == 1 ? positives : negatives).push_back(i);
    }
    deal_group(samples, std::move(negatives), spec, 0, out);
    deal_group(samples, std::move(positives), spec, 1, out);
  } else {
    std::vector<std::size_t> all(samples.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    deal_group(samples, std::move(all), spec, 0, out);
  }
  return out;
}

}  // namespace moehealth
