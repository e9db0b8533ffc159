#pragma once

#include <optional>
#include <string>
#include <vector>

#include "moehealth/modality.hpp"
#include "moehealth/types.hpp"

namespace moehealth {

/// Dimensions of the raw per-sample features, shared by every record in a
/// dataset and recorded in its header line.
struct DatasetDims {
  Index static_dim = 8;    // EHR static feature vector
  Index series_dim = 12;   // EHR features per hourly bin
  Index series_len = 48;   // hourly bins
  Index vocab_size = 256;  // token-id space
  Index image_dim = 64;    // precomputed image feature vector

  friend bool operator==(const DatasetDims&, const DatasetDims&) = default;
};

/// One admission-like record. An absent modality is a disengaged optional;
/// ehr_static and ehr_series jointly constitute the EHR modality and are
/// present or absent together.
struct Sample {
  std::string id;
  int label = 0;
  std::optional<Vector> ehr_static;
  std::optional<Matrix> ehr_series;  // T x F_d, hourly bins
  std::optional<std::vector<int>> text_tokens;
  std::optional<Vector> image_features;

  bool has(ModalityKind m) const {
    switch (m) {
      case ModalityKind::kEhr:
        return ehr_static.has_value() && ehr_series.has_value();
      case ModalityKind::kText:
        return text_tokens.has_value();
      case ModalityKind::kImage:
        return image_features.has_value();
    }
    return false;
  }

  ModalityCombination combination() const;
};

/// Checks the Sample invariants; throws DataError (tagged with `line` when
/// >= 0) on violation.
void validate_sample(const Sample& sample, long line = -1);

}  // namespace moehealth
