#include "moehealth/sample.hpp"

#include "moehealth/errors.hpp"

namespace moehealth {

ModalityCombination Sample::combination() const {
  unsigned mask = 0;
  for (ModalityKind m : kAllModalities) {
    if (has(m)) mask |= 1u << static_cast<int>(m);
  }
  return ModalityCombination::from_mask(mask);
}

void validate_sample(const Sample& sample, long line) {
  if (sample.label != 0 && sample.label != 1) {
    throw DataError("sample '" + sample.id + "': label must be 0 or 1", line);
  }
  if (sample.ehr_static.has_value() != sample.ehr_series.has_value()) {
    throw DataError("sample '" + sample.id +
                        "': ehr_static and ehr_series must be present or absent together",
                    line);
  }
  if (sample.text_tokens && sample.text_tokens->empty()) {
    throw DataError("sample '" + sample.id + "': text_tokens may not be empty (omit the field)",
                    line);
  }
  bool any = false;
  for (ModalityKind m : kAllModalities) any = any || sample.has(m);
  if (!any) {
    throw DataError("sample '" + sample.id + "': at least one modality must be present", line);
  }
  for (ModalityKind m : kAllModalities) {
    if (!sample.has(m)) continue;
    switch (m) {
      case ModalityKind::kEhr:
        if (!sample.ehr_static->allFinite() || !sample.ehr_series->allFinite()) {
          throw DataError("sample '" + sample.id + "': EHR features contain non-finite values",
                          line);
        }
        if (sample.ehr_series->rows() < 1) {
          throw DataError("sample '" + sample.id + "': ehr_series needs at least one time bin",
                          line);
        }
        break;
      case ModalityKind::kText:
        for (int tok : *sample.text_tokens) {
          if (tok < 0) {
            throw DataError("sample '" + sample.id + "': negative token id", line);
          }
        }
        break;
      case ModalityKind::kImage:
        if (!sample.image_features->allFinite()) {
          throw DataError("sample '" + sample.id + "': image features contain non-finite values",
                          line);
        }
        break;
    }
  }
}

}  // namespace moehealth
