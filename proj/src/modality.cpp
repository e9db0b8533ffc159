#include "moehealth/modality.hpp"

#include "moehealth/errors.hpp"

namespace moehealth {

char modality_letter(ModalityKind m) {
  switch (m) {
    case ModalityKind::kEhr:
      return 'E';
    case ModalityKind::kText:
      return 'T';
    case ModalityKind::kImage:
      return 'I';
  }
  throw ValueError("unknown modality kind");
}

std::string modality_name(ModalityKind m) {
  switch (m) {
    case ModalityKind::kEhr:
      return "EHR";
    case ModalityKind::kText:
      return "TEXT";
    case ModalityKind::kImage:
      return "IMAGE";
  }
  throw ValueError("unknown modality kind");
}

ModalityCombination::ModalityCombination(unsigned mask) : mask_(mask) {
  if (mask_ == 0 || mask_ >= (1u << kNumModalities)) {
    throw ValueError("modality combination must be a nonempty subset");
  }
}

ModalityCombination::ModalityCombination(std::initializer_list<ModalityKind> kinds)
    : ModalityCombination([&] {
        unsigned mask = 0;
        for (ModalityKind k : kinds) mask |= 1u << static_cast<int>(k);
        return mask;
      }()) {}

ModalityCombination ModalityCombination::from_mask(unsigned mask) {
  return ModalityCombination(mask);
}

ModalityCombination ModalityCombination::from_key(const std::string& key) {
  unsigned mask = 0;
  for (char c : key) {
    bool matched = false;
    for (ModalityKind m : kAllModalities) {
      if (modality_letter(m) == c) {
        mask |= 1u << static_cast<int>(m);
        matched = true;
      }
    }
    if (!matched) {
      throw ValueError("unknown modality letter '" + std::string(1, c) + "' in key '" + key + "'");
    }
  }
  ModalityCombination combo(mask);
  if (combo.key() != key) {
    throw ValueError("combination key '" + key + "' is not canonical (expected '" + combo.key() +
                     "')");
  }
  return combo;
}

int ModalityCombination::count() const {
  int n = 0;
  for (ModalityKind m : kAllModalities) n += has(m) ? 1 : 0;
  return n;
}

std::string ModalityCombination::key() const {
  std::string out;
  for (ModalityKind m : kAllModalities) {
    if (has(m)) out.push_back(modality_letter(m));
  }
  return out;
}

}  // namespace moehealth
