#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>
#include <string>

namespace moehealth {

/// The three input sources a sample may carry, in canonical order.
enum class ModalityKind : int { kEhr = 0, kText = 1, kImage = 2 };

inline constexpr int kNumModalities = 3;

inline constexpr std::array<ModalityKind, kNumModalities> kAllModalities = {
    ModalityKind::kEhr, ModalityKind::kText, ModalityKind::kImage};

char modality_letter(ModalityKind m);
std::string modality_name(ModalityKind m);

/// A nonempty subset of modality kinds. The canonical string key ("E", "ET",
/// "ETI", ...) follows the canonical modality order and is injective over
/// subsets, so it doubles as the expert-specialization key.
class ModalityCombination {
 public:
  ModalityCombination(std::initializer_list<ModalityKind> kinds);
  static ModalityCombination from_mask(unsigned mask);
  static ModalityCombination from_key(const std::string& key);

  bool has(ModalityKind m) const { return (mask_ >> static_cast<int>(m)) & 1u; }
  unsigned mask() const { return mask_; }
  int count() const;
  std::string key() const;

  friend bool operator==(ModalityCombination a, ModalityCombination b) {
    return a.mask_ == b.mask_;
  }
  friend bool operator<(ModalityCombination a, ModalityCombination b) {
    return a.key() < b.key();
  }

 private:
  explicit ModalityCombination(unsigned mask);

  unsigned mask_;
};

}  // namespace moehealth
