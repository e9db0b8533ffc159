#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace moehealth {

/// Streaming FNV-1a (64-bit) content digest. Identifies byte content in
/// output headers; not a cryptographic hash.
class ContentDigest {
 public:
  void update(std::string_view bytes) {
    for (const char c : bytes) {
      state_ ^= static_cast<unsigned char>(c);
      state_ *= 0x100000001b3ULL;
    }
  }

  std::string hex() const {
    static constexpr char kDigits[] = "0123456789abcdef";
    std::string out(16, '0');
    std::uint64_t v = state_;
    for (int i = 15; i >= 0; --i) {
      out[static_cast<std::size_t>(i)] = kDigits[v & 0xf];
      v >>= 4;
    }
    return out;
  }

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

inline std::string digest_hex(std::string_view bytes) {
  ContentDigest d;
  d.update(bytes);
  return d.hex();
}

}  // namespace moehealth
