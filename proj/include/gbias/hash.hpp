#ifndef GBIAS_HASH_HPP
#define GBIAS_HASH_HPP

#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>

namespace gbias {

// 64-bit FNV-1a. Stable across platforms, used for artifact fingerprints.
class Fnv1a {
 public:
  Fnv1a& update(std::string_view bytes) {
    for (unsigned char c : bytes) {
      state_ ^= c;
      state_ *= 0x100000001b3ULL;
    }
    return *this;
  }

  std::uint64_t digest() const { return state_; }

  std::string hex() const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(state_));
    return buf;
  }

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

inline std::string hash_hex(std::string_view bytes) { return Fnv1a{}.update(bytes).hex(); }

}  // namespace gbias

#endif  // GBIAS_HASH_HPP
