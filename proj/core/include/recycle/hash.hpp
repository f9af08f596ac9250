#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace recycle {

inline constexpr std::uint64_t kFnv64Offset = 14695981039346656037ULL;
inline constexpr std::uint64_t kFnv64Prime = 1099511628211ULL;

constexpr std::uint64_t fnv1a64(std::string_view bytes,
                                std::uint64_t seed = kFnv64Offset) noexcept {
  std::uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= kFnv64Prime;
  }
  return h;
}

constexpr std::uint32_t fnv1a32(std::string_view bytes) noexcept {
  std::uint32_t h = 2166136261U;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 16777619U;
  }
  return h;
}

// Fixed-width, lowercase, 16 hex digits.
std::string to_hex64(std::uint64_t value);

// Incremental FNV-1a over several pieces; each piece is length-prefixed so
// ("ab","c") and ("a","bc") hash differently.
class Hasher {
 public:
  Hasher& add(std::string_view piece) noexcept;
  Hasher& add(std::uint64_t value) noexcept;
  std::uint64_t value() const noexcept { return state_; }
  std::string hex() const { return to_hex64(state_); }

 private:
  std::uint64_t state_ = kFnv64Offset;
};

// Content hash of a file, streamed.
std::uint64_t hash_file(const std::string& path);

}  // namespace recycle
