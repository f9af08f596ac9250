#include "recycle/hash.hpp"

#include <array>
#include <fstream>

#include "recycle/error.hpp"

namespace recycle {

std::string to_hex64(std::uint64_t value) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = kDigits[value & 0xF];
    value >>= 4;
  }
  return out;
}

Hasher& Hasher::add(std::string_view piece) noexcept {
  add(static_cast<std::uint64_t>(piece.size()));
  state_ = fnv1a64(piece, state_);
  return *this;
}

Hasher& Hasher::add(std::uint64_t value) noexcept {
  for (int i = 0; i < 8; ++i) {
    state_ ^= (value >> (8 * i)) & 0xFF;
    state_ *= kFnv64Prime;
  }
  return *this;
}

std::uint64_t hash_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoFailure, "cannot open " + path);
  std::uint64_t h = kFnv64Offset;
  std::array<char, 1 << 16> buf{};
  while (in) {
    in.read(buf.data(), buf.size());
    h = fnv1a64(std::string_view(buf.data(), static_cast<std::size_t>(in.gcount())), h);
  }
  return h;
}

}  // namespace recycle
