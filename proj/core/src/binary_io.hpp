#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>

namespace mcdrive::detail {

inline std::uint32_t to_little(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    return ((v & 0xFFu) << 24) | ((v & 0xFF00u) << 8) | ((v >> 8) & 0xFF00u) | (v >> 24);
  }
}

inline void write_f32(std::ostream& os, float f) {
  const std::uint32_t le = to_little(std::bit_cast<std::uint32_t>(f));
  char buf[4];
  std::memcpy(buf, &le, 4);
  os.write(buf, 4);
}

inline float decode_f32(const char* p) {
  std::uint32_t le;
  std::memcpy(&le, p, 4);
  return std::bit_cast<float>(to_little(le));
}

}  // namespace mcdrive::detail
