#pragma once

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <string>

namespace rlhflab {

// Reports print numbers with 12 significant digits; round-tripping through
// the formatter keeps stored JSON values consistent with the printed CSV.
inline std::string fmt12(double value) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", value);
  return buf;
}

inline double round12(double value) { return std::strtod(fmt12(value).c_str(), nullptr); }

inline std::uint64_t fnv1a64(const std::string& text) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

inline std::string hex64(std::uint64_t value) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

}  // namespace rlhflab
