#pragma once

#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>

namespace darthkit {

// FNV-1a 64; only used for content digests in manifests.
struct Fnv64 {
  std::uint64_t h = 1469598103934665603ull;

  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= c[i];
      h *= 1099511628211ull;
    }
  }
  void str(std::string_view s) { bytes(s.data(), s.size()); }
  std::string hex() const {
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
  }
};

inline std::string content_hash(std::string_view s) {
  Fnv64 f;
  f.str(s);
  return f.hex();
}

}  // namespace darthkit
