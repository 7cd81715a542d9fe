#include "wifiloc/rng.hpp"

namespace wifiloc {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t h) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < size; ++i) {
    h ^= bytes[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

Rng Rng::derive(std::initializer_list<std::uint64_t> keys) const {
  std::uint64_t h = mix64(seed_ ^ 0x6a09e667f3bcc908ULL);
  for (std::uint64_t k : keys) h = mix64(h ^ mix64(k));
  return Rng(h);
}

Rng Rng::derive(Stream s, std::initializer_list<std::uint64_t> keys) const {
  std::uint64_t h = mix64(seed_ ^ 0x6a09e667f3bcc908ULL);
  h = mix64(h ^ mix64(static_cast<std::uint64_t>(s)));
  for (std::uint64_t k : keys) h = mix64(h ^ mix64(k));
  return Rng(h);
}

}  // namespace wifiloc
