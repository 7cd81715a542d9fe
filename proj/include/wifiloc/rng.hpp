#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace wifiloc {

/// Stream tags used to derive independent substreams from a run seed. Keeping
/// the consumers on disjoint streams means that, for example, drawing NLOS
/// ranges in soft-classification mode never shifts the motion noise.
enum class Stream : std::uint64_t {
  Init = 1,
  Motion = 2,
  NlosRange = 3,
  Resample = 4,
  Landmark = 5,
  Bootstrap = 6,
  Scenario = 7,
  Filter = 8,
  Walk = 9,
  Shadowing = 10,
  Dataset = 11,
  Network = 12,
  Training = 13,
};

/// Seeded random stream. Copyable; copies continue independently from the
/// same state.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }

  /// Independent child stream keyed by (this stream's seed, keys...). Does not
  /// advance this stream.
  Rng derive(std::initializer_list<std::uint64_t> keys) const;
  Rng derive(Stream s, std::initializer_list<std::uint64_t> keys = {}) const;

  double uniform(double lo = 0.0, double hi = 1.0) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }
  double normal(double mean = 0.0, double stddev = 1.0) {
    if (stddev <= 0.0) return mean;
    return std::normal_distribution<double>(mean, stddev)(engine_);
  }
  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }
  bool bernoulli(double p) { return uniform() < p; }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

/// SplitMix64 finalizer; also used for content hashing.
std::uint64_t mix64(std::uint64_t x);

/// FNV-1a over raw bytes.
std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t h = 0xcbf29ce484222325ULL);

}  // namespace wifiloc
