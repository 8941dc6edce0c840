#pragma once

#include <cstdint>
#include <random>

namespace vad {

// Deterministic pseudo-random source. All randomness in the project flows
// through explicitly seeded instances of this class; there is no global RNG.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), gen_(seed) {}

  // Derive an independent stream, e.g. one per sequence or per epoch.
  Rng fork(std::uint64_t salt) const { return Rng(mix(seed_, salt)); }

  float uniform(float lo, float hi) {
    std::uniform_real_distribution<float> d(lo, hi);
    return d(gen_);
  }

  float normal(float mean, float stddev) {
    std::normal_distribution<float> d(mean, stddev);
    return d(gen_);
  }

  // Inclusive on both ends.
  int uniform_int(int lo, int hi) {
    std::uniform_int_distribution<int> d(lo, hi);
    return d(gen_);
  }

  std::uint64_t next_u64() { return gen_(); }

  std::mt19937_64& engine() { return gen_; }

  // SplitMix64 finalizer; used to combine seeds without correlation.
  static std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = a + 0x9E3779B97F4A7C15ULL * (b + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 gen_;
};

// Stateless hash to [0,1); used for static textures so pixel values do not
// depend on evaluation order.
inline float hash01(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  std::uint64_t h = Rng::mix(Rng::mix(a, b), c);
  return static_cast<float>(h >> 40) / static_cast<float>(1ULL << 24);
}

}  // namespace vad
