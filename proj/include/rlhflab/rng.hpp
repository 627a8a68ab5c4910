#pragma once

#include <cstdint>
#include <span>

#include "rlhflab/error.hpp"

namespace rlhflab {

// Deterministic seed derivation. Streams are addressed as
// mix_seed(master, tag[, index]); the same address always yields the same
// stream, so prompt draws are unchanged when K changes and paired runs can
// share rollout randomness by sharing addresses.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag) {
  std::uint64_t s = seed ^ (0x9e3779b97f4a7c15ULL + tag);
  std::uint64_t a = splitmix64(s);
  return a ^ splitmix64(s);
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag, std::uint64_t index) {
  return mix_seed(mix_seed(seed, tag), index);
}

// xoshiro256++ with splitmix64 state expansion. Small state, fully specified
// output sequence; used everywhere randomness is needed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto& word : state_) word = splitmix64(sm);
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // uniform in [0, 1), 53-bit resolution
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  double normal();

  // Gamma(shape, 1) via Marsaglia-Tsang; shape < 1 handled by boosting.
  double gamma(double shape);

  // Dirichlet(alpha, ..., alpha) written into out (normalised gammas).
  void dirichlet(double alpha, std::span<double> out);

  // Inverse-CDF draw over a finite alphabet, cumulative sums taken in
  // ascending index order. Never returns a zero-probability index.
  std::size_t categorical(std::span<const double> probs);

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  std::uint64_t state_[4];
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace rlhflab
