#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace mtsd {

// Deterministic RNG used everywhere. All stochasticity in the project flows
// through explicit Rng instances seeded from config values; nothing reads
// ambient entropy. Distribution code is hand-rolled on top of the raw engine
// so that streams are stable across standard-library versions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Standard normal via Box-Muller.
  double normal();

  // Unbiased integer in [0, n). n must be > 0.
  std::size_t uniform_index(std::size_t n);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[uniform_index(i)]);
    }
  }

 private:
  std::mt19937_64 eng_;
};

// Derives independent sub-stream seeds from a base seed. Used to give each
// member / generation / purpose its own stream so results do not depend on
// scheduling order.
std::uint64_t mix_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t index = 0);

}  // namespace mtsd
