#include "mtsd/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace mtsd {

double Rng::normal() {
  // u1 in (0, 1] so the log is finite.
  const double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::size_t Rng::uniform_index(std::size_t n) {
  if (n == 0) throw std::invalid_argument("Rng::uniform_index: n == 0");
  // Lemire rejection sampling.
  const std::uint64_t range = static_cast<std::uint64_t>(n);
  const std::uint64_t threshold = (-range) % range;
  while (true) {
    const std::uint64_t r = next_u64();
    const unsigned __int128 m = static_cast<unsigned __int128>(r) * range;
    const std::uint64_t low = static_cast<std::uint64_t>(m);
    if (low >= threshold) return static_cast<std::size_t>(m >> 64);
  }
}

static std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t mix_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t index) {
  return splitmix64(splitmix64(splitmix64(base) ^ stream) ^ index);
}

}  // namespace mtsd
