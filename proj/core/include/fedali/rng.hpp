#pragma once

#include <cstdint>
#include <vector>

#include "fedali/common.hpp"

namespace fedali {

/// splitmix64 step; the basis for all seed derivation.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Stateless sub-seed derivation: same (seed, tags...) always gives the same
/// stream, independent of call order. Used to give every client/round/layer
/// its own reproducible stream.
inline std::uint64_t derive_seed(std::uint64_t base) {
  std::uint64_t s = base;
  return splitmix64(s);
}
template <class... Tags>
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag, Tags... rest) {
  std::uint64_t s = base ^ (0x9E3779B97F4A7C15ULL + tag);
  return derive_seed(splitmix64(s), rest...);
}

/// Deterministic RNG with hand-rolled distributions. std::normal_distribution
/// and std::shuffle are implementation-defined, so everything that must be
/// bit-reproducible goes through this class.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed ? seed : 0x5DEECE66DULL) {
    // warm up so nearby seeds decorrelate
    for (int i = 0; i < 4; ++i) splitmix64(state_);
  }

  std::uint64_t next_u64() { return splitmix64(state_); }

  /// Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Uniform in [0, bound) by rejection; bound > 0.
  std::uint64_t uniform_index(std::uint64_t bound);

  /// Standard normal via Box-Muller (pairs cached).
  double normal();

  /// Gamma(alpha, 1) via Marsaglia-Tsang; alpha > 0.
  double gamma(double alpha);

  /// Dirichlet(alpha, ..., alpha) of dimension k.
  std::vector<double> dirichlet(double alpha, std::size_t k);

  /// Fisher-Yates.
  template <class T>
  void shuffle(std::vector<T>& v) {
    if (v.size() < 2) return;
    for (std::size_t i = v.size() - 1; i > 0; --i) {
      std::size_t j = uniform_index(i + 1);
      std::swap(v[i], v[j]);
    }
  }

 private:
  std::uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace fedali
