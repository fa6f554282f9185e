#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace bapriv {

// Seeded random stream. Draws are built from raw 64-bit engine output with
// fixed transforms so a seed reproduces the same values on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  // Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Standard normal (Box-Muller, one value per call).
  double normal();
  // Uniform index in [0, n).
  std::size_t index(std::size_t n);

  template <typename T>
  void shuffle(std::span<T> values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      std::swap(values[i - 1], values[index(i)]);
    }
  }

  std::vector<std::size_t> permutation(std::size_t n);

 private:
  std::mt19937_64 engine_;
};

// Decorrelated child seed for a numbered sub-stream.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace bapriv
