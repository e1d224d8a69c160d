#ifndef CS3VM_RNG_HPP
#define CS3VM_RNG_HPP

#include <cstdint>
#include <limits>
#include <random>

namespace cs3vm {

/// Reproducible random source: std::mt19937_64 with fixed output mappings.
/// All randomized operations in the library take an explicit seed and draw
/// through this wrapper only, so runs are bit-identical for a given seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  /// Uniform double in [0, 1) built from the top 53 bits.
  double uniform01() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  /// Uniform integer in [0, n); unbiased via rejection.
  std::size_t uniform_index(std::size_t n) {
    const std::uint64_t max = std::numeric_limits<std::uint64_t>::max();
    const std::uint64_t limit = max - max % n;
    std::uint64_t x;
    do {
      x = gen_();
    } while (x >= limit);
    return static_cast<std::size_t>(x % n);
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace cs3vm

#endif
