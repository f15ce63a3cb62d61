#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace repdisp {

/// splitmix64 generator. The same seed produces the same stream on every
/// platform; bounded draws use Lemire's multiply-and-reject.
class SeededSampler {
 public:
  explicit SeededSampler(std::uint64_t seed) noexcept : seed_(seed), state_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t state() const noexcept { return state_; }

  std::uint64_t next_u64() noexcept {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform integer in [0, bound). bound must be > 0.
  std::uint64_t uniform_below(std::uint64_t bound);

 private:
  std::uint64_t seed_;
  std::uint64_t state_;
};

/// k distinct indices from [0, n) via partial Fisher-Yates, in draw order.
/// Large populations use a sparse swap table; the output is identical to
/// the dense shuffle for the same sampler state.
std::vector<std::size_t> sample_indices(SeededSampler& sampler, std::size_t n,
                                        std::size_t k);

}  // namespace repdisp
