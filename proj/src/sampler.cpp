#include "repdisp/sampler.hpp"

#include <numeric>
#include <string>
#include <unordered_map>

#include "repdisp/error.hpp"

namespace repdisp {

std::uint64_t SeededSampler::uniform_below(std::uint64_t bound) {
  if (bound == 0) fail(Errc::invalid_argument, "uniform_below requires bound > 0");
  __extension__ typedef unsigned __int128 u128;
  std::uint64_t x = next_u64();
  u128 m = static_cast<u128>(x) * bound;
  auto low = static_cast<std::uint64_t>(m);
  if (low < bound) {
    const std::uint64_t threshold = (0 - bound) % bound;
    while (low < threshold) {
      x = next_u64();
      m = static_cast<u128>(x) * bound;
      low = static_cast<std::uint64_t>(m);
    }
  }
  return static_cast<std::uint64_t>(m >> 64);
}

std::vector<std::size_t> sample_indices(SeededSampler& sampler, std::size_t n,
                                        std::size_t k) {
  if (k > n) {
    fail(Errc::invalid_argument, "cannot sample " + std::to_string(k) +
                                     " distinct indices from " + std::to_string(n));
  }
  std::vector<std::size_t> out;
  out.reserve(k);

  // Dense shuffle when the population is small relative to the draw.
  if (n <= (std::size_t{1} << 16) || n <= 4 * k) {
    std::vector<std::size_t> pool(n);
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    for (std::size_t i = 0; i < k; ++i) {
      std::size_t j = i + static_cast<std::size_t>(sampler.uniform_below(n - i));
      std::swap(pool[i], pool[j]);
      out.push_back(pool[i]);
    }
    return out;
  }

  std::unordered_map<std::size_t, std::size_t> displaced;
  auto value_at = [&](std::size_t pos) {
    auto it = displaced.find(pos);
    return it == displaced.end() ? pos : it->second;
  };
  for (std::size_t i = 0; i < k; ++i) {
    std::size_t j = i + static_cast<std::size_t>(sampler.uniform_below(n - i));
    std::size_t vj = value_at(j);
    std::size_t vi = value_at(i);
    out.push_back(vj);
    displaced[j] = vi;
  }
  return out;
}

}  // namespace repdisp
