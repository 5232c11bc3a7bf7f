#include <bit>

#include "kernels.hpp"

namespace skyloop::simd::detail {

void hamming_scalar(const Descriptor256& query, const Descriptor256* db, std::size_t n,
                    std::uint16_t* out) {
  for (std::size_t i = 0; i < n; ++i) {
    int d = 0;
    for (int w = 0; w < 4; ++w) d += std::popcount(query.words[w] ^ db[i].words[w]);
    out[i] = static_cast<std::uint16_t>(d);
  }
}

void prescreen_scalar(const std::uint8_t* center, std::ptrdiff_t stride, std::size_t count,
                      std::uint8_t threshold, std::uint8_t* out) {
  const std::ptrdiff_t offsets[4] = {-3 * stride, 3, 3 * stride, -3};
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint8_t* p = center + i;
    const int hi = int{*p} + threshold;
    const int lo = int{*p} - threshold;
    int brighter = 0;
    int darker = 0;
    for (std::ptrdiff_t o : offsets) {
      const int v = p[o];
      brighter += v > hi;
      darker += v < lo;
    }
    out[i] = static_cast<std::uint8_t>((brighter >= 2 ? 1 : 0) | (darker >= 2 ? 2 : 0));
  }
}

}  // namespace skyloop::simd::detail
