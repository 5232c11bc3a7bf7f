#include <arm_neon.h>

#include "kernels.hpp"

namespace skyloop::simd::detail {

void hamming_neon(const Descriptor256& query, const Descriptor256* db, std::size_t n,
                  std::uint16_t* out) {
  const auto* qb = reinterpret_cast<const std::uint8_t*>(query.words.data());
  const uint8x16_t q0 = vld1q_u8(qb);
  const uint8x16_t q1 = vld1q_u8(qb + 16);
  for (std::size_t i = 0; i < n; ++i) {
    const auto* db_bytes = reinterpret_cast<const std::uint8_t*>(db[i].words.data());
    const uint8x16_t c0 = vcntq_u8(veorq_u8(q0, vld1q_u8(db_bytes)));
    const uint8x16_t c1 = vcntq_u8(veorq_u8(q1, vld1q_u8(db_bytes + 16)));
    out[i] = static_cast<std::uint16_t>(vaddlvq_u8(c0) + vaddlvq_u8(c1));
  }
}

void prescreen_neon(const std::uint8_t* center, std::ptrdiff_t stride, std::size_t count,
                    std::uint8_t threshold, std::uint8_t* out) {
  const uint8x16_t t = vdupq_n_u8(threshold);
  const uint8x16_t one = vdupq_n_u8(1);
  std::size_t i = 0;
  for (; i + 16 <= count; i += 16) {
    const std::uint8_t* p = center + i;
    const uint8x16_t c = vld1q_u8(p);
    const uint8x16_t hi = vqaddq_u8(c, t);
    const uint8x16_t lo = vqsubq_u8(c, t);
    const uint8x16_t px[4] = {vld1q_u8(p - 3 * stride), vld1q_u8(p + 3), vld1q_u8(p + 3 * stride),
                              vld1q_u8(p - 3)};
    uint8x16_t bright = vdupq_n_u8(0);
    uint8x16_t dark = vdupq_n_u8(0);
    for (const uint8x16_t& v : px) {
      bright = vaddq_u8(bright, vandq_u8(vcgtq_u8(v, hi), one));
      dark = vaddq_u8(dark, vandq_u8(vcltq_u8(v, lo), one));
    }
    const uint8x16_t b_ok = vandq_u8(vcgtq_u8(bright, one), one);
    const uint8x16_t d_ok = vandq_u8(vcgtq_u8(dark, one), vdupq_n_u8(2));
    vst1q_u8(out + i, vorrq_u8(b_ok, d_ok));
  }
  if (i < count) prescreen_scalar(center + i, stride, count - i, threshold, out + i);
}

}  // namespace skyloop::simd::detail
