#include <immintrin.h>

#include "kernels.hpp"

namespace skyloop::simd::detail {

namespace {

inline __m256i popcount_bytes(__m256i v) {
  const __m256i lut = _mm256_setr_epi8(0, 1, 1, 2, 1, 2, 2, 3, 1, 2, 2, 3, 2, 3, 3, 4,  //
                                       0, 1, 1, 2, 1, 2, 2, 3, 1, 2, 2, 3, 2, 3, 3, 4);
  const __m256i low_mask = _mm256_set1_epi8(0x0f);
  const __m256i lo = _mm256_and_si256(v, low_mask);
  const __m256i hi = _mm256_and_si256(_mm256_srli_epi16(v, 4), low_mask);
  return _mm256_add_epi8(_mm256_shuffle_epi8(lut, lo), _mm256_shuffle_epi8(lut, hi));
}

// Bytes where a > b (unsigned).
inline __m256i gt_u8(__m256i a, __m256i b) {
  const __m256i diff = _mm256_subs_epu8(a, b);
  return _mm256_xor_si256(_mm256_cmpeq_epi8(diff, _mm256_setzero_si256()),
                          _mm256_set1_epi8(static_cast<char>(0xff)));
}

}  // namespace

void hamming_avx2(const Descriptor256& query, const Descriptor256* db, std::size_t n,
                  std::uint16_t* out) {
  const __m256i q = _mm256_load_si256(reinterpret_cast<const __m256i*>(query.words.data()));
  for (std::size_t i = 0; i < n; ++i) {
    const __m256i d = _mm256_load_si256(reinterpret_cast<const __m256i*>(db[i].words.data()));
    const __m256i counts = popcount_bytes(_mm256_xor_si256(q, d));
    const __m256i sums = _mm256_sad_epu8(counts, _mm256_setzero_si256());
    const __m128i s = _mm_add_epi64(_mm256_castsi256_si128(sums), _mm256_extracti128_si256(sums, 1));
    out[i] = static_cast<std::uint16_t>(_mm_cvtsi128_si64(s) + _mm_extract_epi64(s, 1));
  }
}

void prescreen_avx2(const std::uint8_t* center, std::ptrdiff_t stride, std::size_t count,
                    std::uint8_t threshold, std::uint8_t* out) {
  const __m256i t = _mm256_set1_epi8(static_cast<char>(threshold));
  const __m256i one = _mm256_set1_epi8(1);
  std::size_t i = 0;
  for (; i + 32 <= count; i += 32) {
    const std::uint8_t* p = center + i;
    const __m256i c = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(p));
    const __m256i hi = _mm256_adds_epu8(c, t);
    const __m256i lo = _mm256_subs_epu8(c, t);
    const __m256i px[4] = {
        _mm256_loadu_si256(reinterpret_cast<const __m256i*>(p - 3 * stride)),
        _mm256_loadu_si256(reinterpret_cast<const __m256i*>(p + 3)),
        _mm256_loadu_si256(reinterpret_cast<const __m256i*>(p + 3 * stride)),
        _mm256_loadu_si256(reinterpret_cast<const __m256i*>(p - 3)),
    };
    __m256i bright = _mm256_setzero_si256();
    __m256i dark = _mm256_setzero_si256();
    for (const __m256i& v : px) {
      // Saturated hi == 255 admits nothing brighter, saturated lo == 0
      // admits nothing darker, matching the scalar int arithmetic.
      bright = _mm256_add_epi8(bright, _mm256_and_si256(gt_u8(v, hi), one));
      dark = _mm256_add_epi8(dark, _mm256_and_si256(gt_u8(lo, v), one));
    }
    const __m256i b_ok = _mm256_and_si256(_mm256_cmpgt_epi8(bright, one), one);
    const __m256i d_ok = _mm256_and_si256(_mm256_cmpgt_epi8(dark, one), _mm256_set1_epi8(2));
    _mm256_storeu_si256(reinterpret_cast<__m256i*>(out + i), _mm256_or_si256(b_ok, d_ok));
  }
  if (i < count) prescreen_scalar(center + i, stride, count - i, threshold, out + i);
}

}  // namespace skyloop::simd::detail
