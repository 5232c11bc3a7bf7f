#pragma once

#include "skyloop/simd.hpp"

namespace skyloop::simd::detail {

void hamming_scalar(const Descriptor256& query, const Descriptor256* db, std::size_t n,
                    std::uint16_t* out);
void prescreen_scalar(const std::uint8_t* center, std::ptrdiff_t stride, std::size_t count,
                      std::uint8_t threshold, std::uint8_t* out);

#if defined(SKYLOOP_HAVE_AVX2)
void hamming_avx2(const Descriptor256& query, const Descriptor256* db, std::size_t n,
                  std::uint16_t* out);
void prescreen_avx2(const std::uint8_t* center, std::ptrdiff_t stride, std::size_t count,
                    std::uint8_t threshold, std::uint8_t* out);
#endif

#if defined(SKYLOOP_HAVE_NEON)
void hamming_neon(const Descriptor256& query, const Descriptor256* db, std::size_t n,
                  std::uint16_t* out);
void prescreen_neon(const std::uint8_t* center, std::ptrdiff_t stride, std::size_t count,
                    std::uint8_t threshold, std::uint8_t* out);
#endif

}  // namespace skyloop::simd::detail
