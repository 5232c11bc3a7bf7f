#include <algorithm>
#include <cstdlib>
#include <string>

#include "kernels.hpp"

namespace skyloop::simd {

namespace {

bool cpu_supports(Backend b) {
  switch (b) {
    case Backend::Scalar:
      return true;
    case Backend::Avx2:
#if defined(SKYLOOP_HAVE_AVX2)
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("popcnt");
#else
      return false;
#endif
    case Backend::Neon:
#if defined(SKYLOOP_HAVE_NEON)
      return true;
#else
      return false;
#endif
  }
  return false;
}

Backend detect() {
  if (const char* env = std::getenv("SKYLOOP_SIMD")) {
    const std::string v(env);
    if (v == "scalar") return Backend::Scalar;
    if (v == "avx2" && cpu_supports(Backend::Avx2)) return Backend::Avx2;
    if (v == "neon" && cpu_supports(Backend::Neon)) return Backend::Neon;
  }
  if (cpu_supports(Backend::Avx2)) return Backend::Avx2;
  if (cpu_supports(Backend::Neon)) return Backend::Neon;
  return Backend::Scalar;
}

}  // namespace

std::string_view name(Backend b) {
  switch (b) {
    case Backend::Scalar: return "scalar";
    case Backend::Avx2: return "avx2";
    case Backend::Neon: return "neon";
  }
  return "unknown";
}

std::vector<Backend> available_backends() {
  std::vector<Backend> out;
  for (Backend b : {Backend::Scalar, Backend::Avx2, Backend::Neon}) {
    if (cpu_supports(b)) out.push_back(b);
  }
  return out;
}

Backend active_backend() {
  static const Backend backend = detect();
  return backend;
}

void hamming_distances(Backend backend, const Descriptor256& query,
                       std::span<const Descriptor256> db, std::span<std::uint16_t> out) {
  const std::size_t n = std::min(db.size(), out.size());
  switch (backend) {
#if defined(SKYLOOP_HAVE_AVX2)
    case Backend::Avx2:
      detail::hamming_avx2(query, db.data(), n, out.data());
      return;
#endif
#if defined(SKYLOOP_HAVE_NEON)
    case Backend::Neon:
      detail::hamming_neon(query, db.data(), n, out.data());
      return;
#endif
    default:
      detail::hamming_scalar(query, db.data(), n, out.data());
  }
}

void hamming_distances(const Descriptor256& query, std::span<const Descriptor256> db,
                       std::span<std::uint16_t> out) {
  hamming_distances(active_backend(), query, db, out);
}

int hamming_distance(const Descriptor256& a, const Descriptor256& b) {
  std::uint16_t d = 0;
  detail::hamming_scalar(a, &b, 1, &d);
  return d;
}

void fast_prescreen_row(Backend backend, const std::uint8_t* center, std::ptrdiff_t stride,
                        std::size_t count, std::uint8_t threshold, std::uint8_t* out) {
  switch (backend) {
#if defined(SKYLOOP_HAVE_AVX2)
    case Backend::Avx2:
      detail::prescreen_avx2(center, stride, count, threshold, out);
      return;
#endif
#if defined(SKYLOOP_HAVE_NEON)
    case Backend::Neon:
      detail::prescreen_neon(center, stride, count, threshold, out);
      return;
#endif
    default:
      detail::prescreen_scalar(center, stride, count, threshold, out);
  }
}

void fast_prescreen_row(const std::uint8_t* center, std::ptrdiff_t stride, std::size_t count,
                        std::uint8_t threshold, std::uint8_t* out) {
  fast_prescreen_row(active_backend(), center, stride, count, threshold, out);
}

}  // namespace skyloop::simd
