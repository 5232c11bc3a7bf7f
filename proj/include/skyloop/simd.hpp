#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

// Data-parallel inner loops used by the feature front end. Each kernel has a
// scalar reference implementation plus vector variants; the variant is picked
// once at runtime from CPU capabilities (override with SKYLOOP_SIMD=scalar).
// All variants must produce bit-identical output.
namespace skyloop::simd {

struct alignas(32) Descriptor256 {
  std::array<std::uint64_t, 4> words{};

  bool bit(int i) const { return (words[i >> 6] >> (i & 63)) & 1u; }
  void set(int i) { words[i >> 6] |= std::uint64_t{1} << (i & 63); }
  friend bool operator==(const Descriptor256&, const Descriptor256&) = default;
};

enum class Backend { Scalar, Avx2, Neon };

std::string_view name(Backend b);

/// Backends compiled in and supported by this CPU, scalar first.
std::vector<Backend> available_backends();

/// The backend used by the dispatched entry points.
Backend active_backend();

/// out[i] = popcount(query ^ db[i]).
void hamming_distances(const Descriptor256& query, std::span<const Descriptor256> db,
                       std::span<std::uint16_t> out);
void hamming_distances(Backend backend, const Descriptor256& query,
                       std::span<const Descriptor256> db, std::span<std::uint16_t> out);

int hamming_distance(const Descriptor256& a, const Descriptor256& b);

/// FAST compass pre-screen over `count` consecutive pixels starting at
/// `center`. The four compass pixels at radius 3 (up, right, down, left) are
/// compared against center +/- threshold; bit 0 of out[i] is set when at
/// least two are strictly brighter, bit 1 when at least two are strictly
/// darker. Any 9-pixel contiguous arc of the 16-pixel circle contains two
/// compass pixels, so a pixel with out[i] == 0 cannot be a corner.
/// The caller guarantees 3 pixels of valid memory on every side.
void fast_prescreen_row(const std::uint8_t* center, std::ptrdiff_t stride, std::size_t count,
                        std::uint8_t threshold, std::uint8_t* out);
void fast_prescreen_row(Backend backend, const std::uint8_t* center, std::ptrdiff_t stride,
                        std::size_t count, std::uint8_t threshold, std::uint8_t* out);

}  // namespace skyloop::simd
