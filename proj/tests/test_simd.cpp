#include <vector>

#include "doctest.h"
#include "skyloop/rng.hpp"
#include "skyloop/simd.hpp"

using namespace skyloop;
using namespace skyloop::simd;

namespace {

int naive_popcount(const Descriptor256& a, const Descriptor256& b) {
  int n = 0;
  for (int i = 0; i < 256; ++i) n += a.bit(i) != b.bit(i);
  return n;
}

}  // namespace

TEST_CASE("scalar backend is always available") {
  const auto b = available_backends();
  REQUIRE(!b.empty());
  CHECK(b.front() == Backend::Scalar);
  CHECK(name(Backend::Scalar) == "scalar");
  MESSAGE("active backend: " << name(active_backend()));
}

TEST_CASE("hamming kernels agree with bitwise oracle") {
  Rng rng(11);
  for (std::size_t n : {0u, 1u, 3u, 4u, 7u, 8u, 33u, 1000u}) {
    std::vector<Descriptor256> db(n);
    for (auto& d : db) {
      for (auto& w : d.words) w = rng.next_u64();
    }
    Descriptor256 q;
    for (auto& w : q.words) w = rng.next_u64();
    std::vector<std::uint16_t> expected(n);
    for (std::size_t i = 0; i < n; ++i) expected[i] = static_cast<std::uint16_t>(naive_popcount(q, db[i]));
    for (Backend b : available_backends()) {
      std::vector<std::uint16_t> out(n, 999);
      hamming_distances(b, q, db, out);
      CHECK_MESSAGE(out == expected, name(b));
    }
    std::vector<std::uint16_t> out(n);
    hamming_distances(q, db, out);
    CHECK(out == expected);
    for (std::size_t i = 0; i < n; ++i) CHECK(hamming_distance(q, db[i]) == expected[i]);
  }
  Descriptor256 zero;
  Descriptor256 ones;
  for (auto& w : ones.words) w = ~std::uint64_t{0};
  CHECK(hamming_distance(zero, ones) == 256);
  CHECK(hamming_distance(ones, ones) == 0);
}

TEST_CASE("fast prescreen kernels agree with scalar oracle") {
  Rng rng(12);
  const int w = 131;
  const int h = 12;
  std::vector<std::uint8_t> img(static_cast<std::size_t>(w) * h);
  for (auto& p : img) p = static_cast<std::uint8_t>(rng.below(256));
  // Flat stretches exercise the equality edge.
  for (int x = 10; x < 40; ++x) img[static_cast<std::size_t>(6) * w + x] = 128;
  for (std::uint8_t t : {0, 1, 20, 90, 255}) {
    for (int y = 3; y < h - 3; ++y) {
      const std::size_t count = w - 6;
      const std::uint8_t* c = img.data() + static_cast<std::size_t>(y) * w + 3;
      std::vector<std::uint8_t> expected(count);
      for (std::size_t i = 0; i < count; ++i) {
        const int v = c[i];
        const int compass[4] = {c[i - 3 * w], c[i + 3], c[i + 3 * w], c[i - 3]};
        int bright = 0;
        int dark = 0;
        for (int p : compass) {
          bright += p > v + t;
          dark += p < v - t;
        }
        expected[i] = static_cast<std::uint8_t>((bright >= 2 ? 1 : 0) | (dark >= 2 ? 2 : 0));
      }
      for (Backend b : available_backends()) {
        std::vector<std::uint8_t> out(count, 0xff);
        fast_prescreen_row(b, c, w, count, t, out.data());
        CHECK_MESSAGE(out == expected, name(b));
      }
    }
  }
}
