#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "doctest.h"
#include "skyloop/features.hpp"
#include "skyloop/rng.hpp"

using namespace skyloop;
using namespace skyloop::features;

namespace {

constexpr double kPi = std::numbers::pi;

GrayImage square_image(int size, int lo, int hi, int offset_x = 0, int offset_y = 0) {
  GrayImage img(size, size, 50);
  for (int y = lo + offset_y; y < hi + offset_y; ++y) {
    for (int x = lo + offset_x; x < hi + offset_x; ++x) img.at(x, y) = 200;
  }
  return img;
}

// Plain 9-of-16 arc check over the radius-3 Bresenham circle.
bool brute_segment(const GrayImage& img, int x, int y, int t) {
  static const int dx[16] = {0, 1, 2, 3, 3, 3, 2, 1, 0, -1, -2, -3, -3, -3, -2, -1};
  static const int dy[16] = {-3, -3, -2, -1, 0, 1, 2, 3, 3, 3, 2, 1, 0, -1, -2, -3};
  const int c = img.at(x, y);
  for (int sign : {1, -1}) {
    int run = 0;
    for (int i = 0; i < 32; ++i) {
      const int p = img.at(x + dx[i % 16], y + dy[i % 16]);
      const bool hit = sign > 0 ? p > c + t : p < c - t;
      run = hit ? run + 1 : 0;
      if (run >= 9) return true;
    }
  }
  return false;
}

GrayImage random_texture(Rng& rng, int w, int h) {
  GrayImage img(w, h);
  // Blocky noise so the binomial smoothing keeps structure.
  for (int by = 0; by < h; by += 3) {
    for (int bx = 0; bx < w; bx += 3) {
      const auto v = static_cast<std::uint8_t>(rng.below(256));
      for (int y = by; y < std::min(by + 3, h); ++y) {
        for (int x = bx; x < std::min(bx + 3, w); ++x) img.at(x, y) = v;
      }
    }
  }
  return img;
}

// new(c - dy, c + dx) = old(c + dx, c + dy): a quarter turn about the centre.
GrayImage rotate_quarter(const GrayImage& img) {
  const int n = img.width();
  GrayImage out(n, n);
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) out.at(n - 1 - y, x) = img.at(x, y);
  }
  return out;
}

}  // namespace

TEST_CASE("pyramid sizes") {
  GrayImage img(640, 480, 10);
  CHECK(build_pyramid(img, 1, 2.0).size() == 1);
  CHECK(build_pyramid(img, 1, 2.0)[0] == img);
  const auto p = build_pyramid(img, 3, 2.0);
  REQUIRE(p.size() == 3);
  CHECK(p[1].width() == 320);
  CHECK(p[1].height() == 240);
  CHECK(p[2].width() == 160);
  CHECK(p[2].height() == 120);
  try {
    build_pyramid(GrayImage(40, 40), 3, 2.0);
    FAIL("expected ImageTooSmall");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ImageTooSmall);
  }
  CHECK_THROWS_AS(build_pyramid(img, 0, 2.0), Error);
  CHECK_THROWS_AS(build_pyramid(img, 2, 1.0), Error);
}

TEST_CASE("detect on flat image is empty") {
  CHECK(detect(GrayImage(200, 200, 128), DetectorParams{}).empty());
}

TEST_CASE("segment test agrees with brute force") {
  Rng rng(5);
  const GrayImage tex = random_texture(rng, 80, 80);
  const GrayImage sq = square_image(80, 20, 60);
  for (const GrayImage* img : {&tex, &sq}) {
    for (int y = 3; y < 77; ++y) {
      for (int x = 3; x < 77; ++x) {
        REQUIRE(segment_test(*img, x, y, 20) == brute_segment(*img, x, y, 20));
      }
    }
  }
}

TEST_CASE("square corners") {
  const GrayImage img = square_image(200, 60, 140);
  DetectorParams params;
  params.subpixel = false;
  const auto kps = detect(img, params);
  REQUIRE(!kps.empty());
  for (const auto& k : kps) CHECK(brute_segment(img, static_cast<int>(k.x), static_cast<int>(k.y), 20));
  const double corners[4][2] = {{60, 60}, {139, 60}, {60, 139}, {139, 139}};
  for (const auto& c : corners) {
    bool near = false;
    for (const auto& k : kps) near |= std::hypot(k.x - c[0], k.y - c[1]) <= 1.0;
    CHECK(near);
  }
  for (const auto& k : kps) {
    double best = 1e9;
    for (const auto& c : corners) best = std::min(best, std::hypot(k.x - c[0], k.y - c[1]));
    CHECK(best <= 1.5);
  }

  params.grid_cols = 2;
  params.grid_rows = 2;
  params.max_per_cell = 1;
  CHECK(detect(img, params).size() == 4);
  params.subpixel = true;
  const auto refined = detect(img, params);
  REQUIRE(refined.size() == 4);
  for (const auto& k : refined) {
    CHECK(k.x >= 0.0);
    CHECK(k.x < 200.0);
  }
}

TEST_CASE("detect is ordered and translation equivariant") {
  Rng rng(6);
  const GrayImage base = random_texture(rng, 220, 220);
  GrayImage shifted(220, 220);
  const int dx = 7;
  const int dy = 4;
  for (int y = 0; y < 220; ++y) {
    for (int x = 0; x < 220; ++x) {
      shifted.at(x, y) = base.at(std::clamp(x - dx, 0, 219), std::clamp(y - dy, 0, 219));
    }
  }
  DetectorParams params;
  params.grid_cols = 1;
  params.grid_rows = 1;
  params.max_per_cell = 100000;
  params.max_keypoints = 0;
  params.subpixel = false;
  const auto a = detect(base, params);
  const auto b = detect(shifted, params);
  std::set<std::pair<int, int>> sb;
  for (const auto& k : b) sb.emplace(static_cast<int>(k.x), static_cast<int>(k.y));
  int checked = 0;
  for (const auto& k : a) {
    const int x = static_cast<int>(k.x) + dx;
    const int y = static_cast<int>(k.y) + dy;
    if (x < 30 || y < 30 || x > 190 || y > 190) continue;
    CHECK(sb.count({x, y}) == 1);
    ++checked;
  }
  CHECK(checked > 20);

  const auto sorted = detect(base, DetectorParams{});
  for (std::size_t i = 1; i < sorted.size(); ++i) {
    auto cell = [](const Keypoint& k) {
      return static_cast<int>(k.y) * 8 / 220 * 8 + static_cast<int>(k.x) * 8 / 220;
    };
    const int ca = cell(sorted[i - 1]);
    const int cb = cell(sorted[i]);
    CHECK(ca <= cb);
    if (ca == cb) CHECK(sorted[i - 1].response >= sorted[i].response);
  }
  CHECK(sorted.size() <= 1000);
}

TEST_CASE("orientation from moments") {
  GrayImage sym(64, 64, 0);
  for (int y = 0; y < 64; ++y) {
    for (int x = 0; x < 64; ++x) {
      if (std::hypot(x - 32, y - 32) < 6) sym.at(x, y) = 255;
    }
  }
  Keypoint kp{32, 32};
  CHECK(compute_orientation(sym, kp) == 0.0);

  GrayImage px(64, 64, 0);
  GrayImage py(64, 64, 0);
  for (int y = 0; y < 64; ++y) {
    for (int x = 0; x < 64; ++x) {
      if (x > 32) px.at(x, y) = 200;
      if (y > 32) py.at(x, y) = 200;
    }
  }
  CHECK(std::abs(compute_orientation(px, kp)) < 1e-6);
  CHECK(std::abs(compute_orientation(py, kp) - kPi / 2) < 1e-6);

  // Oracle: moments summed directly.
  Rng rng(7);
  const GrayImage tex = random_texture(rng, 64, 64);
  double m01 = 0.0;
  double m10 = 0.0;
  for (int v = -15; v <= 15; ++v) {
    for (int u = -15; u <= 15; ++u) {
      if (u * u + v * v > 15 * 15) continue;
      m10 += u * tex.at(32 + u, 32 + v);
      m01 += v * tex.at(32 + u, 32 + v);
    }
  }
  double expected = std::atan2(m01, m10);
  if (expected < 0) expected += 2 * kPi;
  CHECK(compute_orientation(tex, kp) == doctest::Approx(expected).epsilon(1e-12));

  try {
    compute_orientation(tex, Keypoint{5, 32});
    FAIL("expected PatchOutOfBounds");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::PatchOutOfBounds);
  }
}

TEST_CASE("describe determinism, rotation and drops") {
  Rng rng(8);
  const GrayImage tex = random_texture(rng, 101, 101);
  Keypoint kp{50, 50};
  kp.orientation = compute_orientation(tex, kp);
  const std::vector<Keypoint> kps{kp, Keypoint{3, 3}};
  const auto a = describe(tex, kps);
  const auto b = describe(tex, kps);
  REQUIRE(a.descriptors.size() == 1);
  CHECK(a.keypoints.size() == 1);
  CHECK(a.descriptors == b.descriptors);
  CHECK(a.keypoints[0].x == 50.0);

  const GrayImage rot = rotate_quarter(tex);
  Keypoint rk{50, 50};
  rk.orientation = compute_orientation(rot, rk);
  CHECK(std::abs(std::remainder(rk.orientation - kp.orientation - kPi / 2, 2 * kPi)) < 1e-9);
  const auto r = describe(rot, std::vector<Keypoint>{rk});
  REQUIRE(r.descriptors.size() == 1);
  CHECK(simd::hamming_distance(a.descriptors[0], r.descriptors[0]) <= 40);

  int total = 0;
  for (int i = 0; i < 100; ++i) {
    const GrayImage p = random_texture(rng, 41, 41);
    const GrayImage q = random_texture(rng, 41, 41);
    const auto dp = describe(p, std::vector<Keypoint>{Keypoint{20, 20}});
    const auto dq = describe(q, std::vector<Keypoint>{Keypoint{20, 20}});
    REQUIRE(dp.descriptors.size() == 1);
    REQUIRE(dq.descriptors.size() == 1);
    total += simd::hamming_distance(dp.descriptors[0], dq.descriptors[0]);
  }
  CHECK(total / 100.0 > 64.0);

  CHECK(BriefPattern(42).pairs().size() == 256);
  for (const auto& pr : BriefPattern(42).pairs()) {
    CHECK(std::hypot(pr.x1, pr.y1) <= 15.0);
    CHECK(std::hypot(pr.x2, pr.y2) <= 15.0);
  }
}

TEST_CASE("match examples") {
  BinaryDescriptor d1;
  BinaryDescriptor d2;
  for (int i = 0; i < 100; ++i) d2.set(i);
  const std::vector<BinaryDescriptor> ab{d1, d2};
  const auto m = match(ab, ab, 50, 0.8);
  REQUIRE(m.size() == 2);
  CHECK(m[0] == Match{0, 0, 0});
  CHECK(m[1] == Match{1, 1, 0});
  CHECK(match(std::vector<BinaryDescriptor>{d1}, {}, 50, 0.8).empty());
  CHECK(match(std::vector<BinaryDescriptor>{d1}, std::vector<BinaryDescriptor>{d1, d1}, 50, 0.8).empty());
}

TEST_CASE("match is one-to-one and bounded") {
  Rng rng(9);
  std::vector<BinaryDescriptor> a(200);
  std::vector<BinaryDescriptor> b(200);
  for (auto& d : a) {
    for (auto& w : d.words) w = rng.next_u64();
  }
  for (std::size_t i = 0; i < b.size(); ++i) {
    b[i] = a[(i * 7) % a.size()];
    for (int k = 0; k < 12; ++k) {
      const int bit = static_cast<int>(rng.below(256));
      b[i].words[bit >> 6] ^= std::uint64_t{1} << (bit & 63);
    }
  }
  const auto m = match(a, b, 60, 0.8);
  CHECK(m.size() > 150);
  std::set<int> sa;
  std::set<int> sb;
  for (const auto& x : m) {
    CHECK(sa.insert(x.index_a).second);
    CHECK(sb.insert(x.index_b).second);
    CHECK(x.distance <= 60);
    CHECK(x.distance == simd::hamming_distance(a[x.index_a], b[x.index_b]));
    CHECK(static_cast<std::size_t>(x.index_a) == (x.index_b * 7) % a.size());
  }
}

TEST_CASE("window matching") {
  std::vector<Keypoint> kps{{10, 10}, {12, 10}, {100, 100}};
  std::vector<BinaryDescriptor> desc(3);
  desc[1].set(0);
  for (int i = 0; i < 128; ++i) desc[2].set(i);
  KeypointGrid grid(kps, 200, 200);
  CHECK(grid.within(11, 10, 5) == std::vector<int>{0, 1});
  CHECK(grid.within(100, 100, 1) == std::vector<int>{2});
  std::vector<BinaryDescriptor> query{desc[1], desc[2]};
  std::vector<geom::Vec2> pred{{11, 11}, {150, 150}};
  WindowMatchParams p;
  p.ratio = 1.0;
  const auto idx = match_in_windows(query, pred, kps, desc, grid, p);
  CHECK(idx == std::vector<int>{1, -1});
}
