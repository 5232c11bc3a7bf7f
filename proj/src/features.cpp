#include "skyloop/features.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>

#include "skyloop/rng.hpp"

namespace skyloop::features {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Bresenham circle of radius 3, clockwise from 12 o'clock. Indices 0, 4, 8,
// 12 are the compass pixels used by the pre-screen kernel.
constexpr std::array<std::array<int, 2>, 16> kCircle = {{{0, -3}, {1, -3}, {2, -2}, {3, -1},
                                                         {3, 0}, {3, 1}, {2, 2}, {1, 3},
                                                         {0, 3}, {-1, 3}, {-2, 2}, {-3, 1},
                                                         {-3, 0}, {-3, -1}, {-2, -2}, {-1, -3}}};

// Returns +1 for a bright corner, -1 for a dark one, 0 otherwise; writes the
// corner score (summed excess over the threshold on the winning side).
int classify(const GrayImage& img, int x, int y, int threshold, double* score) {
  const int c = img.at(x, y);
  std::array<int, 16> state{};
  int bright_excess = 0;
  int dark_excess = 0;
  for (int i = 0; i < 16; ++i) {
    const int v = img.at(x + kCircle[i][0], y + kCircle[i][1]);
    if (v > c + threshold) {
      state[i] = 1;
      bright_excess += v - c - threshold;
    } else if (v < c - threshold) {
      state[i] = -1;
      dark_excess += c - threshold - v;
    }
  }
  int best_sign = 0;
  for (int sign : {1, -1}) {
    int run = 0;
    for (int i = 0; i < 32 && run < 9; ++i) {
      run = state[i & 15] == sign ? run + 1 : 0;
    }
    if (run >= 9) {
      best_sign = sign;
      break;
    }
  }
  if (score != nullptr) {
    *score = best_sign > 0 ? bright_excess : (best_sign < 0 ? dark_excess : 0);
  }
  return best_sign;
}

// Offset of the vertex of a parabola through (-1, a), (0, b), (1, c).
double parabola_peak(double a, double b, double c) {
  const double denom = a - 2.0 * b + c;
  if (denom == 0.0) return 0.0;
  return std::clamp(0.5 * (a - c) / denom, -0.5, 0.5);
}

void refine_subpixel(const GrayImage& img, Keypoint& kp) {
  const int x = static_cast<int>(kp.x);
  const int y = static_cast<int>(kp.y);
  const int c = img.at(x, y);
  bool is_max = true;
  bool is_min = true;
  for (int dy = -1; dy <= 1; ++dy) {
    for (int dx = -1; dx <= 1; ++dx) {
      if (dx == 0 && dy == 0) continue;
      const int v = img.at(x + dx, y + dy);
      is_max = is_max && c > v;
      is_min = is_min && c < v;
    }
  }
  if (!is_max && !is_min) return;
  kp.x += parabola_peak(img.at(x - 1, y), c, img.at(x + 1, y));
  kp.y += parabola_peak(img.at(x, y - 1), c, img.at(x, y + 1));
}

GrayImage smooth_binomial(const GrayImage& img) {
  static constexpr int kTaps[5] = {1, 4, 6, 4, 1};
  const int w = img.width();
  const int h = img.height();
  std::vector<int> tmp(static_cast<std::size_t>(w) * h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      int s = 0;
      for (int k = -2; k <= 2; ++k) s += kTaps[k + 2] * img.at(std::clamp(x + k, 0, w - 1), y);
      tmp[static_cast<std::size_t>(y) * w + x] = s;
    }
  }
  GrayImage out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      int s = 0;
      for (int k = -2; k <= 2; ++k) {
        s += kTaps[k + 2] * tmp[static_cast<std::size_t>(std::clamp(y + k, 0, h - 1)) * w + x];
      }
      out.at(x, y) = static_cast<std::uint8_t>((s + 128) >> 8);
    }
  }
  return out;
}

}  // namespace

std::vector<GrayImage> build_pyramid(const GrayImage& img, int levels, double scale_factor) {
  if (levels < 1) throw Error(ErrorCode::InvalidArgument, "pyramid needs at least one level");
  if (!(scale_factor > 1.0)) throw Error(ErrorCode::InvalidArgument, "scale factor must exceed 1");
  std::vector<std::pair<int, int>> dims;
  for (int k = 0; k < levels; ++k) {
    const double s = std::pow(scale_factor, k);
    const int w = static_cast<int>(std::floor(img.width() / s));
    const int h = static_cast<int>(std::floor(img.height() / s));
    if (w < 32 || h < 32) {
      throw Error(ErrorCode::ImageTooSmall, "pyramid level " + std::to_string(k) + " below 32x32");
    }
    dims.emplace_back(w, h);
  }
  std::vector<GrayImage> out;
  out.push_back(img);
  for (int k = 1; k < levels; ++k) {
    const double s = std::pow(scale_factor, k);
    const auto [w, h] = dims[k];
    GrayImage level(w, h);
    for (int y = 0; y < h; ++y) {
      const double sy = std::clamp((y + 0.5) * s - 0.5, 0.0, img.height() - 1.0);
      const int y0 = std::min(static_cast<int>(sy), img.height() - 2);
      const double fy = sy - y0;
      for (int x = 0; x < w; ++x) {
        const double sx = std::clamp((x + 0.5) * s - 0.5, 0.0, img.width() - 1.0);
        const int x0 = std::min(static_cast<int>(sx), img.width() - 2);
        const double fx = sx - x0;
        const double v = (1 - fy) * ((1 - fx) * img.at(x0, y0) + fx * img.at(x0 + 1, y0)) +
                         fy * ((1 - fx) * img.at(x0, y0 + 1) + fx * img.at(x0 + 1, y0 + 1));
        level.at(x, y) = static_cast<std::uint8_t>(std::lround(v));
      }
    }
    out.push_back(std::move(level));
  }
  return out;
}

bool segment_test(const GrayImage& img, int x, int y, int threshold) {
  if (x < 3 || y < 3 || x >= img.width() - 3 || y >= img.height() - 3) return false;
  return classify(img, x, y, threshold, nullptr) != 0;
}

std::vector<Keypoint> detect(const GrayImage& img, const DetectorParams& params) {
  if (params.threshold <= 0 || params.threshold > 255) {
    throw Error(ErrorCode::InvalidArgument, "detection threshold must be in (0, 255]");
  }
  if (params.grid_cols < 1 || params.grid_rows < 1 || params.max_per_cell < 1) {
    throw Error(ErrorCode::InvalidArgument, "grid must have at least one cell and slot");
  }
  const int w = img.width();
  const int h = img.height();
  const int margin = std::max(params.border, 3);
  if (w <= 2 * margin || h <= 2 * margin) return {};

  // Score map with a one-pixel frame of zeros for the suppression pass.
  std::vector<double> score(static_cast<std::size_t>(w) * h, 0.0);
  std::vector<std::uint8_t> screen(static_cast<std::size_t>(w - 2 * margin));
  const auto threshold = static_cast<std::uint8_t>(params.threshold);
  for (int y = margin; y < h - margin; ++y) {
    simd::fast_prescreen_row(img.row(y) + margin, w, screen.size(), threshold, screen.data());
    for (std::size_t i = 0; i < screen.size(); ++i) {
      if (screen[i] == 0) continue;
      const int x = margin + static_cast<int>(i);
      double s = 0.0;
      if (classify(img, x, y, params.threshold, &s) != 0) {
        score[static_cast<std::size_t>(y) * w + x] = s;
      }
    }
  }

  std::vector<Keypoint> corners;
  for (int y = margin; y < h - margin; ++y) {
    for (int x = margin; x < w - margin; ++x) {
      const double s = score[static_cast<std::size_t>(y) * w + x];
      if (s <= 0.0) continue;
      bool keep = true;
      // Strictly greater than earlier neighbours, >= later ones: plateaus keep
      // their first pixel in raster order.
      for (int dy = -1; dy <= 1 && keep; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          if (dx == 0 && dy == 0) continue;
          const double n = score[static_cast<std::size_t>(y + dy) * w + (x + dx)];
          const bool earlier = dy < 0 || (dy == 0 && dx < 0);
          if (earlier ? n >= s : n > s) {
            keep = false;
            break;
          }
        }
      }
      if (!keep) continue;
      Keypoint kp;
      kp.x = x;
      kp.y = y;
      kp.response = s;
      if (params.subpixel) refine_subpixel(img, kp);
      corners.push_back(kp);
    }
  }

  const auto cell_of = [&](const Keypoint& kp) {
    const int cx = std::min(static_cast<int>(kp.x) * params.grid_cols / w, params.grid_cols - 1);
    const int cy = std::min(static_cast<int>(kp.y) * params.grid_rows / h, params.grid_rows - 1);
    return std::pair{cy, cx};
  };
  const auto stronger = [](const Keypoint& a, const Keypoint& b) {
    if (a.response != b.response) return a.response > b.response;
    if (a.y != b.y) return a.y < b.y;
    return a.x < b.x;
  };

  std::vector<std::vector<Keypoint>> cells(static_cast<std::size_t>(params.grid_cols) * params.grid_rows);
  for (const Keypoint& kp : corners) {
    const auto [cy, cx] = cell_of(kp);
    cells[static_cast<std::size_t>(cy) * params.grid_cols + cx].push_back(kp);
  }
  std::vector<Keypoint> kept;
  for (auto& cell : cells) {
    std::sort(cell.begin(), cell.end(), stronger);
    if (static_cast<int>(cell.size()) > params.max_per_cell) cell.resize(params.max_per_cell);
    kept.insert(kept.end(), cell.begin(), cell.end());
  }
  if (params.max_keypoints > 0 && static_cast<int>(kept.size()) > params.max_keypoints) {
    std::nth_element(kept.begin(), kept.begin() + params.max_keypoints, kept.end(), stronger);
    kept.resize(params.max_keypoints);
  }
  std::sort(kept.begin(), kept.end(), [&](const Keypoint& a, const Keypoint& b) {
    const auto ca = cell_of(a);
    const auto cb = cell_of(b);
    if (ca != cb) return ca < cb;
    return stronger(a, b);
  });
  return kept;
}

double compute_orientation(const GrayImage& img, const Keypoint& kp, int patch_radius) {
  const int cx = static_cast<int>(std::lround(kp.x));
  const int cy = static_cast<int>(std::lround(kp.y));
  if (cx - patch_radius < 0 || cy - patch_radius < 0 || cx + patch_radius >= img.width() ||
      cy + patch_radius >= img.height()) {
    throw Error(ErrorCode::PatchOutOfBounds, "orientation patch exceeds the image");
  }
  long long m10 = 0;
  long long m01 = 0;
  const int r2 = patch_radius * patch_radius;
  for (int dy = -patch_radius; dy <= patch_radius; ++dy) {
    for (int dx = -patch_radius; dx <= patch_radius; ++dx) {
      if (dx * dx + dy * dy > r2) continue;
      const int v = img.at(cx + dx, cy + dy);
      m10 += static_cast<long long>(dx) * v;
      m01 += static_cast<long long>(dy) * v;
    }
  }
  if (m10 == 0 && m01 == 0) return 0.0;
  double a = std::atan2(static_cast<double>(m01), static_cast<double>(m10));
  if (a < 0.0) a += kTwoPi;
  if (a >= kTwoPi) a = 0.0;
  return a;
}

BriefPattern::BriefPattern(std::uint64_t seed) : seed_(seed) {
  Rng rng(seed);
  // Isotropic Gaussian (sigma = patch/5) rounded to integers and kept within
  // radius 14, so any rotation rounds to an offset inside radius 15.
  const double sigma = (2 * kRadius + 1) / 5.0;
  const auto sample = [&]() {
    while (true) {
      const double x = std::round(rng.normal(0.0, sigma));
      const double y = std::round(rng.normal(0.0, sigma));
      if (x * x + y * y <= (kRadius - 1) * (kRadius - 1)) return std::pair{x, y};
    }
  };
  pairs_.reserve(kPairs);
  while (static_cast<int>(pairs_.size()) < kPairs) {
    const auto [x1, y1] = sample();
    const auto [x2, y2] = sample();
    if (x1 == x2 && y1 == y2) continue;
    pairs_.push_back({x1, y1, x2, y2});
  }
}

Described describe(const GrayImage& img, std::span<const Keypoint> kps,
                   const BriefPattern& pattern) {
  const GrayImage smooth = smooth_binomial(img);
  Described out;
  out.keypoints.reserve(kps.size());
  out.descriptors.reserve(kps.size());
  std::vector<std::array<int, 4>> offsets(pattern.pairs().size());
  for (const Keypoint& kp : kps) {
    const int cx = static_cast<int>(std::lround(kp.x));
    const int cy = static_cast<int>(std::lround(kp.y));
    const double c = std::cos(kp.orientation);
    const double s = std::sin(kp.orientation);
    bool inside = true;
    for (std::size_t i = 0; i < offsets.size() && inside; ++i) {
      const auto& p = pattern.pairs()[i];
      offsets[i] = {static_cast<int>(std::lround(c * p.x1 - s * p.y1)),
                    static_cast<int>(std::lround(s * p.x1 + c * p.y1)),
                    static_cast<int>(std::lround(c * p.x2 - s * p.y2)),
                    static_cast<int>(std::lround(s * p.x2 + c * p.y2))};
      for (int j = 0; j < 4; j += 2) {
        const int x = cx + offsets[i][j];
        const int y = cy + offsets[i][j + 1];
        if (x < 0 || y < 0 || x >= img.width() || y >= img.height()) inside = false;
      }
    }
    if (!inside) continue;
    BinaryDescriptor d;
    for (std::size_t i = 0; i < offsets.size(); ++i) {
      const auto& o = offsets[i];
      if (smooth.at(cx + o[0], cy + o[1]) < smooth.at(cx + o[2], cy + o[3])) {
        d.set(static_cast<int>(i));
      }
    }
    out.keypoints.push_back(kp);
    out.descriptors.push_back(d);
  }
  return out;
}

Described describe(const GrayImage& img, std::span<const Keypoint> kps, std::uint64_t pattern_seed) {
  return describe(img, kps, BriefPattern(pattern_seed));
}

std::vector<Match> match(std::span<const BinaryDescriptor> a, std::span<const BinaryDescriptor> b,
                         int max_distance, double ratio) {
  if (!(ratio > 0.0 && ratio < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "ratio must be in (0, 1)");
  }
  std::vector<Match> out;
  if (a.empty() || b.empty()) return out;
  const std::size_t nb = b.size();
  std::vector<std::uint16_t> dist(a.size() * nb);
  for (std::size_t i = 0; i < a.size(); ++i) {
    simd::hamming_distances(a[i], b, std::span(dist.data() + i * nb, nb));
  }
  // Nearest a for every b, first index on ties.
  std::vector<int> back(nb, -1);
  for (std::size_t j = 0; j < nb; ++j) {
    int best = std::numeric_limits<int>::max();
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (dist[i * nb + j] < best) {
        best = dist[i * nb + j];
        back[j] = static_cast<int>(i);
      }
    }
  }
  for (std::size_t i = 0; i < a.size(); ++i) {
    int best = std::numeric_limits<int>::max();
    int second = std::numeric_limits<int>::max();
    int best_j = -1;
    for (std::size_t j = 0; j < nb; ++j) {
      const int d = dist[i * nb + j];
      if (d < best) {
        second = best;
        best = d;
        best_j = static_cast<int>(j);
      } else if (d < second) {
        second = d;
      }
    }
    if (best > max_distance) continue;
    if (second != std::numeric_limits<int>::max() && !(best < ratio * second)) continue;
    if (back[best_j] != static_cast<int>(i)) continue;
    out.push_back({static_cast<int>(i), best_j, best});
  }
  return out;
}

KeypointGrid::KeypointGrid(std::span<const Keypoint> kps, int width, int height, int cell)
    : kps_(kps), cell_(cell), cols_((width + cell - 1) / cell), rows_((height + cell - 1) / cell),
      buckets_(static_cast<std::size_t>(cols_) * rows_) {
  for (std::size_t i = 0; i < kps.size(); ++i) {
    const int cx = std::clamp(static_cast<int>(kps[i].x) / cell_, 0, cols_ - 1);
    const int cy = std::clamp(static_cast<int>(kps[i].y) / cell_, 0, rows_ - 1);
    buckets_[static_cast<std::size_t>(cy) * cols_ + cx].push_back(static_cast<int>(i));
  }
}

std::vector<int> KeypointGrid::within(double x, double y, double radius) const {
  std::vector<int> out;
  const int x0 = std::max(0, static_cast<int>(std::floor((x - radius) / cell_)));
  const int x1 = std::min(cols_ - 1, static_cast<int>(std::floor((x + radius) / cell_)));
  const int y0 = std::max(0, static_cast<int>(std::floor((y - radius) / cell_)));
  const int y1 = std::min(rows_ - 1, static_cast<int>(std::floor((y + radius) / cell_)));
  const double r2 = radius * radius;
  for (int cy = y0; cy <= y1; ++cy) {
    for (int cx = x0; cx <= x1; ++cx) {
      for (int i : buckets_[static_cast<std::size_t>(cy) * cols_ + cx]) {
        const double dx = kps_[i].x - x;
        const double dy = kps_[i].y - y;
        if (dx * dx + dy * dy <= r2) out.push_back(i);
      }
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<int> match_in_windows(std::span<const BinaryDescriptor> query_desc,
                                  std::span<const geom::Vec2> predicted,
                                  std::span<const Keypoint> kps,
                                  std::span<const BinaryDescriptor> kp_desc,
                                  const KeypointGrid& grid, const WindowMatchParams& params,
                                  std::span<const char> eligible) {
  std::vector<int> assignment(query_desc.size(), -1);
  std::vector<int> owner(kps.size(), -1);
  std::vector<int> owner_dist(kps.size(), std::numeric_limits<int>::max());
  std::vector<BinaryDescriptor> cand_desc;
  std::vector<std::uint16_t> cand_dist;
  for (std::size_t q = 0; q < query_desc.size(); ++q) {
    std::vector<int> cand = grid.within(predicted[q].x(), predicted[q].y(), params.radius);
    if (!eligible.empty()) {
      std::erase_if(cand, [&](int i) { return eligible[i] == 0; });
    }
    if (cand.empty()) continue;
    cand_desc.clear();
    for (int i : cand) cand_desc.push_back(kp_desc[i]);
    cand_dist.resize(cand.size());
    simd::hamming_distances(query_desc[q], cand_desc, cand_dist);
    int best = std::numeric_limits<int>::max();
    int second = std::numeric_limits<int>::max();
    int best_i = -1;
    for (std::size_t c = 0; c < cand.size(); ++c) {
      if (cand_dist[c] < best) {
        second = best;
        best = cand_dist[c];
        best_i = cand[c];
      } else if (cand_dist[c] < second) {
        second = cand_dist[c];
      }
    }
    if (best > params.max_distance) continue;
    if (params.ratio < 1.0 && second != std::numeric_limits<int>::max() &&
        !(best < params.ratio * second)) {
      continue;
    }
    if (owner[best_i] >= 0) {
      if (owner_dist[best_i] <= best) continue;
      assignment[owner[best_i]] = -1;
    }
    owner[best_i] = static_cast<int>(q);
    owner_dist[best_i] = best;
    assignment[q] = best_i;
  }
  return assignment;
}

}  // namespace skyloop::features
