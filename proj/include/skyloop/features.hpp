#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "skyloop/geom.hpp"
#include "skyloop/image.hpp"
#include "skyloop/simd.hpp"

// Oriented FAST corners with rotated BRIEF descriptors, the ORB-style front
// end of the odometry.
namespace skyloop::features {

using BinaryDescriptor = simd::Descriptor256;

struct Keypoint {
  double x = 0.0;
  double y = 0.0;
  double response = 0.0;
  double orientation = 0.0;  // radians, [0, 2*pi)
  int octave = 0;

  geom::Vec2 position() const { return {x, y}; }
};

struct Match {
  int index_a = 0;
  int index_b = 0;
  int distance = 0;

  friend bool operator==(const Match&, const Match&) = default;
};

struct DetectorParams {
  int threshold = 20;
  int grid_cols = 8;
  int grid_rows = 8;
  int max_per_cell = 25;
  int border = 19;
  /// Frame budget; 0 disables it.
  int max_keypoints = 1000;
  bool subpixel = true;
};

/// Level 0 is the input; level k is floor(dim / factor^k), bilinearly resampled.
std::vector<GrayImage> build_pyramid(const GrayImage& img, int levels, double scale_factor);

/// FAST 9-of-16 segment test with 3x3 non-max suppression and per-cell
/// bucketing. Output is ordered by (cell row, cell col, descending response).
std::vector<Keypoint> detect(const GrayImage& img, const DetectorParams& params);

/// True when the 16-pixel circle around (x, y) has >= 9 contiguous pixels all
/// brighter than I + threshold or all darker than I - threshold.
bool segment_test(const GrayImage& img, int x, int y, int threshold);

/// Intensity-centroid orientation over a disc of the given radius, [0, 2*pi).
double compute_orientation(const GrayImage& img, const Keypoint& kp, int patch_radius = 15);

/// Fixed pseudo-random sampling pattern of 256 point pairs within radius 15.
class BriefPattern {
 public:
  static constexpr int kPairs = 256;
  static constexpr int kRadius = 15;

  explicit BriefPattern(std::uint64_t seed = 42);

  struct Pair {
    double x1, y1, x2, y2;
  };
  const std::vector<Pair>& pairs() const { return pairs_; }
  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::vector<Pair> pairs_;
};

struct Described {
  std::vector<Keypoint> keypoints;
  std::vector<BinaryDescriptor> descriptors;
};

/// Rotated-BRIEF descriptors on a smoothed copy of the image. Keypoints whose
/// rotated pattern leaves the image are dropped; the outputs stay aligned.
Described describe(const GrayImage& img, std::span<const Keypoint> kps,
                   const BriefPattern& pattern);
Described describe(const GrayImage& img, std::span<const Keypoint> kps,
                   std::uint64_t pattern_seed = 42);

/// Nearest/second-nearest ratio test plus mutual cross-check; one-to-one.
std::vector<Match> match(std::span<const BinaryDescriptor> a,
                         std::span<const BinaryDescriptor> b, int max_distance, double ratio);

/// Bucketed spatial index over keypoint positions for windowed searches.
class KeypointGrid {
 public:
  KeypointGrid(std::span<const Keypoint> kps, int width, int height, int cell = 16);

  /// Indices of keypoints within `radius` of (x, y), in ascending index order.
  std::vector<int> within(double x, double y, double radius) const;

 private:
  std::span<const Keypoint> kps_;
  int cell_;
  int cols_;
  int rows_;
  std::vector<std::vector<int>> buckets_;
};

struct WindowMatchParams {
  double radius = 15.0;
  int max_distance = 80;
  /// Best must be below ratio * second-best among window candidates; 1 disables.
  double ratio = 0.9;
};

/// For each query (descriptor, predicted pixel), pick the best keypoint in a
/// window around the prediction. Returns the keypoint index per query or -1.
/// The result is one-to-one: on a collision the lower distance wins.
std::vector<int> match_in_windows(std::span<const BinaryDescriptor> query_desc,
                                  std::span<const geom::Vec2> predicted,
                                  std::span<const Keypoint> kps,
                                  std::span<const BinaryDescriptor> kp_desc,
                                  const KeypointGrid& grid, const WindowMatchParams& params,
                                  std::span<const char> eligible = {});

}  // namespace skyloop::features
