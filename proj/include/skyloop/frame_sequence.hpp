#pragma once

#include <optional>
#include <string>
#include <vector>

#include "skyloop/geom.hpp"
#include "skyloop/image.hpp"
#include "skyloop/trajectory.hpp"

namespace skyloop {

/// Metric length of the camera path between two clip timestamps; lets a
/// consumer fix the scale of a monocular reconstruction.
struct ScaleHint {
  double t0 = 0.0;
  double t1 = 0.0;
  double distance = 0.0;  // m
};

/// A clip: frames at a fixed rate plus the camera that produced them.
struct FrameSequence {
  std::vector<GrayImage> frames;
  double fps = 30.0;
  geom::CameraIntrinsics intrinsics;
  std::optional<ScaleHint> scale_hint;

  double timestamp(std::size_t i) const { return static_cast<double>(i) / fps; }
};

// On-disk layout: frame_000000.png ... (8-bit grayscale) and meta.json with
// fps, width, height, fx, fy, cx, cy (optional scale_hint {t0, t1, distance}).
// The ground truth, when present, is groundtruth.txt in trajectory format.
inline constexpr const char* kMetaFile = "meta.json";
inline constexpr const char* kGroundTruthFile = "groundtruth.txt";

std::string frame_filename(std::size_t index);

/// Throws ParseError for a malformed layout, IoFailure for unreadable files.
FrameSequence read_frame_sequence(const std::string& dir);
void write_frame_sequence(const std::string& dir, const FrameSequence& seq);

GrayImage read_png(const std::string& path);
void write_png(const std::string& path, const GrayImage& img);
std::vector<unsigned char> encode_png(const GrayImage& img);
GrayImage decode_png(const std::vector<unsigned char>& bytes);

}  // namespace skyloop
