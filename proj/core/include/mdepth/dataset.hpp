#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <vector>

#include "mdepth/geometry.hpp"

namespace mdepth {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Consecutive frames of one camera. Depths and camera centers are optional
/// ground truth; when present they have one entry per frame.
struct FrameSequence {
  std::vector<Tensor> frames;  // [H,W,3] in [0,1]
  CameraModel camera;
  std::vector<Tensor> depths;                          // [H,W,1]
  std::vector<std::array<double, 3>> camera_centers;   // world position, axes aligned with the world

  void validate() const;
};

/// Frames t-1, t, t+1. Ground truth is filled when the sequence has it.
struct FrameTriplet {
  std::array<Tensor, 3> frames;  // previous, target, next
  CameraModel camera;
  Tensor depth;  // target depth, undefined when unknown
  std::optional<std::array<PoseTransform, 2>> poses;  // target -> previous, target -> next
};

/// Target-to-source transform between two translation-only cameras.
PoseTransform relative_pose(const std::array<double, 3>& target_center, const std::array<double, 3>& source_center);

/// One triplet per interior frame, in frame order.
std::vector<FrameTriplet> make_triplets(const FrameSequence& seq);

/// Directory layout: frame_NNN.ppm, intrinsics.txt ("fx fy cx cy"), and
/// optionally depth_NNN.pfm and poses.txt (one "x y z" camera center per line).
FrameSequence load_sequence(const std::filesystem::path& dir);
void save_sequence(const std::filesystem::path& dir, const FrameSequence& seq);

}  // namespace mdepth
