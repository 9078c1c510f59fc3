#pragma once

#include <array>

#include "mdepth/tensor.hpp"

namespace mdepth {

/// Rigid transform mapping target-camera coordinates into source-camera
/// coordinates: p' = R p + t.
struct PoseTransform {
  Tensor rotation;     // [3, 3]
  Tensor translation;  // [3]

  /// 4x4 homogeneous matrix, row-major; the last row is exactly 0 0 0 1.
  std::array<double, 16> matrix() const;

  static PoseTransform identity();
  static PoseTransform from_values(const std::array<double, 9>& rotation, const std::array<double, 3>& translation);
  /// Pure translation with identity rotation.
  static PoseTransform translation_only(double tx, double ty, double tz);
};

/// Rodrigues' formula, differentiable, well defined at the zero rotation.
Tensor axis_angle_to_rotation(const Tensor& axis_angle);

/// [axis-angle(3), translation(3)] -> PoseTransform.
PoseTransform pose_from_vector(const Tensor& vec6);

}  // namespace mdepth
