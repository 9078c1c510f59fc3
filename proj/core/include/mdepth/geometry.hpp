#pragma once

#include <array>
#include <cstddef>

#include "mdepth/pose.hpp"
#include "mdepth/tensor.hpp"

// Pinhole view synthesis. Pixel centers sit at integer coordinates with the
// origin at the top-left pixel; u runs along columns, v along rows.
namespace mdepth {

struct CameraModel {
  double fx = 1.0, fy = 1.0;
  double cx = 0.0, cy = 0.0;
  std::size_t width = 1, height = 1;

  /// Throws std::invalid_argument unless fx, fy > 0 and the size is non-empty.
  void validate() const;
  /// Intrinsics of the horizontally mirrored image.
  CameraModel flipped() const;
  /// Intrinsics after resizing the image by the given factor.
  CameraModel scaled(double factor) const;
};

std::array<double, 2> project_point(const std::array<double, 3>& point, const CameraModel& cam);
std::array<double, 3> backproject_pixel(double u, double v, double depth, const CameraModel& cam);

/// Coordinates plus a 0/1 validity mask (no gradient).
struct PixelCoords {
  Tensor coords;  // [..., 2] as (u, v)
  Tensor valid;   // [..., 1]
};

/// points [..., 3] -> (u, v). Points with Z <= 0 are flagged invalid and get
/// coordinates (-1, -1) with zero gradient.
PixelCoords project(const Tensor& points, const CameraModel& cam);

/// depth [H, W, 1] -> camera-frame points [H, W, 3].
Tensor backproject(const Tensor& depth, const CameraModel& cam);

/// p' = R p + t for points [..., 3].
Tensor transform_points(const Tensor& points, const PoseTransform& pose);

/// Source-image coordinates of every target pixel given target depth and the
/// target-to-source transform.
PixelCoords warp_coords(const Tensor& depth, const PoseTransform& pose, const CameraModel& cam);

struct Sampled {
  Tensor image;  // [H', W', C]
  Tensor valid;  // [H', W', 1]
};

/// Bilinear lookup of image [H, W, C] at coords [H', W', 2]. The four
/// neighbor weights sum to one. Coordinates outside [0, W-1] x [0, H-1] are
/// clamped to the border and flagged invalid; the gradient along a clamped
/// axis is 0.
Sampled bilinear_sample(const Tensor& image, const Tensor& coords);

/// Full reconstruction of the target from a source frame.
Sampled synthesize_view(const Tensor& source, const Tensor& depth, const PoseTransform& pose,
                        const CameraModel& cam);

}  // namespace mdepth
