#pragma once

#include <array>
#include <cstdint>

#include "mdepth/geometry.hpp"
#include "mdepth/params.hpp"

namespace mdepth {

/// One augmentation decision, shared by all frames of a triplet.
struct AugmentDraw {
  bool flip = false;
  bool jitter = false;
  double brightness = 1.0;  // multiplicative
  double contrast = 1.0;    // blend factor against the frame's mean gray
  double saturation = 1.0;  // blend factor against per-pixel gray
  double hue = 0.0;         // shift in turns

  static AugmentDraw sample(Rng& rng);
};

inline constexpr double kFlipProbability = 0.5;
inline constexpr double kJitterProbability = 0.5;
inline constexpr double kJitterStrength = 0.2;
inline constexpr double kHueStrength = 0.05;

Tensor flip_horizontal(const Tensor& image);
/// Brightness, contrast, saturation, then hue; result clamped to [0,1].
Tensor color_jitter(const Tensor& image, const AugmentDraw& draw);

struct AugmentedTriplet {
  std::array<Tensor, 3> loss_frames;     // flipped only
  std::array<Tensor, 3> network_frames;  // flipped and jittered
  CameraModel camera;                    // intrinsics of the (possibly) flipped frames
};

AugmentedTriplet augment(const std::array<Tensor, 3>& frames, const CameraModel& camera, const AugmentDraw& draw);
AugmentedTriplet augment(const std::array<Tensor, 3>& frames, const CameraModel& camera, std::uint64_t seed);

}  // namespace mdepth
