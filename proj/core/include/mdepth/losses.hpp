#pragma once

#include <cstddef>
#include <vector>

#include "mdepth/geometry.hpp"
#include "mdepth/network.hpp"

namespace mdepth {

struct LossConfig {
  double alpha = 0.85;               // SSIM weight
  double smoothness_weight = 1e-3;   // lambda
  std::size_t ssim_window = 3;
  double ssim_c1 = 0.01 * 0.01;
  double ssim_c2 = 0.03 * 0.03;

  void validate() const;
};

/// Per-pixel, per-channel SSIM of two [H,W,C] images over box windows with
/// reflection padding.
Tensor ssim(const Tensor& a, const Tensor& b, const LossConfig& cfg = {});

/// alpha/2 * (1 - SSIM) + (1 - alpha) * |a - b|, both channel-averaged: [H,W,1].
Tensor photometric_error(const Tensor& a, const Tensor& b, const LossConfig& cfg = {});

/// Edge-aware smoothness of disp [h,w,1] guided by image [h,w,C]. The
/// disparity is mean-normalized first.
Tensor smoothness_loss(const Tensor& disp, const Tensor& image);

/// Binary mask, 1 where the best warped reconstruction has strictly lower
/// photometric error than the best unwarped source.
struct AutoMask {
  Tensor mask;  // [H,W,1] of 0/1
  double coverage() const;
};

AutoMask auto_mask_from_errors(const Tensor& min_warped_error, const Tensor& min_raw_error);
AutoMask auto_mask(const Tensor& target, const std::vector<Tensor>& warped_sources,
                   const std::vector<Tensor>& raw_sources, const LossConfig& cfg = {});

/// Per-pixel minimum over a non-empty list of [H,W,1] maps.
Tensor pixelwise_min(const std::vector<Tensor>& maps);

/// 1 where every pixel of the 3x3 neighborhood (clipped at the border) is 1.
Tensor erode_mask(const Tensor& mask);

/// Error assigned to pixels a source cannot reconstruct.
inline constexpr double kInvalidPixelError = 1e3;

struct LossTerms {
  Tensor total;
  double photometric = 0.0;    // masked reprojection term, averaged over scales
  double smoothness = 0.0;     // unweighted smoothness, averaged over scales
  double mask_coverage = 0.0;  // fraction of pixels with mu = 1, averaged over scales
  std::vector<AutoMask> masks; // per scale
};

/// Multi-scale objective: per scale, upsample the disparity, warp every
/// source, take the per-pixel minimum error, apply the auto-mask and add
/// lambda / 2^scale times the smoothness of the native-resolution disparity.
/// The result is the mean over scales.
LossTerms total_loss(const Tensor& target, const std::vector<Tensor>& sources, const DepthOutputs& depth,
                     const std::vector<PoseTransform>& poses, const CameraModel& cam, const NetConfig& net,
                     const LossConfig& cfg = {});

/// Same objective for externally supplied per-scale disparities [H,W,1] at
/// input resolution (used with ground-truth depth and for gradient checks).
LossTerms total_loss_from_disparities(const Tensor& target, const std::vector<Tensor>& sources,
                                      const std::vector<Tensor>& upsampled_disparities,
                                      const std::vector<Tensor>& native_disparities,
                                      const std::vector<PoseTransform>& poses, const CameraModel& cam,
                                      double min_depth, double max_depth, const LossConfig& cfg = {});

/// Masked reprojection term for one depth map: mean over pixels of
/// mu * min_s pe(target, warp(source_s)).
struct PhotometricTerm {
  Tensor value;
  AutoMask mask;
  Tensor min_error;  // [H,W,1], kInvalidPixelError where no source is valid
};
PhotometricTerm masked_photometric(const Tensor& target, const std::vector<Tensor>& sources, const Tensor& depth,
                                   const std::vector<PoseTransform>& poses, const CameraModel& cam,
                                   const LossConfig& cfg = {});

}  // namespace mdepth
