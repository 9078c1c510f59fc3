#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "mdepth/md_block.hpp"
#include "mdepth/params.hpp"
#include "mdepth/pose.hpp"

namespace mdepth {

inline constexpr std::size_t kNumStages = 4;

struct NetConfig {
  std::size_t base_channels = 96;
  std::array<std::size_t, kNumStages> encoder_blocks{2, 2, 2, 2};
  std::array<std::size_t, kNumStages> decoder_blocks{2, 2, 2, 2};
  std::size_t patch_size = 4;
  std::size_t num_scales = kNumStages;
  std::size_t state_dim = 16;
  double min_depth = 0.1;
  double max_depth = 100.0;

  /// [C, 2C, 4C, 8C]
  std::array<std::size_t, kNumStages> encoder_dims() const;
  /// [8C, 4C, 2C, C]
  std::array<std::size_t, kNumStages> decoder_dims() const;
  /// Input height and width must be multiples of this (patch size times the
  /// three 2x fusions).
  std::size_t input_divisor() const { return patch_size << (kNumStages - 1); }

  /// C = 8, N = 4: the configuration used by the training tests.
  static NetConfig desk();
};

/// Raises ShapeError naming the required divisor when H or W is not a multiple.
void check_input_dims(std::size_t height, std::size_t width, std::size_t divisor);

/// Non-overlapping p x p patches of an [H,W,3] image flattened row-major
/// within the patch, channels last: [H/p, W/p, p*p*3].
Tensor extract_patches(const Tensor& image, std::size_t patch);
/// 2x2 space-to-depth: [H,W,C] -> [H/2,W/2,4C], neighborhood order (dy, dx, c).
Tensor merge_patches(const Tensor& x);
/// Inverse of merge_patches: [H,W,4C] -> [2H,2W,C].
Tensor split_patches(const Tensor& x);

Tensor patch_embed(const Tensor& image, const Tensor& weight, const Tensor& bias, const Tensor& gamma,
                   const Tensor& beta, std::size_t patch);
/// merge_patches then the 4C -> 2C map, without normalization.
Tensor fuse_linear(const Tensor& x, const Tensor& weight);
/// fuse_linear followed by layer norm: [H,W,C] -> [H/2,W/2,2C].
Tensor feature_fusion(const Tensor& x, const Tensor& weight, const Tensor& gamma, const Tensor& beta);
/// C -> 2C map then split into 2x2 blocks: [H,W,C] -> [2H,2W,C/2].
Tensor feature_decomposition(const Tensor& x, const Tensor& weight);

/// depth = 1 / (1/max + (1/min - 1/max) * disp)
double disparity_to_depth(double disparity, double min_depth, double max_depth);
Tensor disparity_to_depth(const Tensor& disparity, double min_depth, double max_depth);

struct DepthOutputs {
  // Index 0 is the finest scale (1/4 of the input), index 3 the coarsest (1/32).
  std::vector<Tensor> disparities;            // [h, w, 1], sigmoid outputs
  std::vector<Tensor> depths;                 // [h, w, 1], meters
  std::vector<Tensor> upsampled_disparities;  // [H, W, 1]
  // Stage outputs, kept for inspection.
  std::vector<Tensor> encoder_features;
  std::vector<Tensor> decoder_features;
};

class DepthNet {
 public:
  DepthNet(const NetConfig& config, std::uint64_t seed);

  DepthOutputs forward(const Tensor& image, ScanExecutor executor = ScanExecutor::kParallel) const;
  ParamSet parameters() const;
  const NetConfig& config() const { return config_; }

  struct PatchEmbedParams {
    Tensor weight, bias, gamma, beta;
  };
  struct FusionParams {
    Tensor weight, gamma, beta;
  };
  struct HeadParams {
    Tensor weight, bias;  // [3,3,C,1], [1]
  };

  PatchEmbedParams embed;
  std::array<std::vector<MdBlockParams>, kNumStages> encoder;
  std::array<FusionParams, kNumStages - 1> fusions;
  std::array<std::vector<MdBlockParams>, kNumStages> decoder;
  std::array<Tensor, kNumStages - 1> decompositions;  // weight [C_in, 2 C_in]
  std::array<HeadParams, kNumStages> heads;           // heads[s] follows decoder stage s

 private:
  NetConfig config_;
};

class PoseNet {
 public:
  static constexpr std::array<std::size_t, 6> kChannels{16, 32, 64, 128, 256, 256};
  static constexpr double kOutputScale = 0.01;

  explicit PoseNet(std::uint64_t seed);

  /// Relative pose mapping target-camera points into the source camera.
  PoseTransform forward(const Tensor& target, const Tensor& source) const;
  /// Raw 6-vector (axis-angle, translation) after scaling.
  Tensor forward_vector(const Tensor& frame_pair) const;
  ParamSet parameters() const;

  struct ConvParams {
    Tensor weight, bias;
  };
  std::array<ConvParams, kChannels.size()> convs;
  ConvParams head;  // 1x1, 256 -> 6
};

}  // namespace mdepth
