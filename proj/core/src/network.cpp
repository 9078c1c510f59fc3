#include "mdepth/network.hpp"

#include <string>

#include "mdepth/ops.hpp"

namespace mdepth {

std::array<std::size_t, kNumStages> NetConfig::encoder_dims() const {
  const std::size_t c = base_channels;
  return {c, 2 * c, 4 * c, 8 * c};
}

std::array<std::size_t, kNumStages> NetConfig::decoder_dims() const {
  const std::size_t c = base_channels;
  return {8 * c, 4 * c, 2 * c, c};
}

NetConfig NetConfig::desk() {
  NetConfig cfg;
  cfg.base_channels = 8;
  cfg.state_dim = 4;
  return cfg;
}

void check_input_dims(std::size_t height, std::size_t width, std::size_t divisor) {
  if (height == 0 || width == 0 || height % divisor != 0 || width % divisor != 0) {
    throw ShapeError("input of " + std::to_string(height) + "x" + std::to_string(width) +
                     " pixels: height and width must be divisible by " + std::to_string(divisor));
  }
}

Tensor extract_patches(const Tensor& image, std::size_t patch) {
  if (image.rank() != 3) throw_shape_error("extract_patches", "expected [H,W,C], got " + shape_str(image.shape()));
  const std::size_t h = image.dim(0), w = image.dim(1), c = image.dim(2);
  check_input_dims(h, w, patch);
  const Tensor t = reshape(image, {h / patch, patch, w / patch, patch, c});
  return reshape(permute(t, {0, 2, 1, 3, 4}), {h / patch, w / patch, patch * patch * c});
}

Tensor merge_patches(const Tensor& x) {
  if (x.rank() != 3) throw_shape_error("merge_patches", "expected [H,W,C], got " + shape_str(x.shape()));
  const std::size_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
  if (h % 2 || w % 2) throw_shape_error("feature_fusion", "spatial dims must be even, got " + shape_str(x.shape()));
  const Tensor t = reshape(x, {h / 2, 2, w / 2, 2, c});
  return reshape(permute(t, {0, 2, 1, 3, 4}), {h / 2, w / 2, 4 * c});
}

Tensor split_patches(const Tensor& x) {
  if (x.rank() != 3 || x.dim(2) % 4) throw_shape_error("split_patches", "channels must be a multiple of 4, got " + shape_str(x.shape()));
  const std::size_t h = x.dim(0), w = x.dim(1), c = x.dim(2) / 4;
  const Tensor t = reshape(x, {h, w, 2, 2, c});
  return reshape(permute(t, {0, 2, 1, 3, 4}), {2 * h, 2 * w, c});
}

Tensor patch_embed(const Tensor& image, const Tensor& weight, const Tensor& bias, const Tensor& gamma,
                   const Tensor& beta, std::size_t patch) {
  if (image.rank() == 3) check_input_dims(image.dim(0), image.dim(1), patch);
  return layer_norm(linear(extract_patches(image, patch), weight, bias), gamma, beta);
}

Tensor fuse_linear(const Tensor& x, const Tensor& weight) { return linear(merge_patches(x), weight); }

Tensor feature_fusion(const Tensor& x, const Tensor& weight, const Tensor& gamma, const Tensor& beta) {
  return layer_norm(fuse_linear(x, weight), gamma, beta);
}

Tensor feature_decomposition(const Tensor& x, const Tensor& weight) {
  if (x.rank() != 3 || x.dim(2) % 2) {
    throw_shape_error("feature_decomposition", "channel count must be even, got " + shape_str(x.shape()));
  }
  return split_patches(linear(x, weight));
}

double disparity_to_depth(double disparity, double min_depth, double max_depth) {
  const double lo = 1.0 / max_depth, hi = 1.0 / min_depth;
  return 1.0 / (lo + (hi - lo) * disparity);
}

Tensor disparity_to_depth(const Tensor& disparity, double min_depth, double max_depth) {
  const double lo = 1.0 / max_depth, hi = 1.0 / min_depth;
  const Tensor scaled = add_scalar(mul_scalar(disparity, hi - lo), lo);
  return div(Tensor::full(scaled.shape(), 1.0), scaled);
}

DepthNet::DepthNet(const NetConfig& config, std::uint64_t seed) : config_(config) {
  Rng rng(seed);
  const auto enc = config.encoder_dims();
  const auto dec = config.decoder_dims();
  const std::size_t patch_in = config.patch_size * config.patch_size * 3;
  const std::size_t c = config.base_channels;
  embed = {xavier_uniform({patch_in, c}, patch_in, c, rng), Tensor::zeros({c}, true), Tensor::full({c}, 1.0, true),
           Tensor::zeros({c}, true)};
  for (std::size_t s = 0; s < kNumStages; ++s) {
    for (std::size_t b = 0; b < config.encoder_blocks[s]; ++b)
      encoder[s].push_back(MdBlockParams::init(enc[s], config.state_dim, rng));
    if (s + 1 < kNumStages) {
      fusions[s] = {xavier_uniform({4 * enc[s], 2 * enc[s]}, 4 * enc[s], 2 * enc[s], rng),
                    Tensor::full({2 * enc[s]}, 1.0, true), Tensor::zeros({2 * enc[s]}, true)};
    }
  }
  for (std::size_t s = 0; s < kNumStages; ++s) {
    if (s > 0) decompositions[s - 1] = xavier_uniform({dec[s - 1], 2 * dec[s - 1]}, dec[s - 1], 2 * dec[s - 1], rng);
    for (std::size_t b = 0; b < config.decoder_blocks[s]; ++b)
      decoder[s].push_back(MdBlockParams::init(dec[s], config.state_dim, rng));
    heads[s] = {xavier_uniform({3, 3, dec[s], 1}, 9 * dec[s], 9, rng), Tensor::zeros({1}, true)};
  }
}

DepthOutputs DepthNet::forward(const Tensor& image, ScanExecutor executor) const {
  if (image.rank() != 3 || image.dim(2) != 3) throw_shape_error("depthnet", "expected [H,W,3], got " + shape_str(image.shape()));
  const std::size_t height = image.dim(0), width = image.dim(1);
  check_input_dims(height, width, config_.input_divisor());

  DepthOutputs out;
  Tensor x = patch_embed(image, embed.weight, embed.bias, embed.gamma, embed.beta, config_.patch_size);
  for (std::size_t s = 0; s < kNumStages; ++s) {
    for (const auto& block : encoder[s]) x = md_block_forward(x, block, executor);
    out.encoder_features.push_back(x);
    if (s + 1 < kNumStages) x = feature_fusion(x, fusions[s].weight, fusions[s].gamma, fusions[s].beta);
  }

  std::vector<Tensor> coarse_to_fine;
  for (std::size_t s = 0; s < kNumStages; ++s) {
    if (s > 0) {
      x = feature_decomposition(x, decompositions[s - 1]);
      x = add(x, out.encoder_features[kNumStages - 1 - s]);
    }
    for (const auto& block : decoder[s]) x = md_block_forward(x, block, executor);
    out.decoder_features.push_back(x);
    coarse_to_fine.push_back(sigmoid(conv2d(x, heads[s].weight, heads[s].bias, 1, 1)));
  }
  for (std::size_t k = 0; k < kNumStages; ++k) {
    const Tensor& disp = coarse_to_fine[kNumStages - 1 - k];
    out.disparities.push_back(disp);
    out.depths.push_back(disparity_to_depth(disp, config_.min_depth, config_.max_depth));
    out.upsampled_disparities.push_back(upsample_bilinear(disp, height, width));
  }
  return out;
}

ParamSet DepthNet::parameters() const {
  ParamSet ps;
  ps.add("embed.w", embed.weight);
  ps.add("embed.b", embed.bias);
  ps.add("embed.norm.gamma", embed.gamma);
  ps.add("embed.norm.beta", embed.beta);
  for (std::size_t s = 0; s < kNumStages; ++s) {
    const std::string stage = "enc" + std::to_string(s) + ".";
    for (std::size_t b = 0; b < encoder[s].size(); ++b) encoder[s][b].collect(ps, stage + "block" + std::to_string(b) + ".");
    if (s + 1 < kNumStages) {
      ps.add(stage + "fusion.w", fusions[s].weight);
      ps.add(stage + "fusion.norm.gamma", fusions[s].gamma);
      ps.add(stage + "fusion.norm.beta", fusions[s].beta);
    }
  }
  for (std::size_t s = 0; s < kNumStages; ++s) {
    const std::string stage = "dec" + std::to_string(s) + ".";
    if (s > 0) ps.add(stage + "decomposition.w", decompositions[s - 1]);
    for (std::size_t b = 0; b < decoder[s].size(); ++b) decoder[s][b].collect(ps, stage + "block" + std::to_string(b) + ".");
    ps.add(stage + "head.w", heads[s].weight);
    ps.add(stage + "head.b", heads[s].bias);
  }
  return ps;
}

PoseNet::PoseNet(std::uint64_t seed) {
  Rng rng(seed);
  std::size_t cin = 6;
  for (std::size_t i = 0; i < kChannels.size(); ++i) {
    const std::size_t cout = kChannels[i];
    convs[i] = {xavier_uniform({3, 3, cin, cout}, 9 * cin, 9 * cout, rng), Tensor::zeros({cout}, true)};
    cin = cout;
  }
  head = {xavier_uniform({1, 1, cin, 6}, cin, 6, rng), Tensor::zeros({6}, true)};
}

Tensor PoseNet::forward_vector(const Tensor& frame_pair) const {
  if (frame_pair.rank() != 3 || frame_pair.dim(2) != 6) {
    throw_shape_error("posenet", "expected [H,W,6], got " + shape_str(frame_pair.shape()));
  }
  Tensor x = frame_pair;
  for (const auto& conv : convs) x = silu(conv2d(x, conv.weight, conv.bias, 2, 1));
  x = conv2d(x, head.weight, head.bias, 1, 0);
  const std::size_t cells = x.dim(0) * x.dim(1);
  return mul_scalar(mean_axis(reshape(x, {cells, 6}), 0), kOutputScale);
}

PoseTransform PoseNet::forward(const Tensor& target, const Tensor& source) const {
  return pose_from_vector(forward_vector(concat({target, source}, 2)));
}

ParamSet PoseNet::parameters() const {
  ParamSet ps;
  for (std::size_t i = 0; i < convs.size(); ++i) {
    ps.add("conv" + std::to_string(i) + ".w", convs[i].weight);
    ps.add("conv" + std::to_string(i) + ".b", convs[i].bias);
  }
  ps.add("head.w", head.weight);
  ps.add("head.b", head.bias);
  return ps;
}

}  // namespace mdepth
