#include "mdepth/md_block.hpp"

#include <algorithm>

#include "mdepth/ops.hpp"

namespace mdepth {

std::size_t dt_rank_for(std::size_t channels) { return std::max<std::size_t>(1, (channels + 15) / 16); }

MdBlockParams MdBlockParams::init(std::size_t channels, std::size_t state_dim, Rng& rng, std::size_t expansion) {
  const std::size_t inner = expansion * channels;
  MdBlockParams p;
  p.norm1_gamma = Tensor::full({channels}, 1.0, true);
  p.norm1_beta = Tensor::zeros({channels}, true);
  p.gate_w = xavier_uniform({channels, inner}, channels, inner, rng);
  p.gate_b = Tensor::zeros({inner}, true);
  p.in_w = xavier_uniform({channels, inner}, channels, inner, rng);
  p.in_b = Tensor::zeros({inner}, true);
  p.dw_w = xavier_uniform({3, 3, inner}, 9, 9, rng);
  p.dw_b = Tensor::zeros({inner}, true);
  p.ss2d = Ss2dParams::init(inner, state_dim, dt_rank_for(channels), rng);
  p.norm2_gamma = Tensor::full({inner}, 1.0, true);
  p.norm2_beta = Tensor::zeros({inner}, true);
  p.out_w = xavier_uniform({inner, channels}, inner, channels, rng);
  p.out_b = Tensor::zeros({channels}, true);
  return p;
}

void MdBlockParams::collect(ParamSet& out, const std::string& prefix) const {
  out.add(prefix + "norm1.gamma", norm1_gamma);
  out.add(prefix + "norm1.beta", norm1_beta);
  out.add(prefix + "gate.w", gate_w);
  out.add(prefix + "gate.b", gate_b);
  out.add(prefix + "in.w", in_w);
  out.add(prefix + "in.b", in_b);
  out.add(prefix + "dwconv.w", dw_w);
  out.add(prefix + "dwconv.b", dw_b);
  ss2d.collect(out, prefix + "ss2d.");
  out.add(prefix + "norm2.gamma", norm2_gamma);
  out.add(prefix + "norm2.beta", norm2_beta);
  out.add(prefix + "out.w", out_w);
  out.add(prefix + "out.b", out_b);
}

void MdBlockParams::zero_weights() {
  for (Tensor* t : {&gate_w, &gate_b, &in_w, &in_b, &dw_w, &dw_b, &out_w, &out_b, &norm1_beta, &norm2_beta}) {
    auto d = t->mutable_data();
    std::fill(d.begin(), d.end(), 0.0);
  }
  for (auto& path : ss2d.paths) {
    for (Tensor* t : {&path.b_proj, &path.c_proj, &path.dt_down, &path.dt_up, &path.d_skip}) {
      auto d = t->mutable_data();
      std::fill(d.begin(), d.end(), 0.0);
    }
  }
}

Tensor md_block_forward(const Tensor& x, const MdBlockParams& p, ScanExecutor executor) {
  if (x.rank() != 3 || x.dim(2) != p.channels()) throw_shape_error("md_block", x.shape(), p.norm1_gamma.shape());
  const Tensor h = layer_norm(x, p.norm1_gamma, p.norm1_beta);
  const Tensor gate = silu(linear(h, p.gate_w, p.gate_b));
  Tensor z = linear(h, p.in_w, p.in_b);
  z = silu(depthwise_conv2d(z, p.dw_w, p.dw_b, 1, 1));
  Tensor s = ss2d_forward(z, p.ss2d, executor);
  s = layer_norm(s, p.norm2_gamma, p.norm2_beta);
  return add(x, linear(mul(s, gate), p.out_w, p.out_b));
}

}  // namespace mdepth
