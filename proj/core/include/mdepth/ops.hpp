#pragma once

#include <cstddef>
#include <vector>

#include "mdepth/tensor.hpp"

// Differentiable primitives. Feature maps are channels-last [H, W, C]; a
// batch is processed one sample at a time.
namespace mdepth {

// Elementwise binary ops with numpy-style broadcasting.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
/// Elementwise minimum; ties route the gradient to `a`.
Tensor minimum(const Tensor& a, const Tensor& b);

Tensor add_scalar(const Tensor& x, double s);
Tensor mul_scalar(const Tensor& x, double s);
Tensor neg(const Tensor& x);

Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor abs(const Tensor& x);
Tensor sqrt(const Tensor& x);
Tensor square(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor silu(const Tensor& x);
Tensor softplus(const Tensor& x);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// Reduces one axis; the axis is removed unless keepdim.
Tensor sum_axis(const Tensor& x, std::size_t axis, bool keepdim = false);
Tensor mean_axis(const Tensor& x, std::size_t axis, bool keepdim = false);

/// [M,K] x [K,N] -> [M,N]
Tensor matmul(const Tensor& a, const Tensor& b);
/// x [..., K] times weight [K, N] plus optional bias [N] -> [..., N]
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias = {});

/// x [H,W,Cin], weight [kh,kw,Cin,Cout], optional bias [Cout]. Zero padding
/// of `pad` pixels on every side.
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride,
              std::size_t pad);
/// x [H,W,C], weight [kh,kw,C], optional bias [C].
Tensor depthwise_conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias,
                        std::size_t stride, std::size_t pad);

inline constexpr double kLayerNormEps = 1e-6;
/// Normalizes over the last axis, then applies gamma/beta (either may be undefined).
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = kLayerNormEps);

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length);
Tensor permute(const Tensor& x, const std::vector<std::size_t>& order);
/// Matrix transpose of a rank-2 tensor.
Tensor transpose(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);

enum class PadMode { kZero, kReflect };
/// Spatial padding of x [H,W,C].
Tensor pad(const Tensor& x, std::size_t top, std::size_t bottom, std::size_t left,
           std::size_t right, PadMode mode = PadMode::kZero);

/// Gathers slices along axis 0: out[i] = x[index[i]].
Tensor index_select(const Tensor& x, const std::vector<std::size_t>& index);

/// Mean over k x k windows of x [H,W,C], no padding.
Tensor avg_pool2d(const Tensor& x, std::size_t kernel, std::size_t stride);

/// Bilinear resize of x [h,w,C] to [H,W,C] with half-pixel centers.
Tensor upsample_bilinear(const Tensor& x, std::size_t out_h, std::size_t out_w);

}  // namespace mdepth
