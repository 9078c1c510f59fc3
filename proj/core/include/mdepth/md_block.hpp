#pragma once

#include <cstddef>
#include <string>

#include "mdepth/ss2d.hpp"

namespace mdepth {

inline constexpr std::size_t kExpansion = 2;

/// Weights of one MD block at model width C with inner width E*C.
///
///   h   = LN1(x)
///   g   = silu(h W_gate + b_gate)
///   s   = LN2(SS2D(silu(dwconv3x3(h W_in + b_in))))
///   out = x + (s * g) W_out + b_out
struct MdBlockParams {
  Tensor norm1_gamma, norm1_beta;  // [C]
  Tensor gate_w, gate_b;           // [C, EC], [EC]
  Tensor in_w, in_b;               // [C, EC], [EC]
  Tensor dw_w, dw_b;               // [3, 3, EC], [EC]
  Ss2dParams ss2d;                 // width EC
  Tensor norm2_gamma, norm2_beta;  // [EC]
  Tensor out_w, out_b;             // [EC, C], [C]

  std::size_t channels() const { return norm1_gamma.numel(); }

  static MdBlockParams init(std::size_t channels, std::size_t state_dim, Rng& rng,
                            std::size_t expansion = kExpansion);
  void collect(ParamSet& out, const std::string& prefix) const;
  /// Sets every weight and bias of the block to zero (norm gains stay 1).
  void zero_weights();
};

/// Step-size projection rank for a block of model width C: ceil(C / 16).
std::size_t dt_rank_for(std::size_t channels);

Tensor md_block_forward(const Tensor& x, const MdBlockParams& p, ScanExecutor executor = ScanExecutor::kParallel);

}  // namespace mdepth
