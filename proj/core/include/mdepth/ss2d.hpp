#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "mdepth/ssm.hpp"

namespace mdepth {

inline constexpr std::size_t kScanPaths = 4;

/// Orders in which the four scan paths visit the H*W positions:
/// row-major, column-major, and the reverse of each. order[i] is the
/// row-major position visited at sequence step i.
std::array<std::vector<std::size_t>, kScanPaths> scan_orders(std::size_t height, std::size_t width);

/// The inverse of a permutation.
std::vector<std::size_t> invert_permutation(const std::vector<std::size_t>& order);

/// x [H,W,C] -> four sequences [H*W, C].
std::array<Tensor, kScanPaths> scan_expand(const Tensor& x);

/// Undoes each path's permutation and sums the four maps into [H,W,C].
Tensor scan_merge(const std::array<Tensor, kScanPaths>& sequences, std::size_t height, std::size_t width);

struct Ss2dParams {
  std::array<SsmParams, kScanPaths> paths;  // independent weights per path

  static Ss2dParams init(std::size_t channels, std::size_t state_dim, std::size_t dt_rank, Rng& rng);
  void collect(ParamSet& out, const std::string& prefix) const;
};

/// Expand, run S6 on every path, merge.
Tensor ss2d_forward(const Tensor& x, const Ss2dParams& params, ScanExecutor executor = ScanExecutor::kParallel);

}  // namespace mdepth
