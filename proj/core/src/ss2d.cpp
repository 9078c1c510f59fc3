#include "mdepth/ss2d.hpp"

#include <algorithm>

#include "mdepth/ops.hpp"

namespace mdepth {

std::array<std::vector<std::size_t>, kScanPaths> scan_orders(std::size_t height, std::size_t width) {
  const std::size_t n = height * width;
  std::array<std::vector<std::size_t>, kScanPaths> orders;
  orders[0].resize(n);
  orders[1].resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    orders[0][i] = i;
    orders[1][i] = (i % height) * width + i / height;
  }
  orders[2].assign(orders[0].rbegin(), orders[0].rend());
  orders[3].assign(orders[1].rbegin(), orders[1].rend());
  return orders;
}

std::vector<std::size_t> invert_permutation(const std::vector<std::size_t>& order) {
  std::vector<std::size_t> inv(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) inv[order[i]] = i;
  return inv;
}

std::array<Tensor, kScanPaths> scan_expand(const Tensor& x) {
  if (x.rank() != 3) throw_shape_error("scan_expand", "expected [H,W,C], got " + shape_str(x.shape()));
  const std::size_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
  const Tensor flat = reshape(x, {h * w, c});
  const auto orders = scan_orders(h, w);
  std::array<Tensor, kScanPaths> seqs;
  for (std::size_t k = 0; k < kScanPaths; ++k) seqs[k] = index_select(flat, orders[k]);
  return seqs;
}

Tensor scan_merge(const std::array<Tensor, kScanPaths>& sequences, std::size_t height, std::size_t width) {
  const auto orders = scan_orders(height, width);
  Tensor merged;
  for (std::size_t k = 0; k < kScanPaths; ++k) {
    if (sequences[k].rank() != 2 || sequences[k].dim(0) != height * width) {
      throw_shape_error("scan_merge", Shape{height * width}, sequences[k].shape());
    }
    Tensor back = index_select(sequences[k], invert_permutation(orders[k]));
    merged = merged.defined() ? add(merged, back) : back;
  }
  return reshape(merged, {height, width, merged.dim(1)});
}

Ss2dParams Ss2dParams::init(std::size_t channels, std::size_t state_dim, std::size_t dt_rank, Rng& rng) {
  Ss2dParams p;
  for (auto& path : p.paths) path = SsmParams::init(channels, state_dim, dt_rank, rng);
  return p;
}

void Ss2dParams::collect(ParamSet& out, const std::string& prefix) const {
  for (std::size_t k = 0; k < kScanPaths; ++k) paths[k].collect(out, prefix + "path" + std::to_string(k) + ".");
}

Tensor ss2d_forward(const Tensor& x, const Ss2dParams& params, ScanExecutor executor) {
  const auto seqs = scan_expand(x);
  std::array<Tensor, kScanPaths> outs;
  for (std::size_t k = 0; k < kScanPaths; ++k) outs[k] = s6_forward(params.paths[k], seqs[k], executor);
  return scan_merge(outs, x.dim(0), x.dim(1));
}

}  // namespace mdepth
