#include <doctest.h>

#include "mdepth/gradcheck.hpp"
#include "mdepth/md_block.hpp"
#include "mdepth/ops.hpp"
#include "test_util.hpp"

using namespace mdepth;
using testutil::random;

namespace {

void fill(Tensor& t, double v) { std::fill(t.mutable_data().begin(), t.mutable_data().end(), v); }

// Plain loops for the dense and depthwise pieces, library ops for the rest.
std::vector<double> dense(const std::vector<double>& x, std::size_t rows, std::size_t k, const Tensor& w,
                          const Tensor& b) {
  const std::size_t n = w.dim(1);
  std::vector<double> out(rows * n);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = b[j];
      for (std::size_t i = 0; i < k; ++i) acc += x[r * k + i] * w[i * n + j];
      out[r * n + j] = acc;
    }
  return out;
}

std::vector<double> depthwise3x3(const std::vector<double>& x, std::size_t h, std::size_t w, std::size_t c,
                                 const Tensor& k, const Tensor& b) {
  std::vector<double> out(h * w * c);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t xx = 0; xx < w; ++xx)
      for (std::size_t ch = 0; ch < c; ++ch) {
        double acc = b[ch];
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const long sy = static_cast<long>(y) + dy, sx = static_cast<long>(xx) + dx;
            if (sy < 0 || sx < 0 || sy >= static_cast<long>(h) || sx >= static_cast<long>(w)) continue;
            acc += x[(sy * w + sx) * c + ch] * k[((dy + 1) * 3 + (dx + 1)) * c + ch];
          }
        out[(y * w + xx) * c + ch] = acc;
      }
  return out;
}

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

std::vector<double> silu_v(std::vector<double> v) {
  for (auto& x : v) x = x / (1.0 + std::exp(-x));
  return v;
}

}  // namespace

TEST_CASE("zero weights pass the input through bit-exactly") {
  Rng rng(1);
  MdBlockParams p = MdBlockParams::init(8, 4, rng);
  p.zero_weights();
  const Tensor x = random({4, 4, 8}, rng);
  CHECK(testutil::bit_equal(md_block_forward(x, p), x));
}

TEST_CASE("zero gate kills the scan pathway") {
  Rng rng(2);
  MdBlockParams p = MdBlockParams::init(8, 4, rng);
  fill(p.gate_w, 0.0);
  fill(p.gate_b, 0.0);
  fill(p.out_b, 0.0);
  const Tensor x = random({4, 4, 8}, rng);
  CHECK(testutil::bit_equal(md_block_forward(x, p), x));
}

TEST_CASE("shape is preserved") {
  Rng rng(3);
  const MdBlockParams p = MdBlockParams::init(6, 4, rng);
  for (auto [h, w] : {std::pair<std::size_t, std::size_t>{1, 1}, {1, 5}, {3, 2}, {7, 7}}) {
    CHECK(md_block_forward(random({h, w, 6}, rng), p).shape() == Shape{h, w, 6});
  }
  CHECK_THROWS_AS(md_block_forward(random({2, 2, 5}, rng), p), ShapeError);
}

TEST_CASE("forward matches a step-by-step oracle") {
  Rng rng(4);
  const std::size_t h = 4, w = 4, c = 8, e = kExpansion * c, n = h * w;
  MdBlockParams p = MdBlockParams::init(c, 4, rng);
  // Non-trivial norm affine params and biases so every term is exercised.
  for (Tensor* t : {&p.norm1_gamma, &p.norm1_beta, &p.norm2_gamma, &p.norm2_beta, &p.gate_b, &p.in_b, &p.dw_b, &p.out_b}) {
    for (auto& v : t->mutable_data()) v = rng.uniform(-0.5, 1.5);
  }
  const Tensor x = random({h, w, c}, rng);

  const auto hn = values(layer_norm(x, p.norm1_gamma, p.norm1_beta));
  const auto gate = silu_v(dense(hn, n, c, p.gate_w, p.gate_b));
  const auto z = silu_v(depthwise3x3(dense(hn, n, c, p.in_w, p.in_b), h, w, e, p.dw_w, p.dw_b));
  const Tensor s = layer_norm(ss2d_forward(Tensor::from({h, w, e}, z), p.ss2d, ScanExecutor::kSequential),
                              p.norm2_gamma, p.norm2_beta);
  std::vector<double> prod(n * e);
  for (std::size_t i = 0; i < prod.size(); ++i) prod[i] = s[i] * gate[i];
  auto out = dense(prod, n, e, p.out_w, p.out_b);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += x[i];

  CHECK(testutil::max_abs_diff(md_block_forward(x, p, ScanExecutor::kSequential).data(), out) < 1e-12);
  CHECK(testutil::max_abs_diff(md_block_forward(x, p, ScanExecutor::kParallel).data(), out) < 1e-10);
}

TEST_CASE("dt rank is ceil(C / 16)") {
  CHECK(dt_rank_for(1) == 1);
  CHECK(dt_rank_for(16) == 1);
  CHECK(dt_rank_for(17) == 2);
  CHECK(dt_rank_for(96) == 6);
}

TEST_CASE("block gradient matches finite differences") {
  Rng rng(5);
  const MdBlockParams p = MdBlockParams::init(8, 4, rng);
  Tensor x = random({4, 4, 8}, rng, -1, 1, true);
  ParamSet params;
  p.collect(params, "b");
  std::vector<Tensor> inputs{x};
  for (const auto& np : params.items()) {
    np.tensor.impl()->requires_grad = true;
    inputs.push_back(np.tensor);
  }
  CHECK(gradcheck([&] { return md_block_forward(x, p); }, inputs, {.max_probes = 300}) < 1e-5);
}
