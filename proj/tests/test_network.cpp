#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <numbers>

#include "mdepth/network.hpp"
#include "mdepth/ops.hpp"
#include "test_util.hpp"

using namespace mdepth;
using testutil::random;

namespace {

void fill(const Tensor& t, double v) {
  auto d = Tensor(t).mutable_data();
  std::fill(d.begin(), d.end(), v);
}

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Mat to_mat(const Tensor& t) { return Eigen::Map<const Mat>(t.data().data(), t.dim(0), t.dim(1)); }

Tensor from_mat(const Mat& m) {
  return Tensor::from({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())},
                      std::vector<double>(m.data(), m.data() + m.size()));
}

}  // namespace

TEST_CASE("config stage ladders") {
  const NetConfig c;
  CHECK(c.encoder_dims() == std::array<std::size_t, 4>{96, 192, 384, 768});
  CHECK(c.decoder_dims() == std::array<std::size_t, 4>{768, 384, 192, 96});
  CHECK(c.input_divisor() == 32);
  CHECK(NetConfig::desk().base_channels == 8);
  CHECK(NetConfig::desk().state_dim == 4);
}

TEST_CASE("input dimension check names the divisor") {
  try {
    check_input_dims(64, 48, 32);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("32") != std::string::npos);
  }
  CHECK_NOTHROW(check_input_dims(64, 96, 32));
  const DepthNet net(NetConfig::desk(), 0);
  CHECK_THROWS_AS(net.forward(Tensor::zeros({40, 64, 3})), ShapeError);
}

TEST_CASE("patch embedding") {
  Rng rng(1);
  SUBCASE("shape at C = 96") {
    const Tensor img = random({64, 64, 3}, rng, 0, 1);
    const Tensor out = patch_embed(img, random({48, 96}, rng), Tensor::zeros({96}), Tensor::full({96}, 1.0),
                                   Tensor::zeros({96}), 4);
    CHECK(out.shape() == Shape{16, 16, 96});
  }
  SUBCASE("zero image with zero bias embeds to zero") {
    const Tensor out = patch_embed(Tensor::zeros({32, 32, 3}), random({48, 8}, rng), Tensor::zeros({8}),
                                   random({8}, rng), Tensor::zeros({8}), 4);
    for (double v : out.data()) CHECK(v == 0.0);
  }
  SUBCASE("flattening order is row-major within the patch, channels last") {
    const Tensor img = random({8, 12, 3}, rng);
    const Tensor p = extract_patches(img, 4);
    REQUIRE(p.shape() == Shape{2, 3, 48});
    for (std::size_t py = 0; py < 2; ++py)
      for (std::size_t px = 0; px < 3; ++px)
        for (std::size_t dy = 0; dy < 4; ++dy)
          for (std::size_t dx = 0; dx < 4; ++dx)
            for (std::size_t c = 0; c < 3; ++c)
              CHECK(p[(py * 3 + px) * 48 + (dy * 4 + dx) * 3 + c] == img[((py * 4 + dy) * 12 + px * 4 + dx) * 3 + c]);
  }
}

TEST_CASE("feature fusion") {
  Rng rng(2);
  const Tensor x = random({8, 8, 96}, rng);
  CHECK(feature_fusion(x, random({384, 192}, rng), Tensor::full({192}, 1.0), Tensor::zeros({192})).shape() ==
        Shape{4, 4, 192});
  CHECK_THROWS_AS(fuse_linear(random({5, 4, 2}, rng), random({8, 4}, rng)), ShapeError);

  SUBCASE("averaging map keeps a constant field constant") {
    const Tensor field = Tensor::full({4, 6, 3}, 0.7);
    const Tensor y = fuse_linear(field, Tensor::full({12, 6}, 1.0 / 12.0));
    for (double v : y.data()) CHECK(v == doctest::Approx(0.7).epsilon(1e-14));
  }
  SUBCASE("concat-then-matmul oracle") {
    const std::size_t h = 4, w = 6, c = 3;
    const Tensor f = random({h, w, c}, rng), wt = random({4 * c, 2 * c}, rng);
    const Tensor y = fuse_linear(f, wt);
    REQUIRE(y.shape() == Shape{h / 2, w / 2, 2 * c});
    for (std::size_t i = 0; i < h / 2; ++i)
      for (std::size_t j = 0; j < w / 2; ++j) {
        std::vector<double> cat;
        for (std::size_t dy = 0; dy < 2; ++dy)
          for (std::size_t dx = 0; dx < 2; ++dx)
            for (std::size_t k = 0; k < c; ++k) cat.push_back(f[((2 * i + dy) * w + 2 * j + dx) * c + k]);
        for (std::size_t o = 0; o < 2 * c; ++o) {
          double acc = 0.0;
          for (std::size_t k = 0; k < 4 * c; ++k) acc += cat[k] * wt[k * 2 * c + o];
          CHECK(std::abs(y[(i * (w / 2) + j) * 2 * c + o] - acc) < 1e-13);
        }
      }
  }
}

TEST_CASE("feature decomposition") {
  Rng rng(3);
  CHECK(feature_decomposition(random({4, 4, 192}, rng), random({192, 384}, rng)).shape() == Shape{8, 8, 96});
  CHECK_THROWS_AS(feature_decomposition(random({2, 2, 3}, rng), random({3, 6}, rng)), ShapeError);

  SUBCASE("constant-preserving map keeps a constant field constant") {
    const Tensor y = feature_decomposition(Tensor::full({3, 2, 4}, -1.5), Tensor::full({4, 8}, 0.25));
    for (double v : y.data()) CHECK(v == doctest::Approx(-1.5).epsilon(1e-14));
  }
  SUBCASE("split undoes merge") {
    const Tensor f = random({6, 4, 5}, rng);
    CHECK(testutil::bit_equal(split_patches(merge_patches(f)), f));
  }
  SUBCASE("mutually inverse maps") {
    // W_d: [2c, 4c] has full row rank, so W_d * pinv(W_d) = I and the
    // round trip through decomposition then fusion is the identity.
    const std::size_t c = 3;
    const Tensor wd = random({2 * c, 4 * c}, rng);
    const Mat pinv = to_mat(wd).completeOrthogonalDecomposition().pseudoInverse();
    const Tensor wf = from_mat(pinv);
    const Tensor y = random({3, 5, 2 * c}, rng);
    CHECK(testutil::max_abs_diff(fuse_linear(feature_decomposition(y, wd), wf), y) < 1e-10);

    // The other order is the identity on fields whose merged neighborhoods
    // lie in the row space of W_d.
    const Tensor x = feature_decomposition(random({3, 5, 2 * c}, rng), wd);
    CHECK(testutil::max_abs_diff(feature_decomposition(fuse_linear(x, wf), wd), x) < 1e-10);
  }
}

TEST_CASE("disparity to depth") {
  CHECK(disparity_to_depth(0.5, 0.1, 100.0) == doctest::Approx(1.0 / (0.01 + 9.99 * 0.5)).epsilon(1e-15));
  CHECK(disparity_to_depth(0.5, 0.1, 100.0) == doctest::Approx(0.1998).epsilon(1e-3));
  CHECK(disparity_to_depth(0.0, 0.1, 100.0) == doctest::Approx(100.0));
  CHECK(disparity_to_depth(1.0, 0.1, 100.0) == doctest::Approx(0.1));
  double prev = disparity_to_depth(1e-6, 0.1, 100.0);
  for (int i = 1; i < 1000; ++i) {
    const double d = disparity_to_depth(i / 1000.0, 0.1, 100.0);
    CHECK(d < prev);
    prev = d;
  }
}

TEST_CASE("depth network outputs") {
  Rng rng(4);
  const DepthNet net(NetConfig::desk(), 7);
  const DepthOutputs out = net.forward(random({64, 64, 3}, rng, 0, 1));
  REQUIRE(out.disparities.size() == 4);
  const Shape expected[] = {{16, 16, 1}, {8, 8, 1}, {4, 4, 1}, {2, 2, 1}};
  for (std::size_t s = 0; s < 4; ++s) {
    CHECK(out.disparities[s].shape() == expected[s]);
    CHECK(out.upsampled_disparities[s].shape() == Shape{64, 64, 1});
    for (double v : out.disparities[s].data()) {
      CHECK(v > 0.0);
      CHECK(v < 1.0);
    }
    for (double d : out.depths[s].data()) {
      CHECK(d >= 0.1);
      CHECK(d <= 100.0);
    }
  }
  CHECK(out.encoder_features[3].shape() == Shape{2, 2, 64});
  CHECK(out.decoder_features[3].shape() == Shape{16, 16, 8});
}

TEST_CASE("full configuration parameter count is near 30M") {
  const DepthNet net(NetConfig{}, 0);
  const double count = static_cast<double>(net.parameters().scalar_count());
  CHECK(count >= 24e6);
  CHECK(count <= 36e6);
}

TEST_CASE("zeroed decoder blocks pass the encoder skip through exactly") {
  Rng rng(5);
  DepthNet net(NetConfig::desk(), 3);
  for (std::size_t s = 1; s < kNumStages; ++s) {
    for (auto& block : net.decoder[s]) block.zero_weights();
    fill(net.decompositions[s - 1], 0.0);
  }
  const DepthOutputs out = net.forward(random({32, 32, 3}, rng, 0, 1));
  for (std::size_t s = 1; s < kNumStages; ++s) {
    CHECK(testutil::bit_equal(out.decoder_features[s], out.encoder_features[kNumStages - 1 - s]));
  }
}

TEST_CASE("gradients reach the embedding and every block") {
  Rng rng(6);
  const DepthNet net(NetConfig::desk(), 11);
  const ParamSet params = net.parameters();
  for (const auto& np : params.items()) np.tensor.impl()->requires_grad = true;
  {
    Tape tape;
    // 64x64 keeps the coarsest scan longer than one step, so A matters there too.
    const DepthOutputs out = net.forward(random({64, 64, 3}, rng, 0, 1));
    Tensor loss = Tensor::scalar(0.0);
    for (const auto& d : out.disparities) loss = add(loss, mean(square(d)));
    tape.backward(loss);
  }
  for (const auto& np : params.items()) {
    const auto g = np.tensor.grad();
    INFO(np.name);
    CHECK(std::any_of(g.begin(), g.end(), [](double v) { return v != 0.0 && std::isfinite(v); }));
  }
}

TEST_CASE("rotation from axis-angle") {
  SUBCASE("zero vector is the identity") {
    const PoseTransform p = pose_from_vector(Tensor::zeros({6}));
    const auto m = p.matrix();
    for (std::size_t i = 0; i < 16; ++i) CHECK(m[i] == (i % 5 == 0 ? 1.0 : 0.0));
  }
  SUBCASE("quarter turn about z maps x to y") {
    const Tensor r = axis_angle_to_rotation(Tensor::from({3}, {0, 0, std::numbers::pi / 2}));
    // R * (1,0,0) is the first column.
    CHECK(std::abs(r[0] - 0.0) < 1e-10);
    CHECK(std::abs(r[3] - 1.0) < 1e-10);
    CHECK(std::abs(r[6] - 0.0) < 1e-10);
  }
  SUBCASE("random rotations are orthonormal with unit determinant") {
    Rng rng(7);
    for (int t = 0; t < 50; ++t) {
      const PoseTransform p = pose_from_vector(random({6}, rng, -2, 2));
      const Mat r = to_mat(p.rotation);
      CHECK((r.transpose() * r - Mat::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-6);
      CHECK(std::abs(r.determinant() - 1.0) < 1e-6);
      const auto m = p.matrix();
      CHECK(m[12] == 0.0);
      CHECK(m[13] == 0.0);
      CHECK(m[14] == 0.0);
      CHECK(m[15] == 1.0);
      CHECK(m[3] == p.translation[0]);
    }
  }
}

TEST_CASE("pose network") {
  Rng rng(8);
  PoseNet net(1);
  const Tensor a = random({64, 64, 3}, rng, 0, 1), b = random({64, 64, 3}, rng, 0, 1);
  const Tensor v = net.forward_vector(concat({a, b}, 2));
  CHECK(v.shape() == Shape{6});
  for (double x : v.data()) CHECK(std::abs(x) < 0.1);
  fill(net.head.weight, 0.0);
  fill(net.head.bias, 0.0);
  const auto m = net.forward(a, b).matrix();
  for (std::size_t i = 0; i < 16; ++i) CHECK(m[i] == (i % 5 == 0 ? 1.0 : 0.0));
}
