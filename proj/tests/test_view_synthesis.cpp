#include <doctest.h>

#include "mdepth/dataset.hpp"
#include "mdepth/geometry.hpp"
#include "mdepth/gradcheck.hpp"
#include "mdepth/ops.hpp"
#include "mdepth/synthetic.hpp"
#include "test_util.hpp"

using namespace mdepth;
using testutil::random;

namespace {

CameraModel camera(double fx, double fy, double cx, double cy, std::size_t w, std::size_t h) {
  CameraModel c;
  c.fx = fx;
  c.fy = fy;
  c.cx = cx;
  c.cy = cy;
  c.width = w;
  c.height = h;
  return c;
}

const CameraModel kCam = camera(100.0, 90.0, 32.0, 24.0, 64, 48);

double oracle_sample(const Tensor& img, double u, double v, std::size_t ch) {
  const std::size_t h = img.dim(0), w = img.dim(1), c = img.dim(2);
  u = std::clamp(u, 0.0, static_cast<double>(w - 1));
  v = std::clamp(v, 0.0, static_cast<double>(h - 1));
  const auto x0 = static_cast<std::size_t>(std::floor(u)), y0 = static_cast<std::size_t>(std::floor(v));
  const std::size_t x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
  const double a = u - x0, b = v - y0;
  auto at = [&](std::size_t y, std::size_t x) { return img[(y * w + x) * c + ch]; };
  return (1 - a) * (1 - b) * at(y0, x0) + a * (1 - b) * at(y0, x1) + (1 - a) * b * at(y1, x0) + a * b * at(y1, x1);
}

}  // namespace

TEST_CASE("projection examples") {
  const auto c = project_point({0, 0, 5}, kCam);
  CHECK(c[0] == 32.0);
  CHECK(c[1] == 24.0);
  CHECK(project_point({1, 0, 1}, kCam)[0] == 132.0);
  Rng rng(1);
  for (int t = 0; t < 100; ++t) {
    const std::array<double, 3> p{rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(0.1, 10)};
    const auto a = project_point(p, kCam), b = project_point({2 * p[0], 2 * p[1], 2 * p[2]}, kCam);
    CHECK(std::abs(a[0] - b[0]) < 1e-12);
    CHECK(std::abs(a[1] - b[1]) < 1e-12);
  }
  const auto q = backproject_pixel(kCam.cx, kCam.cy, 7.0, kCam);
  CHECK(q == std::array<double, 3>{0, 0, 7});
}

TEST_CASE("points at or behind the camera are masked") {
  const Tensor pts = Tensor::from({3, 3}, {1, 2, 3, 1, 2, 0, 1, 2, -4});
  const PixelCoords pc = project(pts, kCam);
  CHECK(pc.valid[0] == 1.0);
  CHECK(pc.valid[1] == 0.0);
  CHECK(pc.valid[2] == 0.0);
  for (double v : pc.coords.data()) CHECK(std::isfinite(v));
}

TEST_CASE("project after backproject is the identity over the pixel grid") {
  Rng rng(2);
  for (int draw = 0; draw < 10; ++draw) {
    const Tensor depth = random({48, 64, 1}, rng, 0.1, 100.0);
    const PixelCoords pc = project(backproject(depth, kCam), kCam);
    double err = 0.0;
    for (std::size_t v = 0; v < 48; ++v)
      for (std::size_t u = 0; u < 64; ++u) {
        const std::size_t i = v * 64 + u;
        err = std::max({err, std::abs(pc.coords[i * 2] - u), std::abs(pc.coords[i * 2 + 1] - v)});
      }
    CHECK(err < 1e-10);
  }
}

TEST_CASE("identity pose warps every pixel onto itself") {
  Rng rng(3);
  const Tensor depth = random({48, 64, 1}, rng, 0.5, 20.0);
  const PixelCoords pc = warp_coords(depth, PoseTransform::identity(), kCam);
  for (std::size_t i = 0; i < 48 * 64; ++i) {
    CHECK(pc.coords[i * 2] == static_cast<double>(i % 64));
    CHECK(pc.coords[i * 2 + 1] == static_cast<double>(i / 64));
  }
  const Tensor img = random({48, 64, 3}, rng);
  const Sampled s = synthesize_view(img, depth, PoseTransform::identity(), kCam);
  CHECK(testutil::bit_equal(s.image, img));
}

TEST_CASE("sideways translation shifts by fx * delta / D") {
  const double delta = 0.3;
  const Tensor depth = Tensor::from({1, 3, 1}, {2.0, 5.0, 0.75});
  const PixelCoords pc = warp_coords(depth, PoseTransform::translation_only(delta, 0, 0), kCam);
  for (std::size_t u = 0; u < 3; ++u) {
    CHECK(pc.coords[u * 2] - u == doctest::Approx(kCam.fx * delta / depth[u]).epsilon(1e-14));
    CHECK(pc.coords[u * 2 + 1] == doctest::Approx(0.0));
  }
}

TEST_CASE("forward translation moves pixels radially outward") {
  const CameraModel cam = camera(50.0, 50.0, 2.0, 1.0, 5, 3);
  const Tensor depth = Tensor::full({3, 5, 1}, 2.0);
  const PixelCoords pc = warp_coords(depth, PoseTransform::translation_only(0, 0, -1), cam);
  for (std::size_t v = 0; v < 3; ++v)
    for (std::size_t u = 0; u < 5; ++u) {
      const std::size_t i = v * 5 + u;
      CHECK(pc.coords[i * 2] - cam.cx == doctest::Approx(2.0 * (u - cam.cx)));
      CHECK(pc.coords[i * 2 + 1] - cam.cy == doctest::Approx(2.0 * (v - cam.cy)));
    }
  CHECK(pc.coords[7 * 2] == 2.0);
  CHECK(pc.coords[7 * 2 + 1] == 1.0);
}

TEST_CASE("bilinear sampling") {
  Rng rng(4);
  const Tensor img = random({6, 7, 2}, rng);
  SUBCASE("integer coordinates read exact pixels") {
    const Tensor coords = Tensor::from({1, 2, 2}, {3, 2, 6, 5});
    const Sampled s = bilinear_sample(img, coords);
    CHECK(s.image[0] == img[(2 * 7 + 3) * 2]);
    CHECK(s.image[3] == img[(5 * 7 + 6) * 2 + 1]);
    CHECK(s.valid[0] == 1.0);
    CHECK(s.valid[1] == 1.0);
  }
  SUBCASE("midpoint on a ramp") {
    std::vector<double> ramp(4 * 5);
    for (std::size_t i = 0; i < ramp.size(); ++i) ramp[i] = static_cast<double>(i % 5) * 2.0;
    const Sampled s = bilinear_sample(Tensor::from({4, 5, 1}, ramp), Tensor::from({1, 1, 2}, {2.5, 1.0}));
    CHECK(s.image[0] == 5.0);
  }
  SUBCASE("matches a per-pixel scalar oracle") {
    const Tensor coords = random({5, 4, 2}, rng, -1.0, 7.5);
    const Sampled s = bilinear_sample(img, coords);
    for (std::size_t i = 0; i < 20; ++i) {
      const double u = coords[i * 2], v = coords[i * 2 + 1];
      for (std::size_t ch = 0; ch < 2; ++ch) CHECK(std::abs(s.image[i * 2 + ch] - oracle_sample(img, u, v, ch)) < 1e-14);
      const bool inside = u >= 0 && u <= 6 && v >= 0 && v <= 5;
      CHECK(s.valid[i] == (inside ? 1.0 : 0.0));
    }
  }
  SUBCASE("weights sum to one") {
    const Tensor flat = Tensor::full({6, 7, 1}, 0.37);
    const Sampled s = bilinear_sample(flat, random({8, 8, 2}, rng, 0.0, 5.0));
    for (double v : s.image.data()) CHECK(std::abs(v - 0.37) < 1e-12);
  }
  SUBCASE("a clamped axis keeps the gradient of the other one") {
    Tensor coords = Tensor::from({1, 1, 2}, {-0.5, 2.3}, true);
    const Tensor ramp_v = Tensor::from({4, 3, 1}, {0, 0, 0, 1, 1, 1, 2, 2, 2, 3, 3, 3});
    const Sampled s = bilinear_sample(ramp_v, coords);
    CHECK(s.valid[0] == 0.0);
    CHECK(s.image[0] == doctest::Approx(2.3));
    Tape tape;
    tape.backward(sum(bilinear_sample(ramp_v, coords).image));
    CHECK(coords.grad()[0] == 0.0);
    CHECK(coords.grad()[1] == doctest::Approx(1.0));
  }
}

TEST_CASE("sampler gradient matches finite differences away from integers") {
  Rng rng(5);
  Tensor img = random({5, 6, 2}, rng, 0, 1, true);
  std::vector<double> c;
  for (int i = 0; i < 12; ++i) {
    c.push_back(std::floor(rng.uniform(0, 4.99)) + rng.uniform(0.1, 0.9));
    c.push_back(std::floor(rng.uniform(0, 3.99)) + rng.uniform(0.1, 0.9));
  }
  Tensor coords = Tensor::from({3, 4, 2}, c, true);
  CHECK(gradcheck([&] { return bilinear_sample(img, coords).image; }, {img, coords}) < 1e-5);
}

TEST_CASE("warping a synthetic scene with true depth and pose reconstructs the target") {
  for (bool low_texture : {false, true}) {
    SyntheticOptions opt;
    opt.frames = 6;
    opt.low_texture_patch = low_texture;
    const SyntheticScene scene = make_synthetic_scene(opt);
    for (const FrameTriplet& t : make_triplets(scene.sequence)) {
      REQUIRE(t.poses.has_value());
      for (std::size_t k = 0; k < 2; ++k) {
        const Tensor& source = t.frames[k == 0 ? 0 : 2];
        const Sampled s = synthesize_view(source, t.depth, (*t.poses)[k], t.camera);
        double err = 0.0;
        std::size_t valid = 0;
        for (std::size_t i = 0; i < s.valid.numel(); ++i) {
          if (s.valid[i] == 0.0) continue;
          ++valid;
          for (std::size_t ch = 0; ch < 3; ++ch) err = std::max(err, std::abs(s.image[i * 3 + ch] - t.frames[1][i * 3 + ch]));
        }
        CHECK(valid > s.valid.numel() / 2);
        CHECK(err < 1e-6);
      }
    }
  }
}

TEST_CASE("flipped camera mirrors the principal point") {
  const CameraModel f = kCam.flipped();
  CHECK(f.cx == 63.0 - 32.0);
  CHECK(f.fx == kCam.fx);
  CHECK_THROWS_AS(camera(0, 1, 0, 0, 1, 1).validate(), std::invalid_argument);
}
