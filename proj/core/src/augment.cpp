#include "mdepth/augment.hpp"

#include <algorithm>
#include <cmath>

namespace mdepth {

namespace {

std::array<double, 3> rgb_to_hsv(double r, double g, double b) {
  const double mx = std::max({r, g, b}), mn = std::min({r, g, b}), d = mx - mn;
  double h = 0.0;
  if (d > 0.0) {
    if (mx == r) {
      h = std::fmod((g - b) / d, 6.0);
    } else if (mx == g) {
      h = (b - r) / d + 2.0;
    } else {
      h = (r - g) / d + 4.0;
    }
    h /= 6.0;
    if (h < 0.0) h += 1.0;
  }
  return {h, mx > 0.0 ? d / mx : 0.0, mx};
}

std::array<double, 3> hsv_to_rgb(double h, double s, double v) {
  h = h - std::floor(h);
  const double c = v * s, hp = h * 6.0, x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0)), m = v - c;
  double r = 0, g = 0, b = 0;
  switch (static_cast<int>(hp) % 6) {
    case 0: r = c, g = x; break;
    case 1: r = x, g = c; break;
    case 2: g = c, b = x; break;
    case 3: g = x, b = c; break;
    case 4: r = x, b = c; break;
    default: r = c, b = x; break;
  }
  return {r + m, g + m, b + m};
}

double gray(double r, double g, double b) { return 0.299 * r + 0.587 * g + 0.114 * b; }

}  // namespace

AugmentDraw AugmentDraw::sample(Rng& rng) {
  AugmentDraw d;
  d.flip = rng.bernoulli(kFlipProbability);
  d.jitter = rng.bernoulli(kJitterProbability);
  // Factors are drawn unconditionally so the stream length is fixed.
  d.brightness = rng.uniform(1.0 - kJitterStrength, 1.0 + kJitterStrength);
  d.contrast = rng.uniform(1.0 - kJitterStrength, 1.0 + kJitterStrength);
  d.saturation = rng.uniform(1.0 - kJitterStrength, 1.0 + kJitterStrength);
  d.hue = rng.uniform(-kHueStrength, kHueStrength);
  return d;
}

Tensor flip_horizontal(const Tensor& image) {
  if (image.rank() != 3) throw_shape_error("flip_horizontal", "expected [H,W,C], got " + shape_str(image.shape()));
  const std::size_t h = image.dim(0), w = image.dim(1), c = image.dim(2);
  std::vector<double> out(image.numel());
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t k = 0; k < c; ++k) out[(y * w + x) * c + k] = image[(y * w + (w - 1 - x)) * c + k];
  return Tensor::from(image.shape(), std::move(out));
}

Tensor color_jitter(const Tensor& image, const AugmentDraw& draw) {
  if (image.rank() != 3 || image.dim(2) != 3) throw_shape_error("color_jitter", "expected [H,W,3], got " + shape_str(image.shape()));
  const std::size_t n = image.numel() / 3;
  std::vector<double> px(image.data().begin(), image.data().end());
  for (auto& v : px) v = std::clamp(v * draw.brightness, 0.0, 1.0);

  double mean_gray = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean_gray += gray(px[3 * i], px[3 * i + 1], px[3 * i + 2]);
  mean_gray /= static_cast<double>(n);
  for (auto& v : px) v = std::clamp(mean_gray + draw.contrast * (v - mean_gray), 0.0, 1.0);

  for (std::size_t i = 0; i < n; ++i) {
    const double g = gray(px[3 * i], px[3 * i + 1], px[3 * i + 2]);
    for (std::size_t k = 0; k < 3; ++k) px[3 * i + k] = std::clamp(g + draw.saturation * (px[3 * i + k] - g), 0.0, 1.0);
  }

  if (draw.hue != 0.0) {
    for (std::size_t i = 0; i < n; ++i) {
      const auto hsv = rgb_to_hsv(px[3 * i], px[3 * i + 1], px[3 * i + 2]);
      const auto rgb = hsv_to_rgb(hsv[0] + draw.hue, hsv[1], hsv[2]);
      for (std::size_t k = 0; k < 3; ++k) px[3 * i + k] = std::clamp(rgb[k], 0.0, 1.0);
    }
  }
  return Tensor::from(image.shape(), std::move(px));
}

AugmentedTriplet augment(const std::array<Tensor, 3>& frames, const CameraModel& camera, const AugmentDraw& draw) {
  AugmentedTriplet out;
  out.camera = draw.flip ? camera.flipped() : camera;
  for (std::size_t i = 0; i < 3; ++i) {
    out.loss_frames[i] = draw.flip ? flip_horizontal(frames[i]) : frames[i];
    out.network_frames[i] = draw.jitter ? color_jitter(out.loss_frames[i], draw) : out.loss_frames[i];
  }
  return out;
}

AugmentedTriplet augment(const std::array<Tensor, 3>& frames, const CameraModel& camera, std::uint64_t seed) {
  Rng rng(seed);
  return augment(frames, camera, AugmentDraw::sample(rng));
}

}  // namespace mdepth
