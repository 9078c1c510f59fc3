#include "mdepth/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "mdepth/params.hpp"

namespace mdepth {

namespace {

constexpr std::array<std::size_t, 5> kShifts{2, 3, 4, 5, 6};  // far (top) to near (bottom)
constexpr std::size_t kFlatBand = 2;

double quantize(double v) { return std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0; }

// Value noise on a lattice with the given spacing, bilinearly interpolated.
std::vector<double> lattice_noise(std::size_t rows, std::size_t cols, std::size_t spacing, Rng& rng) {
  const std::size_t lr = rows / spacing + 2, lc = cols / spacing + 2;
  std::vector<double> lattice(lr * lc);
  for (auto& v : lattice) v = rng.uniform(0.0, 1.0);
  std::vector<double> out(rows * cols);
  const double inv = 1.0 / static_cast<double>(spacing);
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t r0 = r / spacing;
    const double fr = static_cast<double>(r % spacing) * inv;
    for (std::size_t c = 0; c < cols; ++c) {
      const std::size_t c0 = c / spacing;
      const double fc = static_cast<double>(c % spacing) * inv;
      out[r * cols + c] = (1 - fr) * ((1 - fc) * lattice[r0 * lc + c0] + fc * lattice[r0 * lc + c0 + 1]) +
                          fr * ((1 - fc) * lattice[(r0 + 1) * lc + c0] + fc * lattice[(r0 + 1) * lc + c0 + 1]);
    }
  }
  return out;
}

// Fine detail pins the photometric minimum; the coarse octaves keep it
// reachable from far-off disparities.
std::vector<double> texture(std::size_t rows, std::size_t cols, Rng& rng) {
  constexpr std::array<std::pair<std::size_t, double>, 2> kOctaves{{{2, 0.6}, {8, 0.4}}};
  std::vector<double> out(rows * cols, 0.0);
  for (const auto& [spacing, weight] : kOctaves) {
    const auto n = lattice_noise(rows, cols, spacing, rng);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += weight * n[i];
  }
  return out;
}

}  // namespace

std::size_t SyntheticScene::band_of_row(std::size_t row) const {
  const auto it = std::upper_bound(band_starts.begin(), band_starts.end(), row);
  return static_cast<std::size_t>(it - band_starts.begin()) - 1;
}

SyntheticScene make_synthetic_scene(const SyntheticOptions& o) {
  if (o.width < 8 || o.height < 4 * kShifts.size()) throw std::invalid_argument("synthetic scene is too small");
  if (o.frames < 1) throw std::invalid_argument("synthetic scene needs at least one frame");
  Rng rng(o.seed);
  SyntheticScene s;
  CameraModel& cam = s.sequence.camera;
  cam.width = o.width;
  cam.height = o.height;
  cam.fx = cam.fy = 0.75 * static_cast<double>(o.width);
  cam.cx = 0.5 * static_cast<double>(o.width - 1);
  cam.cy = 0.5 * static_cast<double>(o.height - 1);
  const double step = o.static_camera ? 0.0 : s.focal_baseline / cam.fx;

  // Band boundaries on multiples of 4 rows.
  for (std::size_t b = 0; b < kShifts.size(); ++b) {
    const double frac = static_cast<double>(o.height) * static_cast<double>(b) / kShifts.size();
    s.band_starts.push_back(4 * static_cast<std::size_t>(std::lround(frac / 4.0)));
    s.band_shifts.push_back(kShifts[b]);
    s.band_depths.push_back(s.focal_baseline / static_cast<double>(kShifts[b]));
  }

  const std::size_t tex_cols = o.width + (o.frames - 1) * kShifts.back() + 1;
  std::vector<std::vector<double>> textures;  // per band, per channel: [H, tex_cols]
  std::vector<std::array<double, 3>> tints;
  for (std::size_t b = 0; b < kShifts.size(); ++b) {
    std::array<double, 3> tint{rng.uniform(0.5, 1.0), rng.uniform(0.5, 1.0), rng.uniform(0.5, 1.0)};
    tints.push_back(tint);
    for (std::size_t c = 0; c < 3; ++c) textures.push_back(texture(o.height, tex_cols, rng));
  }

  for (std::size_t k = 0; k < o.frames; ++k) {
    std::vector<double> rgb(o.height * o.width * 3), depth(o.height * o.width), textured(o.height * o.width, 1.0);
    for (std::size_t v = 0; v < o.height; ++v) {
      const std::size_t b = s.band_of_row(v);
      const std::size_t offset = o.static_camera ? 0 : k * s.band_shifts[b];
      const bool flat = o.low_texture_patch && b == kFlatBand;
      for (std::size_t u = 0; u < o.width; ++u) {
        const std::size_t px = v * o.width + u;
        for (std::size_t c = 0; c < 3; ++c) {
          const double noise = flat ? 0.5 : textures[b * 3 + c][v * tex_cols + u + offset];
          rgb[px * 3 + c] = quantize(tints[b][c] * (0.15 + 0.85 * noise));
        }
        depth[px] = s.band_depths[b];
        if (flat) textured[px] = 0.0;
      }
    }
    s.sequence.frames.push_back(Tensor::from({o.height, o.width, 3}, std::move(rgb)));
    s.sequence.depths.push_back(Tensor::from({o.height, o.width, 1}, std::move(depth)));
    s.sequence.camera_centers.push_back({static_cast<double>(k) * step, 0.0, 0.0});
    s.textured.push_back(Tensor::from({o.height, o.width, 1}, std::move(textured)));
  }
  return s;
}

}  // namespace mdepth
