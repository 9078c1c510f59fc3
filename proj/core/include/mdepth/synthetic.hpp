#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "mdepth/dataset.hpp"

namespace mdepth {

// A camera sliding sideways past horizontal bands of fronto-parallel planes.
// Each band's depth is chosen so that its image moves by a whole number of
// pixels per frame, which makes bilinear warping with the true depth and pose
// reproduce a frame exactly.

struct SyntheticOptions {
  std::size_t width = 64;
  std::size_t height = 64;
  std::size_t frames = 20;
  std::uint64_t seed = 0;
  bool low_texture_patch = false;  // middle band becomes a flat color
  bool static_camera = false;      // every frame identical
};

struct SyntheticScene {
  FrameSequence sequence;                 // frames, camera, depths, camera centers
  std::vector<Tensor> textured;           // [H,W,1] per frame, 0 on the flat patch
  std::vector<std::size_t> band_starts;   // first row of each band, ascending
  std::vector<std::size_t> band_shifts;   // pixels of motion per frame
  std::vector<double> band_depths;
  double focal_baseline = 12.0;           // fx times the per-frame camera step

  std::size_t band_of_row(std::size_t row) const;
};

SyntheticScene make_synthetic_scene(const SyntheticOptions& options);

}  // namespace mdepth
