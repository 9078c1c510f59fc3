#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <stdexcept>
#include <vector>

#include "mdepth/tensor.hpp"

namespace mdepth {

/// Unreadable, malformed or truncated image/depth file.
class ImageIoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Binary P6 with maxval 255. Values are [H,W,3] in [0,1].
Tensor read_ppm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const Tensor& image);

/// Float map as stored on disk: rows top to bottom, channels interleaved.
struct FloatMap {
  std::size_t width = 0, height = 0, channels = 1;
  std::vector<float> values;
};

/// PFM with scale -1.0 (little-endian), rows stored bottom to top. "Pf" for
/// one channel, "PF" for three.
FloatMap read_pfm_raw(const std::filesystem::path& path);
void write_pfm_raw(const std::filesystem::path& path, const FloatMap& map);

/// Tensor wrappers over the raw form; values pass through float.
Tensor read_pfm(const std::filesystem::path& path);
void write_pfm(const std::filesystem::path& path, const Tensor& map);

/// 8-bit RGB PNG of a [H,W,1] map, min-max normalized through a fixed
/// dark-to-bright colormap.
void write_colormap_png(const std::filesystem::path& path, const Tensor& map);
std::array<unsigned char, 3> colormap(double t);

}  // namespace mdepth
