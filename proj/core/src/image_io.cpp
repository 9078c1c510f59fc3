#include "mdepth/image_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <png.h>
#include <sstream>
#include <string>

namespace mdepth {

namespace {

static_assert(std::endian::native == std::endian::little, "PFM and checkpoint IO assume a little-endian host");

std::string read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ImageIoError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Reads one whitespace-delimited header token, skipping '#' comments.
std::string next_token(const std::string& buf, std::size_t& pos) {
  for (;;) {
    while (pos < buf.size() && std::isspace(static_cast<unsigned char>(buf[pos]))) ++pos;
    if (pos < buf.size() && buf[pos] == '#') {
      while (pos < buf.size() && buf[pos] != '\n') ++pos;
      continue;
    }
    break;
  }
  const std::size_t start = pos;
  while (pos < buf.size() && !std::isspace(static_cast<unsigned char>(buf[pos]))) ++pos;
  return buf.substr(start, pos - start);
}

std::size_t parse_dim(const std::string& tok, const std::filesystem::path& path) {
  std::size_t used = 0;
  long long v = 0;
  try {
    v = std::stoll(tok, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != tok.size() || v <= 0) throw ImageIoError("bad header field '" + tok + "' in '" + path.string() + "'");
  return static_cast<std::size_t>(v);
}

void write_all(const std::filesystem::path& path, const std::string& header, const void* data, std::size_t bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ImageIoError("cannot write '" + path.string() + "'");
  out << header;
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(bytes));
  if (!out) throw ImageIoError("write failed for '" + path.string() + "'");
}

}  // namespace

Tensor read_ppm(const std::filesystem::path& path) {
  const std::string buf = read_all(path);
  std::size_t pos = 0;
  if (next_token(buf, pos) != "P6") throw ImageIoError("'" + path.string() + "' is not a binary PPM (P6)");
  const std::size_t w = parse_dim(next_token(buf, pos), path);
  const std::size_t h = parse_dim(next_token(buf, pos), path);
  if (parse_dim(next_token(buf, pos), path) != 255) throw ImageIoError("only maxval 255 PPM is supported");
  ++pos;  // single whitespace byte before the raster
  if (buf.size() < pos + w * h * 3) throw ImageIoError("truncated PPM raster in '" + path.string() + "'");
  std::vector<double> values(w * h * 3);
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = static_cast<unsigned char>(buf[pos + i]) / 255.0;
  return Tensor::from({h, w, 3}, std::move(values));
}

void write_ppm(const std::filesystem::path& path, const Tensor& image) {
  if (image.rank() != 3 || image.dim(2) != 3) throw_shape_error("write_ppm", "expected [H,W,3], got " + shape_str(image.shape()));
  std::vector<unsigned char> bytes(image.numel());
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    bytes[i] = static_cast<unsigned char>(std::lround(std::clamp(image[i], 0.0, 1.0) * 255.0));
  }
  const std::string header = "P6\n" + std::to_string(image.dim(1)) + " " + std::to_string(image.dim(0)) + "\n255\n";
  write_all(path, header, bytes.data(), bytes.size());
}

FloatMap read_pfm_raw(const std::filesystem::path& path) {
  const std::string buf = read_all(path);
  std::size_t pos = 0;
  FloatMap map;
  const std::string magic = next_token(buf, pos);
  if (magic == "Pf") {
    map.channels = 1;
  } else if (magic == "PF") {
    map.channels = 3;
  } else {
    throw ImageIoError("'" + path.string() + "' is not a PFM file");
  }
  map.width = parse_dim(next_token(buf, pos), path);
  map.height = parse_dim(next_token(buf, pos), path);
  const std::string scale_tok = next_token(buf, pos);
  double scale = 0.0;
  try {
    scale = std::stod(scale_tok);
  } catch (const std::exception&) {
    throw ImageIoError("bad PFM scale '" + scale_tok + "'");
  }
  if (!(scale < 0.0)) throw ImageIoError("big-endian PFM is not supported");
  ++pos;
  const std::size_t row = map.width * map.channels;
  if (buf.size() < pos + row * map.height * sizeof(float)) {
    throw ImageIoError("truncated PFM raster in '" + path.string() + "'");
  }
  map.values.resize(row * map.height);
  for (std::size_t y = 0; y < map.height; ++y) {
    const std::size_t src = pos + (map.height - 1 - y) * row * sizeof(float);
    std::memcpy(map.values.data() + y * row, buf.data() + src, row * sizeof(float));
  }
  return map;
}

void write_pfm_raw(const std::filesystem::path& path, const FloatMap& map) {
  if (map.channels != 1 && map.channels != 3) throw ImageIoError("PFM needs 1 or 3 channels");
  const std::size_t row = map.width * map.channels;
  if (map.values.size() != row * map.height) throw ImageIoError("PFM value count does not match its size");
  std::vector<float> flipped(map.values.size());
  for (std::size_t y = 0; y < map.height; ++y) {
    std::memcpy(flipped.data() + (map.height - 1 - y) * row, map.values.data() + y * row, row * sizeof(float));
  }
  const std::string header = std::string(map.channels == 1 ? "Pf" : "PF") + "\n" + std::to_string(map.width) + " " +
                             std::to_string(map.height) + "\n-1.0\n";
  write_all(path, header, flipped.data(), flipped.size() * sizeof(float));
}

Tensor read_pfm(const std::filesystem::path& path) {
  const FloatMap map = read_pfm_raw(path);
  return Tensor::from({map.height, map.width, map.channels}, std::vector<double>(map.values.begin(), map.values.end()));
}

void write_pfm(const std::filesystem::path& path, const Tensor& map) {
  if (map.rank() != 3 || (map.dim(2) != 1 && map.dim(2) != 3)) {
    throw_shape_error("write_pfm", "expected [H,W,1] or [H,W,3], got " + shape_str(map.shape()));
  }
  FloatMap raw{map.dim(1), map.dim(0), map.dim(2), {}};
  raw.values.assign(map.data().begin(), map.data().end());
  write_pfm_raw(path, raw);
}

std::array<unsigned char, 3> colormap(double t) {
  // Piecewise-linear approximation of magma.
  static constexpr std::array<std::array<double, 3>, 6> kStops{{
      {0.001, 0.000, 0.014},
      {0.232, 0.059, 0.437},
      {0.550, 0.161, 0.506},
      {0.868, 0.288, 0.409},
      {0.994, 0.624, 0.427},
      {0.987, 0.991, 0.750},
  }};
  t = std::clamp(std::isfinite(t) ? t : 0.0, 0.0, 1.0) * (kStops.size() - 1);
  const std::size_t i = std::min<std::size_t>(static_cast<std::size_t>(t), kStops.size() - 2);
  const double f = t - static_cast<double>(i);
  std::array<unsigned char, 3> rgb{};
  for (std::size_t c = 0; c < 3; ++c) {
    const double v = kStops[i][c] + f * (kStops[i + 1][c] - kStops[i][c]);
    rgb[c] = static_cast<unsigned char>(std::lround(v * 255.0));
  }
  return rgb;
}

void write_colormap_png(const std::filesystem::path& path, const Tensor& map) {
  if (map.rank() != 3 || map.dim(2) != 1) throw_shape_error("write_colormap_png", "expected [H,W,1], got " + shape_str(map.shape()));
  const std::size_t h = map.dim(0), w = map.dim(1);
  const auto [lo_it, hi_it] = std::minmax_element(map.data().begin(), map.data().end());
  const double lo = *lo_it, span = *hi_it - *lo_it;
  std::vector<unsigned char> pixels(h * w * 3);
  for (std::size_t i = 0; i < h * w; ++i) {
    const auto rgb = colormap(span > 0.0 ? (map[i] - lo) / span : 0.0);
    std::copy(rgb.begin(), rgb.end(), pixels.begin() + 3 * i);
  }

  std::unique_ptr<std::FILE, int (*)(std::FILE*)> fp(std::fopen(path.c_str(), "wb"), &std::fclose);
  if (!fp) throw ImageIoError("cannot write '" + path.string() + "'");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, nullptr);
    throw ImageIoError("libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw ImageIoError("libpng failed writing '" + path.string() + "'");
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (std::size_t y = 0; y < h; ++y) png_write_row(png, pixels.data() + y * w * 3);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace mdepth
