#include "mdepth/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>

#include "mdepth/ops.hpp"

namespace mdepth {

void CameraModel::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw std::invalid_argument("camera: focal lengths must be positive");
  if (width == 0 || height == 0) throw std::invalid_argument("camera: image size must be non-empty");
}

CameraModel CameraModel::flipped() const {
  CameraModel c = *this;
  c.cx = static_cast<double>(width) - 1.0 - cx;
  return c;
}

CameraModel CameraModel::scaled(double factor) const {
  CameraModel c = *this;
  c.fx *= factor;
  c.fy *= factor;
  c.cx *= factor;
  c.cy *= factor;
  c.width = static_cast<std::size_t>(std::lround(static_cast<double>(width) * factor));
  c.height = static_cast<std::size_t>(std::lround(static_cast<double>(height) * factor));
  return c;
}

std::array<double, 2> project_point(const std::array<double, 3>& p, const CameraModel& cam) {
  return {cam.fx * p[0] / p[2] + cam.cx, cam.fy * p[1] / p[2] + cam.cy};
}

std::array<double, 3> backproject_pixel(double u, double v, double depth, const CameraModel& cam) {
  return {depth * (u - cam.cx) / cam.fx, depth * (v - cam.cy) / cam.fy, depth};
}

PixelCoords project(const Tensor& points, const CameraModel& cam) {
  if (points.rank() < 1 || points.shape().back() != 3) {
    throw_shape_error("project", "expected [..., 3] points, got " + shape_str(points.shape()));
  }
  const std::size_t n = points.numel() / 3;
  Shape coord_shape = points.shape();
  coord_shape.back() = 2;
  Shape mask_shape = points.shape();
  mask_shape.back() = 1;
  std::vector<double> coords(n * 2), valid(n);
  const auto p = points.data();
  for (std::size_t i = 0; i < n; ++i) {
    const double z = p[i * 3 + 2];
    if (z > 0.0) {
      coords[i * 2] = cam.fx * p[i * 3] / z + cam.cx;
      coords[i * 2 + 1] = cam.fy * p[i * 3 + 1] / z + cam.cy;
      valid[i] = 1.0;
    } else {
      coords[i * 2] = -1.0;
      coords[i * 2 + 1] = -1.0;
      valid[i] = 0.0;
    }
  }
  Tensor mask = Tensor::from(std::move(mask_shape), valid);
  Tensor out = Tensor::from(std::move(coord_shape), std::move(coords));
  out = record_op({points}, out, [points, mask, cam, n](std::span<const double> g) {
    auto& gp = points.impl()->ensure_grad();
    const auto p = points.data();
    for (std::size_t i = 0; i < n; ++i) {
      if (mask[i] == 0.0) continue;
      const double x = p[i * 3], y = p[i * 3 + 1], z = p[i * 3 + 2];
      const double gu = g[i * 2], gv = g[i * 2 + 1];
      gp[i * 3] += gu * cam.fx / z;
      gp[i * 3 + 1] += gv * cam.fy / z;
      gp[i * 3 + 2] += -(gu * cam.fx * x + gv * cam.fy * y) / (z * z);
    }
  });
  return {out, mask};
}

Tensor backproject(const Tensor& depth, const CameraModel& cam) {
  if (depth.rank() != 3 || depth.dim(2) != 1) throw_shape_error("backproject", "expected [H,W,1] depth, got " + shape_str(depth.shape()));
  const std::size_t h = depth.dim(0), w = depth.dim(1);
  std::vector<double> rays(h * w * 3);
  for (std::size_t v = 0; v < h; ++v)
    for (std::size_t u = 0; u < w; ++u) {
      const std::size_t i = v * w + u;
      rays[i * 3] = (static_cast<double>(u) - cam.cx) / cam.fx;
      rays[i * 3 + 1] = (static_cast<double>(v) - cam.cy) / cam.fy;
      rays[i * 3 + 2] = 1.0;
    }
  return mul(depth, Tensor::from({h, w, 3}, std::move(rays)));
}

Tensor transform_points(const Tensor& points, const PoseTransform& pose) {
  if (points.rank() < 1 || points.shape().back() != 3) {
    throw_shape_error("transform_points", "expected [..., 3] points, got " + shape_str(points.shape()));
  }
  const Shape shape = points.shape();
  const Tensor flat = reshape(points, {points.numel() / 3, 3});
  return reshape(add(matmul(flat, transpose(pose.rotation)), pose.translation), shape);
}

PixelCoords warp_coords(const Tensor& depth, const PoseTransform& pose, const CameraModel& cam) {
  const Tensor points = backproject(depth, cam);
  PixelCoords moved = project(transform_points(points, pose), cam);
  // Grid plus the displacement of the projection. Analytically the same as
  // projecting the moved points, but an identity pose gives a displacement of
  // exactly zero instead of a round trip with rounding error.
  Tensor reference;
  {
    NoGradGuard no_grad;  // constant in depth
    reference = project(points, cam).coords;
  }
  const std::size_t h = depth.dim(0), w = depth.dim(1);
  std::vector<double> grid(h * w * 2);
  for (std::size_t i = 0; i < h * w; ++i) {
    grid[i * 2] = static_cast<double>(i % w);
    grid[i * 2 + 1] = static_cast<double>(i / w);
  }
  const Tensor offset = sub(Tensor::from({h, w, 2}, std::move(grid)), reference);
  moved.coords = add(moved.coords, offset);
  return moved;
}

Sampled bilinear_sample(const Tensor& image, const Tensor& coords) {
  if (image.rank() != 3) throw_shape_error("bilinear_sample", "expected [H,W,C] image, got " + shape_str(image.shape()));
  if (coords.rank() != 3 || coords.dim(2) != 2) throw_shape_error("bilinear_sample", "expected [H,W,2] coords, got " + shape_str(coords.shape()));
  const std::size_t h = image.dim(0), w = image.dim(1), c = image.dim(2);
  const std::size_t oh = coords.dim(0), ow = coords.dim(1), n = oh * ow;

  struct Taps {
    std::size_t x0, x1, y0, y1;
    double fx, fy;
    bool u_inside, v_inside;
  };
  auto taps = std::make_shared<std::vector<Taps>>(n);
  const auto cd = coords.data();
  const double max_u = static_cast<double>(w - 1), max_v = static_cast<double>(h - 1);
  std::vector<double> valid(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double u = cd[i * 2], v = cd[i * 2 + 1];
    const bool u_inside = std::isfinite(u) && u >= 0.0 && u <= max_u;
    const bool v_inside = std::isfinite(v) && v >= 0.0 && v <= max_v;
    const double uc = std::isfinite(u) ? std::clamp(u, 0.0, max_u) : 0.0;
    const double vc = std::isfinite(v) ? std::clamp(v, 0.0, max_v) : 0.0;
    const auto x0 = std::min(static_cast<std::size_t>(std::floor(uc)), w - 1);
    const auto y0 = std::min(static_cast<std::size_t>(std::floor(vc)), h - 1);
    (*taps)[i] = {x0, std::min(x0 + 1, w - 1), y0, std::min(y0 + 1, h - 1), uc - static_cast<double>(x0),
                  vc - static_cast<double>(y0), u_inside, v_inside};
    valid[i] = u_inside && v_inside ? 1.0 : 0.0;
  }

  std::vector<double> out(n * c);
  const auto img = image.data();
  for (std::size_t i = 0; i < n; ++i) {
    const Taps& t = (*taps)[i];
    const double w00 = (1 - t.fx) * (1 - t.fy), w01 = t.fx * (1 - t.fy), w10 = (1 - t.fx) * t.fy, w11 = t.fx * t.fy;
    for (std::size_t j = 0; j < c; ++j) {
      out[i * c + j] = w00 * img[(t.y0 * w + t.x0) * c + j] + w01 * img[(t.y0 * w + t.x1) * c + j] +
                       w10 * img[(t.y1 * w + t.x0) * c + j] + w11 * img[(t.y1 * w + t.x1) * c + j];
    }
  }
  Tensor result = Tensor::from({oh, ow, c}, std::move(out));
  result = record_op({image, coords}, result, [image, coords, taps, w, c](std::span<const double> g) {
    const auto img = image.data();
    double* gi = image.requires_grad() ? image.impl()->ensure_grad().data() : nullptr;
    double* gc = coords.requires_grad() ? coords.impl()->ensure_grad().data() : nullptr;
    for (std::size_t i = 0; i < taps->size(); ++i) {
      const Taps& t = (*taps)[i];
      const std::size_t p00 = (t.y0 * w + t.x0) * c, p01 = (t.y0 * w + t.x1) * c;
      const std::size_t p10 = (t.y1 * w + t.x0) * c, p11 = (t.y1 * w + t.x1) * c;
      double du = 0.0, dv = 0.0;
      for (std::size_t j = 0; j < c; ++j) {
        const double gv = g[i * c + j];
        if (gi) {
          gi[p00 + j] += gv * (1 - t.fx) * (1 - t.fy);
          gi[p01 + j] += gv * t.fx * (1 - t.fy);
          gi[p10 + j] += gv * (1 - t.fx) * t.fy;
          gi[p11 + j] += gv * t.fx * t.fy;
        }
        du += gv * ((1 - t.fy) * (img[p01 + j] - img[p00 + j]) + t.fy * (img[p11 + j] - img[p10 + j]));
        dv += gv * ((1 - t.fx) * (img[p10 + j] - img[p00 + j]) + t.fx * (img[p11 + j] - img[p01 + j]));
      }
      // A clamped axis is flat, the other one still moves the sample.
      if (gc && t.u_inside) gc[i * 2] += du;
      if (gc && t.v_inside) gc[i * 2 + 1] += dv;
    }
  });
  return {result, Tensor::from({oh, ow, 1}, std::move(valid))};
}

Sampled synthesize_view(const Tensor& source, const Tensor& depth, const PoseTransform& pose,
                        const CameraModel& cam) {
  const PixelCoords warp = warp_coords(depth, pose, cam);
  const Tensor coords = reshape(warp.coords, {depth.dim(0), depth.dim(1), 2});
  Sampled s = bilinear_sample(source, coords);
  s.valid = mul(s.valid, reshape(warp.valid, {depth.dim(0), depth.dim(1), 1}));
  return s;
}

}  // namespace mdepth
