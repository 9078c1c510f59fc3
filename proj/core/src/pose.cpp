#include "mdepth/pose.hpp"

#include <cmath>

#include "mdepth/ops.hpp"

namespace mdepth {

namespace {

using Mat3 = std::array<double, 9>;

Mat3 matmul3(const Mat3& a, const Mat3& b) {
  Mat3 c{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) c[i * 3 + j] += a[i * 3 + k] * b[k * 3 + j];
  return c;
}

Mat3 skew(double x, double y, double z) { return {0, -z, y, z, 0, -x, -y, x, 0}; }

// Coefficients of R = I + a K + b K^2 and their derivatives divided by theta.
struct RodriguesCoeffs {
  double a, b, a_t, b_t;
};

RodriguesCoeffs coeffs(double theta) {
  const double t2 = theta * theta;
  if (theta < 1e-3) {
    const double t4 = t2 * t2;
    return {1.0 - t2 / 6.0 + t4 / 120.0, 0.5 - t2 / 24.0 + t4 / 720.0, -1.0 / 3.0 + t2 / 30.0 - t4 / 840.0,
            -1.0 / 12.0 + t2 / 180.0 - t4 / 6720.0};
  }
  const double s = std::sin(theta), c = std::cos(theta);
  return {s / theta, (1.0 - c) / t2, (theta * c - s) / (t2 * theta), (theta * s - 2.0 * (1.0 - c)) / (t2 * t2)};
}

}  // namespace

std::array<double, 16> PoseTransform::matrix() const {
  std::array<double, 16> m{};
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) m[i * 4 + j] = rotation[i * 3 + j];
    m[i * 4 + 3] = translation[i];
  }
  m[15] = 1.0;
  return m;
}

PoseTransform PoseTransform::identity() { return from_values({1, 0, 0, 0, 1, 0, 0, 0, 1}, {0, 0, 0}); }

PoseTransform PoseTransform::from_values(const std::array<double, 9>& rotation,
                                         const std::array<double, 3>& translation) {
  return {Tensor::from({3, 3}, {rotation.begin(), rotation.end()}),
          Tensor::from({3}, {translation.begin(), translation.end()})};
}

PoseTransform PoseTransform::translation_only(double tx, double ty, double tz) {
  return from_values({1, 0, 0, 0, 1, 0, 0, 0, 1}, {tx, ty, tz});
}

Tensor axis_angle_to_rotation(const Tensor& axis_angle) {
  if (axis_angle.numel() != 3) throw_shape_error("axis_angle_to_rotation", "expected 3 values, got " + shape_str(axis_angle.shape()));
  const double r[3] = {axis_angle[0], axis_angle[1], axis_angle[2]};
  const double theta = std::sqrt(r[0] * r[0] + r[1] * r[1] + r[2] * r[2]);
  const RodriguesCoeffs k = coeffs(theta);
  const Mat3 kx = skew(r[0], r[1], r[2]);
  const Mat3 kx2 = matmul3(kx, kx);
  std::vector<double> rot(9);
  for (int i = 0; i < 9; ++i) rot[i] = (i % 4 == 0 ? 1.0 : 0.0) + k.a * kx[i] + k.b * kx2[i];
  Tensor result = Tensor::from({3, 3}, std::move(rot));
  return record_op({axis_angle}, result, [axis_angle, r0 = r[0], r1 = r[1], r2 = r[2], k, kx, kx2](std::span<const double> g) {
    const double r[3] = {r0, r1, r2};
    auto& gr = axis_angle.impl()->ensure_grad();
    for (int i = 0; i < 3; ++i) {
      const Mat3 e = skew(i == 0, i == 1, i == 2);
      const Mat3 ek = matmul3(e, kx), ke = matmul3(kx, e);
      double s = 0.0;
      for (int j = 0; j < 9; ++j) {
        const double d = k.a_t * r[i] * kx[j] + k.a * e[j] + k.b_t * r[i] * kx2[j] + k.b * (ek[j] + ke[j]);
        s += g[j] * d;
      }
      gr[i] += s;
    }
  });
}

PoseTransform pose_from_vector(const Tensor& vec6) {
  if (vec6.numel() != 6) throw_shape_error("pose_from_vector", "expected 6 values, got " + shape_str(vec6.shape()));
  const Tensor flat = reshape(vec6, {6});
  return {axis_angle_to_rotation(slice(flat, 0, 0, 3)), slice(flat, 0, 3, 3)};
}

}  // namespace mdepth
