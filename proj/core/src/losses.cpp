#include "mdepth/losses.hpp"

#include <cmath>
#include <stdexcept>

#include "mdepth/ops.hpp"

namespace mdepth {

void LossConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("loss: alpha must lie in [0, 1]");
  if (smoothness_weight < 0.0) throw std::invalid_argument("loss: smoothness weight must be non-negative");
  if (ssim_window == 0 || ssim_window % 2 == 0) throw std::invalid_argument("loss: ssim window must be odd");
}

Tensor ssim(const Tensor& a, const Tensor& b, const LossConfig& cfg) {
  if (a.shape() != b.shape()) throw_shape_error("ssim", a.shape(), b.shape());
  const std::size_t r = cfg.ssim_window / 2;
  auto pool = [&](const Tensor& t) { return avg_pool2d(pad(t, r, r, r, r, PadMode::kReflect), cfg.ssim_window, 1); };
  const Tensor mu_a = pool(a), mu_b = pool(b);
  const Tensor sigma_a = sub(pool(square(a)), square(mu_a));
  const Tensor sigma_b = sub(pool(square(b)), square(mu_b));
  const Tensor sigma_ab = sub(pool(mul(a, b)), mul(mu_a, mu_b));
  const Tensor num = mul(add_scalar(mul_scalar(mul(mu_a, mu_b), 2.0), cfg.ssim_c1),
                         add_scalar(mul_scalar(sigma_ab, 2.0), cfg.ssim_c2));
  const Tensor den = mul(add_scalar(add(square(mu_a), square(mu_b)), cfg.ssim_c1),
                         add_scalar(add(sigma_a, sigma_b), cfg.ssim_c2));
  return div(num, den);
}

Tensor photometric_error(const Tensor& a, const Tensor& b, const LossConfig& cfg) {
  if (a.shape() != b.shape()) throw_shape_error("photometric_error", a.shape(), b.shape());
  const Tensor l1 = mean_axis(abs(sub(a, b)), 2, true);
  if (cfg.alpha == 0.0) return l1;
  const Tensor dssim = mean_axis(mul_scalar(add_scalar(neg(ssim(a, b, cfg)), 1.0), cfg.alpha / 2.0), 2, true);
  return add(dssim, mul_scalar(l1, 1.0 - cfg.alpha));
}

Tensor smoothness_loss(const Tensor& disp, const Tensor& image) {
  if (disp.rank() != 3 || disp.dim(2) != 1 || image.rank() != 3 || disp.dim(0) != image.dim(0) ||
      disp.dim(1) != image.dim(1)) {
    throw_shape_error("smoothness_loss", disp.shape(), image.shape());
  }
  const std::size_t h = disp.dim(0), w = disp.dim(1);
  const Tensor norm = div(disp, add_scalar(mean(disp), 1e-7));
  Tensor total = Tensor::scalar(0.0);
  auto term = [&](std::size_t axis, std::size_t len) {
    const Tensor dd = abs(sub(slice(norm, axis, 1, len - 1), slice(norm, axis, 0, len - 1)));
    const Tensor di = mean_axis(abs(sub(slice(image, axis, 1, len - 1), slice(image, axis, 0, len - 1))), 2, true);
    return mean(mul(dd, exp(neg(di))));
  };
  if (w > 1) total = add(total, term(1, w));
  if (h > 1) total = add(total, term(0, h));
  return total;
}

double AutoMask::coverage() const {
  double s = 0.0;
  for (double v : mask.data()) s += v;
  return s / static_cast<double>(mask.numel());
}

AutoMask auto_mask_from_errors(const Tensor& min_warped_error, const Tensor& min_raw_error) {
  if (min_warped_error.shape() != min_raw_error.shape()) {
    throw_shape_error("auto_mask", min_warped_error.shape(), min_raw_error.shape());
  }
  std::vector<double> mu(min_warped_error.numel());
  const auto w = min_warped_error.data(), r = min_raw_error.data();
  for (std::size_t i = 0; i < mu.size(); ++i) mu[i] = w[i] < r[i] ? 1.0 : 0.0;
  return {Tensor::from(min_warped_error.shape(), std::move(mu))};
}

Tensor pixelwise_min(const std::vector<Tensor>& maps) {
  if (maps.empty()) throw std::invalid_argument("pixelwise_min: no inputs");
  Tensor m = maps[0];
  for (std::size_t i = 1; i < maps.size(); ++i) m = minimum(m, maps[i]);
  return m;
}

AutoMask auto_mask(const Tensor& target, const std::vector<Tensor>& warped_sources,
                   const std::vector<Tensor>& raw_sources, const LossConfig& cfg) {
  NoGradGuard no_grad;
  std::vector<Tensor> warped, raw;
  for (const auto& s : warped_sources) warped.push_back(photometric_error(target, s, cfg));
  for (const auto& s : raw_sources) raw.push_back(photometric_error(target, s, cfg));
  return auto_mask_from_errors(pixelwise_min(warped), pixelwise_min(raw));
}

Tensor erode_mask(const Tensor& mask) {
  if (mask.rank() != 3 || mask.dim(2) != 1) throw_shape_error("erode_mask", "expected [H,W,1], got " + shape_str(mask.shape()));
  const std::size_t h = mask.dim(0), w = mask.dim(1);
  std::vector<double> out(h * w);
  const auto m = mask.data();
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      double v = 1.0;
      for (std::size_t yy = (y ? y - 1 : 0); yy <= std::min(h - 1, y + 1); ++yy)
        for (std::size_t xx = (x ? x - 1 : 0); xx <= std::min(w - 1, x + 1); ++xx) v = std::min(v, m[yy * w + xx]);
      out[y * w + x] = v;
    }
  return Tensor::from({h, w, 1}, std::move(out));
}

PhotometricTerm masked_photometric(const Tensor& target, const std::vector<Tensor>& sources, const Tensor& depth,
                                   const std::vector<PoseTransform>& poses, const CameraModel& cam,
                                   const LossConfig& cfg) {
  if (sources.empty() || sources.size() != poses.size()) {
    throw std::invalid_argument("masked_photometric: need one pose per source frame");
  }
  std::vector<Tensor> warped_errors, raw_errors;
  for (std::size_t k = 0; k < sources.size(); ++k) {
    const Sampled s = synthesize_view(sources[k], depth, poses[k], cam);
    const Tensor valid = erode_mask(s.valid);
    const Tensor pe = photometric_error(target, s.image, cfg);
    const Tensor penalty = mul_scalar(add_scalar(neg(valid), 1.0), kInvalidPixelError);
    warped_errors.push_back(add(mul(pe, valid), penalty));
    NoGradGuard no_grad;
    raw_errors.push_back(photometric_error(target, sources[k], cfg));
  }
  const Tensor min_warped = pixelwise_min(warped_errors);
  AutoMask mu = [&] {
    NoGradGuard no_grad;
    return auto_mask_from_errors(min_warped.detach(), pixelwise_min(raw_errors));
  }();
  const Tensor value = mean(mul(min_warped, mu.mask));
  return {value, std::move(mu), min_warped};
}

LossTerms total_loss_from_disparities(const Tensor& target, const std::vector<Tensor>& sources,
                                      const std::vector<Tensor>& upsampled_disparities,
                                      const std::vector<Tensor>& native_disparities,
                                      const std::vector<PoseTransform>& poses, const CameraModel& cam,
                                      double min_depth, double max_depth, const LossConfig& cfg) {
  cfg.validate();
  if (upsampled_disparities.empty() || upsampled_disparities.size() != native_disparities.size()) {
    throw std::invalid_argument("total_loss: need matching native and upsampled disparities per scale");
  }
  const std::size_t scales = upsampled_disparities.size();
  LossTerms terms;
  Tensor total = Tensor::scalar(0.0);
  for (std::size_t s = 0; s < scales; ++s) {
    const Tensor depth = disparity_to_depth(upsampled_disparities[s], min_depth, max_depth);
    PhotometricTerm photo = masked_photometric(target, sources, depth, poses, cam, cfg);

    const Tensor& disp = native_disparities[s];
    const std::size_t factor = target.dim(0) / disp.dim(0);
    const Tensor guide = factor > 1 ? avg_pool2d(target, factor, factor) : target;
    const Tensor smooth = smoothness_loss(disp, guide);

    const double weight = cfg.smoothness_weight / static_cast<double>(std::size_t{1} << s);
    total = add(total, add(photo.value, mul_scalar(smooth, weight)));
    terms.photometric += photo.value.item();
    terms.smoothness += smooth.item();
    terms.mask_coverage += photo.mask.coverage();
    terms.masks.push_back(std::move(photo.mask));
  }
  const double inv = 1.0 / static_cast<double>(scales);
  terms.total = mul_scalar(total, inv);
  terms.photometric *= inv;
  terms.smoothness *= inv;
  terms.mask_coverage *= inv;
  return terms;
}

LossTerms total_loss(const Tensor& target, const std::vector<Tensor>& sources, const DepthOutputs& depth,
                     const std::vector<PoseTransform>& poses, const CameraModel& cam, const NetConfig& net,
                     const LossConfig& cfg) {
  return total_loss_from_disparities(target, sources, depth.upsampled_disparities, depth.disparities, poses, cam,
                                     net.min_depth, net.max_depth, cfg);
}

}  // namespace mdepth
