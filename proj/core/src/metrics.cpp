#include "mdepth/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <stdexcept>

namespace mdepth {

namespace {

void check_sizes(std::size_t a, std::size_t b, std::size_t m) {
  if (a != b || a != m) throw std::invalid_argument("metrics: prediction, ground truth and mask sizes differ");
}

}  // namespace

std::string EvalReport::csv_header() { return "abs_rel,sq_rel,rmse,rmse_log,a1,a2,a3"; }

std::string EvalReport::csv_row() const {
  return fmt::format("{:.6f},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f}", abs_rel, sq_rel, rmse, rmse_log, delta1,
                     delta2, delta3);
}

double masked_median(std::span<const double> values, const std::vector<bool>& valid) {
  std::vector<double> v;
  for (std::size_t i = 0; i < values.size(); ++i)
    if (valid[i]) v.push_back(values[i]);
  if (v.empty()) throw std::invalid_argument("median: empty valid mask");
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  const double upper = v[mid];
  if (v.size() % 2) return upper;
  const double lower = *std::max_element(v.begin(), v.begin() + mid);
  return 0.5 * (lower + upper);
}

std::vector<double> median_scale(std::span<const double> pred, std::span<const double> gt,
                                 const std::vector<bool>& valid) {
  check_sizes(pred.size(), gt.size(), valid.size());
  const double ratio = masked_median(gt, valid) / masked_median(pred, valid);
  std::vector<double> out(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) out[i] = pred[i] * ratio;
  return out;
}

EvalReport compute_metrics(std::span<const double> pred, std::span<const double> gt, const std::vector<bool>& valid,
                           double depth_cap) {
  check_sizes(pred.size(), gt.size(), valid.size());
  EvalReport r;
  std::size_t n = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!valid[i]) continue;
    const double p = std::clamp(pred[i], kEvalMinDepth, depth_cap);
    const double g = gt[i];
    const double diff = p - g;
    const double ratio = std::max(p / g, g / p);
    r.abs_rel += std::abs(diff) / g;
    r.sq_rel += diff * diff / g;
    r.rmse += diff * diff;
    const double dl = std::log(p) - std::log(g);
    r.rmse_log += dl * dl;
    r.delta1 += ratio < 1.25 ? 1.0 : 0.0;
    r.delta2 += ratio < 1.25 * 1.25 ? 1.0 : 0.0;
    r.delta3 += ratio < 1.25 * 1.25 * 1.25 ? 1.0 : 0.0;
    ++n;
  }
  if (n == 0) throw std::invalid_argument("metrics: empty valid mask");
  const double inv = 1.0 / static_cast<double>(n);
  r.abs_rel *= inv;
  r.sq_rel *= inv;
  r.rmse = std::sqrt(r.rmse * inv);
  r.rmse_log = std::sqrt(r.rmse_log * inv);
  r.delta1 *= inv;
  r.delta2 *= inv;
  r.delta3 *= inv;
  r.n_valid_pixels = n;
  return r;
}

std::vector<bool> gt_valid_mask(std::span<const double> gt, double depth_cap) {
  std::vector<bool> valid(gt.size());
  for (std::size_t i = 0; i < gt.size(); ++i) valid[i] = gt[i] > kEvalMinDepth && gt[i] < depth_cap;
  return valid;
}

EvalReport evaluate_depth(std::span<const double> pred, std::span<const double> gt, double depth_cap) {
  const std::vector<bool> valid = gt_valid_mask(gt, depth_cap);
  const std::vector<double> scaled = median_scale(pred, gt, valid);
  return compute_metrics(scaled, gt, valid, depth_cap);
}

EvalReport average_reports(const std::vector<EvalReport>& reports) {
  if (reports.empty()) throw std::invalid_argument("metrics: no reports to average");
  EvalReport m;
  for (const auto& r : reports) {
    m.abs_rel += r.abs_rel;
    m.sq_rel += r.sq_rel;
    m.rmse += r.rmse;
    m.rmse_log += r.rmse_log;
    m.delta1 += r.delta1;
    m.delta2 += r.delta2;
    m.delta3 += r.delta3;
    m.n_valid_pixels += r.n_valid_pixels;
  }
  const double inv = 1.0 / static_cast<double>(reports.size());
  m.abs_rel *= inv;
  m.sq_rel *= inv;
  m.rmse *= inv;
  m.rmse_log *= inv;
  m.delta1 *= inv;
  m.delta2 *= inv;
  m.delta3 *= inv;
  return m;
}

}  // namespace mdepth
