#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace mdepth {

inline constexpr double kEvalMinDepth = 1e-3;
inline constexpr double kEvalMaxDepth = 80.0;

struct EvalReport {
  double abs_rel = 0.0;
  double sq_rel = 0.0;
  double rmse = 0.0;
  double rmse_log = 0.0;
  double delta1 = 0.0;
  double delta2 = 0.0;
  double delta3 = 0.0;
  std::size_t n_valid_pixels = 0;

  static std::string csv_header();
  /// Columns in the order abs_rel, sq_rel, rmse, rmse_log, d1, d2, d3.
  std::string csv_row() const;
};

/// Median of the valid entries (mean of the two middle values for even counts).
double masked_median(std::span<const double> values, const std::vector<bool>& valid);

/// pred * median(gt[valid]) / median(pred[valid]). Throws on an empty mask.
std::vector<double> median_scale(std::span<const double> pred, std::span<const double> gt,
                                 const std::vector<bool>& valid);

/// Standard depth error and accuracy measures over the valid pixels; pred is
/// clamped to [kEvalMinDepth, depth_cap] first. Throws on an empty mask.
EvalReport compute_metrics(std::span<const double> pred, std::span<const double> gt, const std::vector<bool>& valid,
                           double depth_cap = kEvalMaxDepth);

/// Ground-truth mask of pixels with depth inside (kEvalMinDepth, depth_cap).
std::vector<bool> gt_valid_mask(std::span<const double> gt, double depth_cap = kEvalMaxDepth);

/// Median scaling and metrics for one image.
EvalReport evaluate_depth(std::span<const double> pred, std::span<const double> gt, double depth_cap = kEvalMaxDepth);

/// Mean of per-image reports; n_valid_pixels is summed.
EvalReport average_reports(const std::vector<EvalReport>& reports);

}  // namespace mdepth
