#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mdepth/tensor.hpp"

namespace mdepth {

struct GradcheckOptions {
  double step = 1e-5;
  std::size_t max_probes = 100;  // every element is checked when there are fewer
  std::uint64_t seed = 0;
};

/// Largest |analytic - numeric| / max(1, |numeric|) over the probed input
/// elements, using central differences. A non-scalar output is contracted
/// with fixed random weights first. `f` must read its inputs afresh on every
/// call; inputs are perturbed in place and restored.
double gradcheck(const std::function<Tensor()>& f, const std::vector<Tensor>& inputs,
                 const GradcheckOptions& options = {});

struct GradcheckReport {
  std::string name;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool passed() const { return max_rel_error < tolerance; }
};

inline constexpr double kPrimitiveTolerance = 1e-6;
inline constexpr double kCompositeTolerance = 1e-5;

/// Every differentiable primitive, then the composites (scan, SS2D, MD block,
/// sampler, losses).
std::vector<GradcheckReport> run_gradient_suites(std::uint64_t seed = 0);

struct ScanCheckReport {
  std::size_t cases = 0;
  double max_abs_diff = 0.0;
};

/// Sequential versus blocked-parallel scan on random systems of random
/// length, channel and state sizes.
ScanCheckReport run_scan_check(std::uint64_t seed_begin, std::uint64_t seed_end, std::size_t cases_per_seed);

}  // namespace mdepth
