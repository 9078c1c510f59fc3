#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "mdepth/params.hpp"

namespace mdepth {

class NonFiniteGradient : public std::runtime_error {
 public:
  explicit NonFiniteGradient(const std::string& param)
      : std::runtime_error("non-finite gradient in parameter '" + param + "'"), param_(param) {}
  const std::string& param() const { return param_; }

 private:
  std::string param_;
};

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction. Moments are allocated lazily and keyed by the
/// position of each parameter in the ParamSet.
class Adam {
 public:
  explicit Adam(AdamOptions options = {}) : options_(options) {}

  /// One update of every parameter from its accumulated grad. Validates all
  /// grads first; on a non-finite value nothing is modified and
  /// NonFiniteGradient names the parameter.
  void step(ParamSet& params, double lr);

  std::int64_t steps() const { return step_; }
  const std::vector<std::vector<double>>& first_moments() const { return m_; }
  const std::vector<std::vector<double>>& second_moments() const { return v_; }
  const AdamOptions& options() const { return options_; }

 private:
  AdamOptions options_;
  std::int64_t step_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace mdepth
