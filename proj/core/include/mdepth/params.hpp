#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "mdepth/tensor.hpp"

namespace mdepth {

/// Seeded generator shared by initializers, augmentation and synthetic data.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
  double normal(double mean = 0.0, double stddev = 1.0) {
    return std::normal_distribution<double>(mean, stddev)(engine_);
  }
  bool bernoulli(double p) { return uniform(0.0, 1.0) < p; }
  std::uint64_t next() { return engine_(); }
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

struct NamedParam {
  std::string name;
  Tensor tensor;
};

/// Ordered registry of trainable leaves. Order is the registration order and
/// defines the checkpoint layout.
class ParamSet {
 public:
  void add(std::string name, const Tensor& tensor);
  void append(const std::string& prefix, const ParamSet& other);

  const std::vector<NamedParam>& items() const { return items_; }
  std::size_t size() const { return items_.size(); }
  /// Total number of scalar parameters.
  std::size_t scalar_count() const;
  const Tensor* find(const std::string& name) const;
  void zero_grad();

 private:
  std::vector<NamedParam> items_;
};

/// Xavier/Glorot uniform: U(-a, a), a = sqrt(6 / (fan_in + fan_out)).
Tensor xavier_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng);

}  // namespace mdepth
