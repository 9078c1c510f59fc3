#include "mdepth/params.hpp"

#include <cmath>

namespace mdepth {

void ParamSet::add(std::string name, const Tensor& tensor) {
  items_.push_back({std::move(name), tensor});
}

void ParamSet::append(const std::string& prefix, const ParamSet& other) {
  for (const auto& p : other.items_) items_.push_back({prefix + p.name, p.tensor});
}

std::size_t ParamSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : items_) n += p.tensor.numel();
  return n;
}

const Tensor* ParamSet::find(const std::string& name) const {
  for (const auto& p : items_)
    if (p.name == name) return &p.tensor;
  return nullptr;
}

void ParamSet::zero_grad() {
  for (auto& p : items_) p.tensor.zero_grad();
}

Tensor xavier_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<double> values(shape_numel(shape));
  for (double& v : values) v = rng.uniform(-bound, bound);
  return Tensor::from(std::move(shape), std::move(values), true);
}

}  // namespace mdepth
