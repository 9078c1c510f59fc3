#include "mdepth/adam.hpp"

#include <cmath>

namespace mdepth {

void Adam::step(ParamSet& params, double lr) {
  const auto& items = params.items();
  for (const auto& p : items) {
    if (!p.tensor.has_grad()) continue;
    for (double g : p.tensor.impl()->grad)
      if (!std::isfinite(g)) throw NonFiniteGradient(p.name);
  }
  if (m_.size() != items.size()) {
    m_.resize(items.size());
    v_.resize(items.size());
  }
  ++step_;
  const double c1 = 1.0 - std::pow(options_.beta1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(options_.beta2, static_cast<double>(step_));
  for (std::size_t k = 0; k < items.size(); ++k) {
    Tensor param = items[k].tensor;
    auto values = param.mutable_data();
    auto& m = m_[k];
    auto& v = v_[k];
    if (m.size() != values.size()) {
      m.assign(values.size(), 0.0);
      v.assign(values.size(), 0.0);
    }
    const auto& grad = param.impl()->grad;
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double g = grad.empty() ? 0.0 : grad[i];
      m[i] = options_.beta1 * m[i] + (1.0 - options_.beta1) * g;
      v[i] = options_.beta2 * v[i] + (1.0 - options_.beta2) * g * g;
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      values[i] -= lr * m_hat / (std::sqrt(v_hat) + options_.eps);
    }
  }
}

}  // namespace mdepth
