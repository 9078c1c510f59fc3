#include "mdepth/tensor.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

namespace mdepth {

namespace {
thread_local Tape* g_active_tape = nullptr;
}  // namespace

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

void throw_shape_error(const std::string& op, const Shape& a, const Shape& b) {
  throw ShapeError(op + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
}

void throw_shape_error(const std::string& op, const std::string& what) {
  throw ShapeError(op + ": " + what);
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  auto impl = std::make_shared<TensorImpl>();
  impl->data.assign(shape_numel(shape), value);
  impl->shape = std::move(shape);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("Tensor::from: shape " + shape_str(shape) + " holds " +
                     std::to_string(shape_numel(shape)) + " values, got " +
                     std::to_string(values.size()));
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(values);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value, bool requires_grad) { return full({}, value, requires_grad); }

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item: tensor of shape " + shape_str(shape()) + " is not a scalar");
  return impl_->data[0];
}

std::vector<double> Tensor::grad() const {
  if (impl_->grad.empty()) return std::vector<double>(impl_->data.size(), 0.0);
  return impl_->grad;
}

Tensor Tensor::detach() const { return from(impl_->shape, impl_->data, false); }

Tensor Tensor::clone(bool requires_grad) const { return from(impl_->shape, impl_->data, requires_grad); }

Tape::Tape() : previous_(g_active_tape) { g_active_tape = this; }

Tape::~Tape() { g_active_tape = previous_; }

Tape* Tape::active() { return g_active_tape; }

bool Tape::should_record(std::initializer_list<const Tensor*> inputs) {
  if (!g_active_tape) return false;
  return std::any_of(inputs.begin(), inputs.end(), [](const Tensor* t) { return t->requires_grad(); });
}

bool Tape::should_record(std::span<const Tensor> inputs) {
  if (!g_active_tape) return false;
  return std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
}

void Tape::record(std::vector<Tensor> inputs, const Tensor& output, BackwardFn fn) {
  entries_.push_back(Entry{std::move(inputs), output, std::move(fn)});
}

void Tape::backward(const Tensor& loss) {
  if (loss.numel() != 1) {
    throw ShapeError("backward: loss must be a scalar, got shape " + shape_str(loss.shape()));
  }
  if (!loss.requires_grad()) {
    throw std::logic_error("backward: loss is not part of a recorded graph");
  }
  auto& seed = loss.impl()->ensure_grad();
  seed[0] += 1.0;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    const auto& g = it->output.impl()->grad;
    if (g.empty()) continue;  // nothing flowed into this node
    it->fn(g);
  }
  entries_.clear();
}

std::vector<Tape::EntryInfo> Tape::entries_info() const {
  std::vector<EntryInfo> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) {
    EntryInfo info{{}, e.output.impl()};
    for (const auto& in : e.inputs) info.inputs.push_back(in.impl());
    out.push_back(std::move(info));
  }
  return out;
}

Tensor record_op(std::vector<Tensor> inputs, Tensor out, BackwardFn fn) {
  if (!Tape::should_record(std::span<const Tensor>(inputs))) return out;
  out.set_requires_grad(true);
  Tape::active()->record(std::move(inputs), out, std::move(fn));
  return out;
}

NoGradGuard::NoGradGuard() : saved_(g_active_tape) { g_active_tape = nullptr; }

NoGradGuard::~NoGradGuard() { g_active_tape = saved_; }

}  // namespace mdepth
