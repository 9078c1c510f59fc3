#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mdepth {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Raised by any operation whose operands do not conform.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

[[noreturn]] void throw_shape_error(const std::string& op, const Shape& a, const Shape& b);
[[noreturn]] void throw_shape_error(const std::string& op, const std::string& what);

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;

  std::vector<double>& ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
    return grad;
  }
};

/// Shared handle to a dense row-major array of doubles.
///
/// Copies alias the same storage. Values produced by operations are never
/// mutated afterwards; only leaves (parameters) are updated in place by the
/// optimizer, and grads accumulate during backward.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return impl_->shape.at(axis); }
  std::size_t numel() const { return impl_->data.size(); }

  std::span<const double> data() const { return impl_->data; }
  std::span<double> mutable_data() { return impl_->data; }
  double operator[](std::size_t i) const { return impl_->data[i]; }
  double item() const;

  bool requires_grad() const { return impl_ && impl_->requires_grad; }
  void set_requires_grad(bool value) { impl_->requires_grad = value; }

  bool has_grad() const { return !impl_->grad.empty(); }
  /// Accumulated gradient; a same-shape zero vector if nothing reached this tensor.
  std::vector<double> grad() const;
  std::span<double> mutable_grad() { return impl_->ensure_grad(); }
  void zero_grad() { impl_->grad.clear(); }

  /// Copy of the values with no gradient history.
  Tensor detach() const;
  Tensor clone(bool requires_grad = false) const;

  TensorImpl* impl() const { return impl_.get(); }
  const std::shared_ptr<TensorImpl>& shared_impl() const { return impl_; }
  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<TensorImpl> impl_;
};

/// Backward closure of a recorded operation: receives the gradient of the
/// output and accumulates into input grads.
using BackwardFn = std::function<void(std::span<const double> grad_out)>;

/// Per-forward-pass record of differentiable operations.
///
/// Constructing a Tape makes it the active tape of the calling thread until
/// it is destroyed. Operations record themselves only while a tape is active
/// and at least one input requires grad. Entries are appended in execution
/// order, so the list is topologically sorted by construction.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Active tape of this thread, or nullptr.
  static Tape* active();

  /// True when an op with these inputs must be recorded.
  static bool should_record(std::initializer_list<const Tensor*> inputs);
  static bool should_record(std::span<const Tensor> inputs);

  void record(std::vector<Tensor> inputs, const Tensor& output, BackwardFn fn);

  /// Seeds d(loss)/d(loss) = 1 and replays entries in reverse order. Clears
  /// the tape afterwards.
  void backward(const Tensor& loss);

  std::size_t size() const { return entries_.size(); }
  void clear() { entries_.clear(); }

  /// Output-node ids (creation order) of each entry; used by tests of the
  /// topological invariant.
  struct EntryInfo {
    std::vector<const TensorImpl*> inputs;
    const TensorImpl* output;
  };
  std::vector<EntryInfo> entries_info() const;

 private:
  struct Entry {
    std::vector<Tensor> inputs;
    Tensor output;
    BackwardFn fn;
  };
  std::vector<Entry> entries_;
  Tape* previous_ = nullptr;
};

/// Makes `out` a recorded node when required. Returns `out` for chaining.
Tensor record_op(std::vector<Tensor> inputs, Tensor out, BackwardFn fn);

/// Scoped suspension of recording (inference, optimizer updates).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  Tape* saved_;
};

}  // namespace mdepth
