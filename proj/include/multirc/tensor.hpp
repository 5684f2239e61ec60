#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace multirc {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first needed
  bool requires_grad = false;

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  }
};

}  // namespace detail

/// Dense row-major float64 tensor.
///
/// A Tensor is a handle: copies share storage, which is what lets the tape
/// route gradients back to the parameters a module owns. Use clone() for an
/// independent copy.
class Tensor {
 public:
  Tensor();
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double value);
  static Tensor vector(std::vector<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const { return impl_->data.size(); }
  /// Rows/cols of a rank-2 tensor; throws ShapeError otherwise.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const { return impl_->data; }
  std::span<double> mutable_data() { return impl_->data; }
  double operator[](std::size_t i) const { return impl_->data[i]; }
  double at(std::size_t r, std::size_t c) const;
  /// Value of a single-element tensor.
  double item() const;

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool on);
  bool has_grad() const { return impl_->grad.size() == impl_->data.size(); }
  /// Gradient buffer; zeros when nothing has been accumulated yet.
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  Tensor clone() const;
  /// Same values, fresh storage, no gradient tracking.
  Tensor detach() const;
  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

  const std::shared_ptr<detail::TensorImpl>& impl() const { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<detail::TensorImpl> impl_;
  friend Tensor make_result(Shape shape, std::vector<double> data, bool requires_grad);
};

/// Builds an op output; validates the finiteness invariant.
Tensor make_result(Shape shape, std::vector<double> data, bool requires_grad);

/// Ordered record of differentiable operations for reverse-mode autodiff.
///
/// Operations record themselves only while a tape is active on the current
/// thread (see Tape::Scope) and at least one input requires gradients.
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  class Scope {
   public:
    explicit Scope(Tape& tape);
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape* previous_;
  };

  /// Currently active tape on this thread, or nullptr.
  static Tape* active();

  void record(BackwardFn fn);
  /// Seeds d(loss)/d(loss) = 1 and replays the record in reverse order.
  /// A second call without reset() is rejected.
  void backward(const Tensor& loss);
  void reset();

  std::size_t size() const { return ops_.size(); }
  bool consumed() const { return consumed_; }

 private:
  std::vector<BackwardFn> ops_;
  bool consumed_ = false;
};

/// Records `fn` on the active tape when `out` participates in autodiff.
void record_if_needed(const Tensor& out, Tape::BackwardFn fn);

}  // namespace multirc
