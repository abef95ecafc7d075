// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dlf::ad {

using Shape = std::vector<std::size_t>;

std::string to_string(const Shape& shape);
std::size_t numel(const Shape& shape);

/// Raised when operand shapes are incompatible. The message names both shapes.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a caller breaks an API contract (non-scalar loss, double backward, ...).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
};

/// Shared handle to a dense row-major float64 array.
///
/// Copies of a Tensor alias the same storage; use clone() for a deep copy.
/// Gradients live next to the data and are only allocated for tensors that
/// require them.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t size() const { return impl_->data.size(); }
  // Rank-2 view: rank-1 tensors are one row, scalars are 1×1.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<double> data() { return impl_->data; }
  std::span<const double> data() const { return impl_->data; }
  double& at(std::size_t r, std::size_t c) { return impl_->data[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return impl_->data[r * cols() + c]; }
  double item() const;

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool on);
  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const double> grad() const { return impl_->grad; }
  std::span<double> mutable_grad();
  void zero_grad();
  void drop_grad() { impl_->grad.clear(); impl_->grad.shrink_to_fit(); }

  Tensor clone() const;
  Tensor detach() const;  // new leaf sharing no tape history; data copied
  TensorImpl* impl() const { return impl_.get(); }
  const std::shared_ptr<TensorImpl>& handle() const { return impl_; }

 private:
  std::shared_ptr<TensorImpl> impl_;
};

/// Ordered record of differentiable operations.
///
/// Operations executed while a TapeScope is active are appended in execution
/// order, which is a topological order by construction. backward() walks the
/// records once, in reverse, and may be called at most once per recording.
class Tape {
 public:
  using BackwardFn = std::function<void(std::span<const double> out_grad)>;

  void record(const Tensor& out, std::vector<Tensor> inputs, BackwardFn fn);
  void backward(const Tensor& loss);
  void clear();
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    std::shared_ptr<TensorImpl> out;
    std::vector<std::shared_ptr<TensorImpl>> inputs;
    BackwardFn fn;
  };
  std::vector<Node> nodes_;
  bool consumed_ = false;
};

/// The tape that newly created ops record onto, or nullptr (inference mode).
Tape* active_tape();

class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

/// Disables recording for its lifetime.
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape* previous_;
};

/// Accumulates `g` into t.grad, allocating it on first use. No-op when t does
/// not require grad.
void accumulate_grad(const Tensor& t, std::span<const double> g);

// ---------------------------------------------------------------------------
// Differentiable operations. All tensors are treated as rank-2 (rows × cols).

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

/// a + b where b has a's shape, is a 1×cols row (broadcast down rows) or is a scalar.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor silu(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor square(const Tensor& a);
Tensor abs(const Tensor& a);
/// max(a, lo) elementwise; gradient passes only where a > lo.
Tensor clamp_min(const Tensor& a, double lo);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// Column means over rows: rows×cols -> 1×cols.
Tensor mean_rows(const Tensor& a);

/// axis 0 stacks rows, axis 1 stacks columns.
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& a, int axis, std::size_t begin, std::size_t end);
Tensor select_rows(const Tensor& a, std::span<const std::size_t> rows);

/// Row-wise x / sqrt(mean(x²) + eps) ⊙ weight, weight is 1×cols.
Tensor rmsnorm(const Tensor& x, const Tensor& weight, double eps);
/// Numerically stable softmax along axis 0 (columns) or 1 (rows).
Tensor softmax(const Tensor& x, int axis);

// Operations with non-differentiable (constant) side inputs.

/// Row r multiplied by factors[r].
Tensor scale_rows(const Tensor& x, std::span<const double> factors);
/// x + c with c a constant of x's shape (e.g. an additive attention mask).
Tensor add_constant(const Tensor& x, const Tensor& c);
/// Row r mapped to x[r,:]·scale[r] + shift[r].
Tensor affine_rows(const Tensor& x, std::span<const double> scale, std::span<const double> shift);

}  // namespace dlf::ad
