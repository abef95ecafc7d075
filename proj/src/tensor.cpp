// SPDX-License-Identifier: Apache-2.0
#include "dlf/tensor.hpp"

#include <algorithm>
#include <numeric>
#include <unordered_set>

namespace dlf::ad {

std::string to_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  auto impl = std::make_shared<TensorImpl>();
  impl->data.assign(numel(shape), value);
  impl->shape = std::move(shape);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (numel(shape) != values.size())
    throw DimensionError("Tensor::from: shape " + to_string(shape) + " holds " +
                         std::to_string(numel(shape)) + " values, got " + std::to_string(values.size()));
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(values);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({}, {value}, requires_grad); }

std::size_t Tensor::rows() const {
  const auto& s = impl_->shape;
  if (s.size() < 2) return 1;
  return numel(s) / s.back();
}

std::size_t Tensor::cols() const {
  const auto& s = impl_->shape;
  return s.empty() ? 1 : s.back();
}

double Tensor::item() const {
  if (size() != 1) throw ContractError("item() on tensor of shape " + to_string(shape()));
  return impl_->data[0];
}

void Tensor::set_requires_grad(bool on) {
  impl_->requires_grad = on;
  if (!on) drop_grad();
}

std::span<double> Tensor::mutable_grad() {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
  return impl_->grad;
}

void Tensor::zero_grad() {
  if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

Tensor Tensor::clone() const {
  auto impl = std::make_shared<TensorImpl>(*impl_);
  return Tensor(std::move(impl));
}

Tensor Tensor::detach() const { return from(impl_->shape, impl_->data, false); }

void accumulate_grad(const Tensor& t, std::span<const double> g) {
  auto* impl = t.impl();
  if (!impl->requires_grad) return;
  if (impl->grad.empty()) impl->grad.assign(impl->data.size(), 0.0);
  for (std::size_t i = 0; i < g.size(); ++i) impl->grad[i] += g[i];
}

// --- Tape -------------------------------------------------------------------

namespace {
thread_local Tape* g_active = nullptr;
}

Tape* active_tape() { return g_active; }

TapeScope::TapeScope(Tape& tape) : previous_(g_active) { g_active = &tape; }
TapeScope::~TapeScope() { g_active = previous_; }

NoGradScope::NoGradScope() : previous_(g_active) { g_active = nullptr; }
NoGradScope::~NoGradScope() { g_active = previous_; }

void Tape::record(const Tensor& out, std::vector<Tensor> inputs, BackwardFn fn) {
  Node node;
  node.out = out.handle();
  node.inputs.reserve(inputs.size());
  for (auto& t : inputs) node.inputs.push_back(t.handle());
  node.fn = std::move(fn);
  nodes_.push_back(std::move(node));
}

void Tape::backward(const Tensor& loss) {
  if (loss.size() != 1)
    throw ContractError("backward: loss must be scalar, got shape " + to_string(loss.shape()));
  if (consumed_) throw ContractError("backward: tape already consumed; clear() before reuse");
  const bool on_tape = std::any_of(nodes_.begin(), nodes_.end(),
                                   [&](const Node& n) { return n.out.get() == loss.impl(); });
  if (!on_tape && !loss.requires_grad())
    throw ContractError("backward: loss is not on the tape and does not require grad");
  consumed_ = true;

  Tensor(loss.handle()).mutable_grad()[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (it->out->grad.empty()) continue;
    it->fn(it->out->grad);
  }
  // Tensors that require grad but were not reached still get a (zero) buffer.
  for (auto& node : nodes_) {
    for (auto& in : node.inputs)
      if (in->requires_grad && in->grad.empty()) in->grad.assign(in->data.size(), 0.0);
  }
}

void Tape::clear() {
  nodes_.clear();
  consumed_ = false;
}

}  // namespace dlf::ad
