// SPDX-License-Identifier: Apache-2.0
#include "dlf/optim.hpp"

#include <cmath>

namespace dlf::optim {

AdamW::AdamW(nn::ParamList params, AdamWConfig config) : config_(config) {
  for (auto& p : params)
    if (p.tensor.requires_grad()) params_.push_back(std::move(p));
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& p : params_) {
    m_.emplace_back(p.tensor.size(), 0.0);
    v_.emplace_back(p.tensor.size(), 0.0);
  }
}

void AdamW::step() {
  ++step_;
  const double t = static_cast<double>(step_);
  const double bc1 = 1.0 - std::pow(config_.beta1, t);
  const double bc2 = 1.0 - std::pow(config_.beta2, t);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& tensor = params_[i].tensor;
    auto w = tensor.data();
    auto g = tensor.grad();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double gj = g.empty() ? 0.0 : g[j];
      m[j] = config_.beta1 * m[j] + (1.0 - config_.beta1) * gj;
      v[j] = config_.beta2 * v[j] + (1.0 - config_.beta2) * gj * gj;
      const double m_hat = m[j] / bc1;
      const double v_hat = v[j] / bc2;
      if (config_.weight_decay != 0.0) w[j] -= config_.lr * config_.weight_decay * w[j];
      w[j] -= config_.lr * m_hat / (std::sqrt(v_hat) + config_.eps);
    }
  }
}

void AdamW::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

std::size_t AdamW::state_size() const {
  std::size_t n = 0;
  for (const auto& m : m_) n += 2 * m.size();
  return n;
}

double grad_norm(const nn::ParamList& params) {
  double s = 0.0;
  for (const auto& p : params)
    for (double g : p.tensor.grad()) s += g * g;
  return std::sqrt(s);
}

double clip_grad_norm(const nn::ParamList& params, double max_norm) {
  const double norm = grad_norm(params);
  if (max_norm > 0.0 && norm > max_norm) {
    const double k = max_norm / norm;
    for (const auto& p : params) {
      if (!p.tensor.has_grad()) continue;
      auto t = p.tensor;
      for (auto& g : t.mutable_grad()) g *= k;
    }
  }
  return norm;
}

}  // namespace dlf::optim
