// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "dlf/nn.hpp"

namespace dlf::optim {

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

/// Decoupled-weight-decay Adam over a fixed list of trainable tensors.
/// Moment buffers are allocated only for tensors that require grad.
class AdamW {
 public:
  AdamW(nn::ParamList params, AdamWConfig config);

  /// One update from the gradients currently stored on the parameters.
  /// Tensors without a grad buffer are treated as having zero gradient.
  void step();
  void zero_grad();

  std::uint64_t steps() const { return step_; }
  const AdamWConfig& config() const { return config_; }
  const nn::ParamList& params() const { return params_; }
  std::size_t state_size() const;

 private:
  nn::ParamList params_;
  AdamWConfig config_;
  std::vector<std::vector<double>> m_, v_;
  std::uint64_t step_ = 0;
};

/// Global L2 norm of all gradients.
double grad_norm(const nn::ParamList& params);
/// Rescales all gradients so their global norm is at most max_norm. Returns the pre-clip norm.
double clip_grad_norm(const nn::ParamList& params, double max_norm);

}  // namespace dlf::optim
