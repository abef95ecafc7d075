// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "dlf/rng.hpp"
#include "dlf/tensor.hpp"

namespace dlf::nn {

struct NamedTensor {
  std::string name;
  ad::Tensor tensor;
};

using ParamList = std::vector<NamedTensor>;

/// Independent generator for one named component, so each component's
/// initialization does not depend on which other components exist.
Rng component_rng(std::uint64_t seed, std::string_view tag);

ad::Tensor gaussian(ad::Shape shape, double stddev, Rng& rng, bool requires_grad);

/// y = x·W + b with W stored in×out.
struct Linear {
  ad::Tensor weight;
  ad::Tensor bias;

  static Linear gaussian(std::size_t in, std::size_t out, double stddev, Rng& rng, bool trainable);
  ad::Tensor operator()(const ad::Tensor& x) const;
  std::size_t in_features() const { return weight.rows(); }
  std::size_t out_features() const { return weight.cols(); }
  void collect(ParamList& out, const std::string& prefix) const;
};

std::size_t count(const ParamList& params);
/// FNV-1a over the raw bytes of every tensor, in list order.
std::uint64_t checksum(const ParamList& params);

}  // namespace dlf::nn
