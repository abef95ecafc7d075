// SPDX-License-Identifier: Apache-2.0
#include "dlf/embedding.hpp"

#include <algorithm>
#include <cmath>

namespace dlf::embed {

TsEmbedder::TsEmbedder(std::size_t lookback, std::size_t d_model, std::size_t hidden, Rng& rng) {
  if (hidden == 0) hidden = 2 * d_model;
  fc1_ = nn::Linear::gaussian(lookback, hidden, 1.0 / std::sqrt(static_cast<double>(lookback)), rng, true);
  fc2_ = nn::Linear::gaussian(hidden, d_model, 1.0 / std::sqrt(static_cast<double>(hidden)), rng, true);
}

ad::Tensor TsEmbedder::embed(const ad::Tensor& x) const {
  if (x.cols() != lookback())
    throw ad::ContractError("TsEmbedder: input length " + std::to_string(x.cols()) +
                            " does not match configured lookback " + std::to_string(lookback()));
  return fc2_(ad::silu(fc1_(x)));
}

void TsEmbedder::collect(nn::ParamList& out, const std::string& prefix) const {
  fc1_.collect(out, prefix + ".fc1");
  fc2_.collect(out, prefix + ".fc2");
}

OutputHead::OutputHead(std::size_t d_model, std::size_t horizon, Rng& rng)
    : proj_(nn::Linear::gaussian(d_model, horizon, 1.0 / std::sqrt(static_cast<double>(d_model)), rng, true)) {}

ad::Tensor OutputHead::project(const ad::Tensor& hidden) const {
  if (hidden.cols() != proj_.in_features())
    throw ad::DimensionError("OutputHead: hidden width " + std::to_string(hidden.cols()) + " vs expected " +
                             std::to_string(proj_.in_features()));
  return proj_(hidden);
}

void OutputHead::collect(nn::ParamList& out, const std::string& prefix) const { proj_.collect(out, prefix); }

Normalized instance_normalize(const ad::Tensor& x) {
  const std::size_t r = x.rows(), c = x.cols();
  data::NormStats stats;
  stats.mean.resize(r);
  stats.stddev.resize(r);
  auto v = x.data();
  for (std::size_t i = 0; i < r; ++i) {
    double m = 0.0;
    for (std::size_t j = 0; j < c; ++j) m += v[i * c + j];
    m /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (v[i * c + j] - m) * (v[i * c + j] - m);
    stats.mean[i] = m;
    stats.stddev[i] = std::max(std::sqrt(var / static_cast<double>(c)), data::kStdFloor);
  }
  auto xn = normalize_with(x, stats);
  return {xn, std::move(stats)};
}

ad::Tensor normalize_with(const ad::Tensor& x, const data::NormStats& stats) {
  // Inputs are data, never parameters, so no tape record is needed.
  const std::size_t r = x.rows(), c = x.cols();
  if (stats.mean.size() != r) throw ad::DimensionError("normalize_with: stats do not match " + ad::to_string(x.shape()));
  auto out = ad::Tensor::zeros(x.shape());
  auto v = x.data();
  auto y = out.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) y[i * c + j] = (v[i * c + j] - stats.mean[i]) / stats.stddev[i];
  return out;
}

ad::Tensor denormalize(const ad::Tensor& y, const data::NormStats& stats) {
  return ad::affine_rows(y, stats.stddev, stats.mean);
}

}  // namespace dlf::embed
