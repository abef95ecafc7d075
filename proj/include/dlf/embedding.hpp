// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

#include "dlf/data.hpp"
#include "dlf/nn.hpp"

namespace dlf::embed {

/// Maps each channel's whole lookback series to one d_model token:
/// Linear(T_L → hidden) · SiLU · Linear(hidden → d_model), applied row-wise.
class TsEmbedder {
 public:
  TsEmbedder() = default;
  /// hidden == 0 selects 2·d_model.
  TsEmbedder(std::size_t lookback, std::size_t d_model, std::size_t hidden, Rng& rng);

  /// x: tokens×T_L -> tokens×d_model. Rows never interact.
  ad::Tensor embed(const ad::Tensor& x) const;

  std::size_t lookback() const { return fc1_.in_features(); }
  std::size_t d_model() const { return fc2_.out_features(); }
  void collect(nn::ParamList& out, const std::string& prefix) const;

  nn::Linear& fc1() { return fc1_; }
  nn::Linear& fc2() { return fc2_; }

 private:
  nn::Linear fc1_;
  nn::Linear fc2_;
};

/// Ŷ = H·W^P + b^P.
class OutputHead {
 public:
  OutputHead() = default;
  OutputHead(std::size_t d_model, std::size_t horizon, Rng& rng);

  ad::Tensor project(const ad::Tensor& hidden) const;

  std::size_t horizon() const { return proj_.out_features(); }
  void collect(nn::ParamList& out, const std::string& prefix) const;
  nn::Linear& linear() { return proj_; }

 private:
  nn::Linear proj_;
};

struct Normalized {
  ad::Tensor x;
  data::NormStats stats;
};

/// Per-row z-score over the lookback; std is clamped at kStdFloor.
Normalized instance_normalize(const ad::Tensor& x);
/// z-scores x with precomputed per-row statistics. Not recorded on the tape.
ad::Tensor normalize_with(const ad::Tensor& x, const data::NormStats& stats);
/// Inverse of normalize_with; differentiable in y.
ad::Tensor denormalize(const ad::Tensor& y, const data::NormStats& stats);

}  // namespace dlf::embed
