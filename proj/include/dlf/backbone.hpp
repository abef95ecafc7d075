// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dlf/dlora.hpp"
#include "dlf/nn.hpp"

namespace dlf::backbone {

enum class PretrainMode { RandomFrozen, PretrainThenFreeze };
PretrainMode parse_pretrain_mode(const std::string& name);
std::string to_string(PretrainMode mode);

struct BackboneConfig {
  std::size_t layers = 4;
  std::size_t d_model = 64;
  std::size_t heads = 4;
  std::size_t d_ffn = 256;
  bool frozen = true;
  bool causal_mask = false;
  PretrainMode pretrain_mode = PretrainMode::RandomFrozen;
  double norm_eps = 1e-6;
};

/// Rows of a hidden-state matrix are `batch` independent sequences of
/// `seq_len` tokens each, stored back to back.
struct SequenceLayout {
  std::size_t batch = 1;
  std::size_t seq_len = 1;
};

/// Additive mask keeping attention inside each sequence (and causal when
/// requested). Undefined when no masking is needed.
ad::Tensor attention_mask(const SequenceLayout& layout, bool causal);

using LayerAdapters = std::array<std::optional<lora::LoraAdapter>, lora::kNumModules>;
/// Per-row gate factor for each module; an empty vector means "off".
using RowGates = std::array<std::vector<double>, lora::kNumModules>;

/// Pre-RMSNorm block: H += O(MHA(norm(H))); H += D(silu(G(x)) ⊙ U(x)), x = norm(H).
/// Every linear goes through lora::apply with its module's adapter and gates.
class TransformerBlock {
 public:
  TransformerBlock() = default;
  TransformerBlock(std::size_t d_model, std::size_t heads, std::size_t d_ffn, Rng& rng);

  ad::Tensor forward(const ad::Tensor& hidden, const SequenceLayout& layout, const ad::Tensor& mask,
                     const LayerAdapters* adapters, const RowGates* gates, double norm_eps) const;

  nn::Linear& linear(lora::Module m) { return linears_[static_cast<std::size_t>(m)]; }
  const nn::Linear& linear(lora::Module m) const { return linears_[static_cast<std::size_t>(m)]; }
  std::size_t heads() const { return heads_; }
  void set_trainable(bool on);
  void collect(nn::ParamList& out, const std::string& prefix) const;

 private:
  std::array<nn::Linear, lora::kNumModules> linears_;
  ad::Tensor attn_norm_;
  ad::Tensor ffn_norm_;
  std::size_t heads_ = 1;
};

class Backbone {
 public:
  /// Gates for layer l given the hidden state entering it; nullptr disables adapters.
  using GateHook = std::function<const RowGates*(std::size_t layer, const ad::Tensor& pre_state)>;

  struct Output {
    ad::Tensor hidden;                   // H^L
    std::vector<ad::Tensor> pre_states;  // H^0 .. H^{L-1}
  };

  Backbone() = default;
  Backbone(const BackboneConfig& config, Rng& rng);

  Output forward(const ad::Tensor& h0, const SequenceLayout& layout,
                 const std::vector<LayerAdapters>* adapters = nullptr, const GateHook& hook = {}) const;

  const BackboneConfig& config() const { return config_; }
  std::size_t layers() const { return blocks_.size(); }
  TransformerBlock& block(std::size_t l) { return blocks_[l]; }
  const TransformerBlock& block(std::size_t l) const { return blocks_[l]; }
  void freeze();
  void unfreeze();
  bool frozen() const { return config_.frozen; }
  void collect(nn::ParamList& out, const std::string& prefix) const;
  /// layers · (7 linears with bias + 2 norm vectors)
  std::size_t parameter_count() const;

 private:
  BackboneConfig config_;
  std::vector<TransformerBlock> blocks_;
};

struct PretrainSpec {
  std::size_t steps = 200;
  std::size_t lookback = 32;
  std::size_t horizon = 8;
  std::size_t batch_size = 8;
  double lr = 1e-3;
  std::uint64_t seed = 1234;
};

/// Trains the backbone together with a throwaway embedder and head on
/// synthetic next-window prediction, then freezes it. Returns the final loss.
double pretrain_then_freeze(Backbone& backbone, const PretrainSpec& spec);

}  // namespace dlf::backbone
