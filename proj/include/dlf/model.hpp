// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dlf/alignment.hpp"
#include "dlf/backbone.hpp"
#include "dlf/data.hpp"
#include "dlf/dlora.hpp"
#include "dlf/embedding.hpp"

namespace dlf {

/// Architecture variants compared by the ablation harness.
enum class Variant {
  Full,          // embed → align → backbone with routed adapters → head
  NoAlign,       // cross-attention alignment skipped
  PrefixPrompt,  // prompt tokens prepended to the backbone input instead of aligned
  StaticLora,    // every adapter always on, no routers
  Frozen,        // no adapters, no routers
};

Variant parse_variant(const std::string& name);
std::string to_string(Variant v);

struct ModelConfig {
  std::size_t lookback = 512;
  std::size_t horizon = 96;
  std::size_t embed_hidden = 0;  // 0 → 2·d_model
  backbone::BackboneConfig backbone;
  std::size_t align_heads = 8;
  std::size_t rank = 8;
  std::size_t top_n = 4;
  lora::RouterActivation router_activation = lora::RouterActivation::Tanh;
  bool instance_norm = true;
  std::size_t prompt_vocab = 256;
  std::size_t prompt_max_tokens = 16;
  Variant variant = Variant::Full;
};

/// Channel-as-token forecaster with prompt alignment and a frozen backbone
/// adapted by per-sample routed LoRA.
class ForecastModel {
 public:
  struct Forward {
    ad::Tensor forecast;  // (B·N)×T_P in data units
    std::vector<lora::RouteResult> routing;  // one per layer; empty without routers
    std::vector<std::vector<lora::Gates>> applied_gates;  // [layer][sample]
    std::size_t backbone_seq_len = 0;
  };

  /// `run_pretraining` = false skips the pretrain-then-freeze pass (used when
  /// the weights are about to be overwritten from a checkpoint).
  ForecastModel(const ModelConfig& config, const std::string& prompt_text, std::uint64_t seed,
                bool run_pretraining = true);

  /// x holds `batch` samples of `channels` rows each, T_L columns.
  Forward forward(const ad::Tensor& x, std::size_t batch, std::size_t channels) const;
  Forward forward(const data::WindowBatch& batch) const;

  const ModelConfig& config() const { return config_; }
  const std::string& prompt_text() const { return prompt_text_; }
  const std::vector<std::size_t>& prompt_ids() const { return prompt_ids_; }
  std::uint64_t seed() const { return seed_; }
  bool has_adapters() const;
  bool has_routers() const;

  /// Every tensor the variant uses, in a stable order.
  nn::ParamList parameters() const;
  nn::ParamList trainable_parameters() const;
  nn::ParamList backbone_parameters() const;
  nn::ParamList adapter_parameters() const;
  /// Components every variant initializes identically (embedder, alignment,
  /// prompt table, backbone, head).
  nn::ParamList shared_parameters() const;

  backbone::Backbone& backbone() { return backbone_; }
  const backbone::Backbone& backbone() const { return backbone_; }
  embed::TsEmbedder& embedder() { return embedder_; }
  align::CrossAttention& alignment() { return alignment_; }
  align::PromptTable& prompt_table() { return prompt_table_; }
  embed::OutputHead& head() { return head_; }
  std::vector<backbone::LayerAdapters>& adapters() { return adapters_; }
  std::vector<lora::LoraRouter>& routers() { return routers_; }

 private:
  ModelConfig config_;
  std::string prompt_text_;
  std::vector<std::size_t> prompt_ids_;
  std::uint64_t seed_;

  embed::TsEmbedder embedder_;
  align::PromptTable prompt_table_;
  align::CrossAttention alignment_;
  backbone::Backbone backbone_;
  std::vector<backbone::LayerAdapters> adapters_;
  std::vector<lora::LoraRouter> routers_;
  embed::OutputHead head_;
};

}  // namespace dlf
