// SPDX-License-Identifier: Apache-2.0
#include "dlf/model.hpp"

#include <stdexcept>

namespace dlf {

Variant parse_variant(const std::string& name) {
  if (name == "full") return Variant::Full;
  if (name == "v1_no_align") return Variant::NoAlign;
  if (name == "v2_prefix_prompt") return Variant::PrefixPrompt;
  if (name == "v3_static_lora") return Variant::StaticLora;
  if (name == "v4_frozen") return Variant::Frozen;
  throw std::invalid_argument("unknown variant '" + name +
                              "' (expected full, v1_no_align, v2_prefix_prompt, v3_static_lora, v4_frozen)");
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::Full: return "full";
    case Variant::NoAlign: return "v1_no_align";
    case Variant::PrefixPrompt: return "v2_prefix_prompt";
    case Variant::StaticLora: return "v3_static_lora";
    case Variant::Frozen: return "v4_frozen";
  }
  return "?";
}

ForecastModel::ForecastModel(const ModelConfig& config, const std::string& prompt_text, std::uint64_t seed,
                             bool run_pretraining)
    : config_(config), prompt_text_(prompt_text), seed_(seed) {
  const std::size_t d = config.backbone.d_model;
  prompt_ids_ = align::tokenize(prompt_text, config.prompt_vocab, config.prompt_max_tokens);

  // Each component draws from its own stream so variants share identical
  // initial values for the components they have in common.
  {
    auto rng = nn::component_rng(seed, "embedder");
    embedder_ = embed::TsEmbedder(config.lookback, d, config.embed_hidden, rng);
  }
  {
    auto rng = nn::component_rng(seed, "prompt");
    prompt_table_ = align::PromptTable(config.prompt_vocab, d, rng);
  }
  {
    auto rng = nn::component_rng(seed, "alignment");
    alignment_ = align::CrossAttention(d, config.align_heads, rng);
  }
  {
    auto rng = nn::component_rng(seed, "backbone");
    backbone_ = backbone::Backbone(config.backbone, rng);
    if (run_pretraining && config.backbone.pretrain_mode == backbone::PretrainMode::PretrainThenFreeze) {
      backbone::PretrainSpec spec;
      spec.seed = seed;
      backbone::pretrain_then_freeze(backbone_, spec);
    }
    if (config.backbone.frozen)
      backbone_.freeze();
    else
      backbone_.unfreeze();
  }
  {
    auto rng = nn::component_rng(seed, "head");
    head_ = embed::OutputHead(d, config.horizon, rng);
  }
  if (config.variant != Variant::Frozen) {
    auto rng = nn::component_rng(seed, "adapters");
    adapters_.resize(config.backbone.layers);
    for (std::size_t l = 0; l < config.backbone.layers; ++l) {
      for (auto m : lora::kModules) {
        const auto& lin = backbone_.block(l).linear(m);
        adapters_[l][static_cast<std::size_t>(m)] =
            lora::make_adapter(m, lin.in_features(), lin.out_features(), config.rank, rng);
      }
    }
  }
  if (config.variant != Variant::Frozen && config.variant != Variant::StaticLora) {
    auto rng = nn::component_rng(seed, "routers");
    for (std::size_t l = 0; l < config.backbone.layers; ++l)
      routers_.push_back(lora::make_router(d, config.top_n, config.router_activation, rng));
  }
}

bool ForecastModel::has_adapters() const { return !adapters_.empty(); }
bool ForecastModel::has_routers() const { return !routers_.empty(); }

ForecastModel::Forward ForecastModel::forward(const data::WindowBatch& batch) const {
  return forward(batch.x, batch.batch, batch.channels);
}

ForecastModel::Forward ForecastModel::forward(const ad::Tensor& x, std::size_t batch, std::size_t channels) const {
  if (x.rows() != batch * channels)
    throw ad::DimensionError("forward: input " + ad::to_string(x.shape()) + " is not " + std::to_string(batch) +
                             " samples of " + std::to_string(channels) + " channels");
  Forward out;
  ad::Tensor input = x;
  data::NormStats stats;
  if (config_.instance_norm) {
    auto n = embed::instance_normalize(x);
    input = n.x;
    stats = std::move(n.stats);
  }
  auto tokens = embedder_.embed(input);

  backbone::SequenceLayout layout{batch, channels};
  ad::Tensor h0 = tokens;
  const std::size_t prompt_len = prompt_ids_.size();
  switch (config_.variant) {
    case Variant::Full:
    case Variant::StaticLora:
    case Variant::Frozen:
      h0 = alignment_.align(tokens, prompt_table_.lookup(prompt_ids_));
      break;
    case Variant::NoAlign:
      break;
    case Variant::PrefixPrompt: {
      auto prompt = prompt_table_.lookup(prompt_ids_);
      std::vector<ad::Tensor> parts;
      parts.reserve(2 * batch);
      for (std::size_t b = 0; b < batch; ++b) {
        parts.push_back(prompt);
        parts.push_back(ad::slice(tokens, 0, b * channels, (b + 1) * channels));
      }
      h0 = ad::concat(parts, 0);
      layout.seq_len = prompt_len + channels;
      break;
    }
  }
  out.backbone_seq_len = layout.seq_len;

  const std::size_t layers = backbone_.layers();
  std::vector<backbone::RowGates> gate_store(layers);
  out.applied_gates.assign(layers, std::vector<lora::Gates>(batch));
  backbone::Backbone::GateHook hook;
  if (has_routers()) {
    out.routing.resize(layers);
    hook = [&](std::size_t l, const ad::Tensor& pre) -> const backbone::RowGates* {
      auto pooled = lora::pool(pre, layout.batch, layout.seq_len);
      out.routing[l] = lora::route(pooled, routers_[l], l);
      auto& rg = gate_store[l];
      for (std::size_t m = 0; m < lora::kNumModules; ++m) rg[m].assign(layout.batch * layout.seq_len, 0.0);
      for (std::size_t b = 0; b < layout.batch; ++b) {
        const auto& gates = out.routing[l].decisions[b].gates;
        out.applied_gates[l][b] = gates;
        for (std::size_t m = 0; m < lora::kNumModules; ++m)
          if (gates[m])
            for (std::size_t t = 0; t < layout.seq_len; ++t) rg[m][b * layout.seq_len + t] = 1.0;
      }
      return &rg;
    };
  } else if (has_adapters()) {
    lora::Gates all_on;
    all_on.fill(1);
    for (auto& layer : out.applied_gates) std::fill(layer.begin(), layer.end(), all_on);
    hook = [&](std::size_t l, const ad::Tensor&) -> const backbone::RowGates* {
      auto& rg = gate_store[l];
      for (auto& g : rg) g.assign(layout.batch * layout.seq_len, 1.0);
      return &rg;
    };
  }

  auto hidden = backbone_.forward(h0, layout, has_adapters() ? &adapters_ : nullptr, hook).hidden;
  if (config_.variant == Variant::PrefixPrompt) {
    std::vector<std::size_t> rows;
    rows.reserve(batch * channels);
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t c = 0; c < channels; ++c) rows.push_back(b * layout.seq_len + prompt_len + c);
    hidden = ad::select_rows(hidden, rows);
  }
  auto pred = head_.project(hidden);
  out.forecast = config_.instance_norm ? embed::denormalize(pred, stats) : pred;
  return out;
}

nn::ParamList ForecastModel::backbone_parameters() const {
  nn::ParamList p;
  backbone_.collect(p, "backbone");
  return p;
}

nn::ParamList ForecastModel::adapter_parameters() const {
  nn::ParamList p;
  for (std::size_t l = 0; l < adapters_.size(); ++l)
    for (const auto& a : adapters_[l]) {
      if (!a) continue;
      const std::string prefix = "lora." + std::to_string(l) + "." + lora::name(a->module);
      p.push_back({prefix + ".a", a->a});
      p.push_back({prefix + ".b", a->b});
    }
  for (std::size_t l = 0; l < routers_.size(); ++l) p.push_back({"router." + std::to_string(l) + ".weight", routers_[l].weight});
  return p;
}

nn::ParamList ForecastModel::shared_parameters() const {
  nn::ParamList p;
  embedder_.collect(p, "embedder");
  prompt_table_.collect(p, "prompt");
  alignment_.collect(p, "align");
  backbone_.collect(p, "backbone");
  head_.collect(p, "head");
  return p;
}

nn::ParamList ForecastModel::parameters() const {
  nn::ParamList p;
  embedder_.collect(p, "embedder");
  if (config_.variant != Variant::NoAlign) prompt_table_.collect(p, "prompt");
  if (config_.variant == Variant::Full || config_.variant == Variant::StaticLora || config_.variant == Variant::Frozen)
    alignment_.collect(p, "align");
  backbone_.collect(p, "backbone");
  auto ad = adapter_parameters();
  p.insert(p.end(), ad.begin(), ad.end());
  head_.collect(p, "head");
  return p;
}

nn::ParamList ForecastModel::trainable_parameters() const {
  nn::ParamList p;
  for (auto& t : parameters())
    if (t.tensor.requires_grad()) p.push_back(t);
  return p;
}

}  // namespace dlf
