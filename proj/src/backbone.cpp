// SPDX-License-Identifier: Apache-2.0
#include "dlf/backbone.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "dlf/data.hpp"
#include "dlf/embedding.hpp"
#include "dlf/optim.hpp"

namespace dlf::backbone {

PretrainMode parse_pretrain_mode(const std::string& name) {
  if (name == "random_frozen") return PretrainMode::RandomFrozen;
  if (name == "pretrain_then_freeze") return PretrainMode::PretrainThenFreeze;
  throw std::invalid_argument("unknown backbone mode '" + name + "' (expected random_frozen, pretrain_then_freeze)");
}

std::string to_string(PretrainMode mode) {
  return mode == PretrainMode::RandomFrozen ? "random_frozen" : "pretrain_then_freeze";
}

ad::Tensor attention_mask(const SequenceLayout& layout, bool causal) {
  if (layout.batch <= 1 && !causal) return {};
  const std::size_t n = layout.batch * layout.seq_len;
  const double neg_inf = -std::numeric_limits<double>::infinity();
  auto mask = ad::Tensor::full({n, n}, neg_inf);
  auto m = mask.data();
  for (std::size_t b = 0; b < layout.batch; ++b)
    for (std::size_t i = 0; i < layout.seq_len; ++i)
      for (std::size_t j = 0; j < layout.seq_len; ++j)
        if (!causal || j <= i) m[(b * layout.seq_len + i) * n + b * layout.seq_len + j] = 0.0;
  return mask;
}

TransformerBlock::TransformerBlock(std::size_t d_model, std::size_t heads, std::size_t d_ffn, Rng& rng)
    : heads_(heads) {
  if (heads == 0 || d_model % heads != 0)
    throw std::invalid_argument("backbone heads (" + std::to_string(heads) + ") must divide d_model (" +
                                std::to_string(d_model) + ")");
  using lora::Module;
  for (auto m : lora::kModules) {
    std::size_t in = d_model, out = d_model;
    if (m == Module::G || m == Module::U) out = d_ffn;
    if (m == Module::D) in = d_ffn;
    linears_[static_cast<std::size_t>(m)] =
        nn::Linear::gaussian(in, out, 1.0 / std::sqrt(static_cast<double>(in)), rng, false);
  }
  attn_norm_ = ad::Tensor::full({1, d_model}, 1.0);
  ffn_norm_ = ad::Tensor::full({1, d_model}, 1.0);
}

ad::Tensor TransformerBlock::forward(const ad::Tensor& hidden, const SequenceLayout& layout, const ad::Tensor& mask,
                                     const LayerAdapters* adapters, const RowGates* gates, double norm_eps) const {
  using lora::Module;
  if (hidden.rows() != layout.batch * layout.seq_len)
    throw ad::DimensionError("block_forward: hidden " + ad::to_string(hidden.shape()) +
                             " does not match layout " + std::to_string(layout.batch) + "x" +
                             std::to_string(layout.seq_len));
  static const std::vector<double> kNoGates;
  auto lin = [&](Module m, const ad::Tensor& x) {
    const auto i = static_cast<std::size_t>(m);
    const lora::LoraAdapter* a = nullptr;
    if (adapters && (*adapters)[i]) {
      a = &*(*adapters)[i];
      if (a->module != m)
        throw std::invalid_argument(std::string("adapter for module ") + lora::name(a->module) +
                                    " attached to slot " + lora::name(m));
    }
    const std::vector<double>& g = gates ? (*gates)[i] : kNoGates;
    return lora::apply(x, linears_[i], a, g);
  };

  const std::size_t d_model = hidden.cols();
  const std::size_t dh = d_model / heads_;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

  auto xn = ad::rmsnorm(hidden, attn_norm_, norm_eps);
  auto q = lin(Module::Q, xn);
  auto k = lin(Module::K, xn);
  auto v = lin(Module::V, xn);
  std::vector<ad::Tensor> heads;
  heads.reserve(heads_);
  for (std::size_t h = 0; h < heads_; ++h) {
    auto qh = heads_ == 1 ? q : ad::slice(q, 1, h * dh, (h + 1) * dh);
    auto kh = heads_ == 1 ? k : ad::slice(k, 1, h * dh, (h + 1) * dh);
    auto vh = heads_ == 1 ? v : ad::slice(v, 1, h * dh, (h + 1) * dh);
    auto scores = ad::scale(ad::matmul(qh, ad::transpose(kh)), inv_sqrt);
    if (mask.defined()) scores = ad::add_constant(scores, mask);
    heads.push_back(ad::matmul(ad::softmax(scores, 1), vh));
  }
  auto attn = heads_ == 1 ? heads.front() : ad::concat(heads, 1);
  auto h1 = ad::add(hidden, lin(Module::O, attn));

  auto xn2 = ad::rmsnorm(h1, ffn_norm_, norm_eps);
  auto gate = lin(Module::G, xn2);
  auto up = lin(Module::U, xn2);
  auto down = lin(Module::D, ad::mul(ad::silu(gate), up));
  return ad::add(h1, down);
}

void TransformerBlock::set_trainable(bool on) {
  for (auto& l : linears_) {
    l.weight.set_requires_grad(on);
    l.bias.set_requires_grad(on);
  }
  attn_norm_.set_requires_grad(on);
  ffn_norm_.set_requires_grad(on);
}

void TransformerBlock::collect(nn::ParamList& out, const std::string& prefix) const {
  for (auto m : lora::kModules) linears_[static_cast<std::size_t>(m)].collect(out, prefix + "." + lora::name(m));
  out.push_back({prefix + ".attn_norm", attn_norm_});
  out.push_back({prefix + ".ffn_norm", ffn_norm_});
}

Backbone::Backbone(const BackboneConfig& config, Rng& rng) : config_(config) {
  if (config.heads == 0 || config.d_model % config.heads != 0)
    throw std::invalid_argument("backbone heads must divide d_model");
  blocks_.reserve(config.layers);
  for (std::size_t l = 0; l < config.layers; ++l)
    blocks_.emplace_back(config.d_model, config.heads, config.d_ffn, rng);
  if (config_.frozen)
    freeze();
  else
    unfreeze();
}

Backbone::Output Backbone::forward(const ad::Tensor& h0, const SequenceLayout& layout,
                                   const std::vector<LayerAdapters>* adapters, const GateHook& hook) const {
  const auto mask = attention_mask(layout, config_.causal_mask);
  Output out;
  out.pre_states.reserve(blocks_.size());
  ad::Tensor h = h0;
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    out.pre_states.push_back(h);
    const RowGates* gates = hook ? hook(l, h) : nullptr;
    const LayerAdapters* la = adapters && l < adapters->size() ? &(*adapters)[l] : nullptr;
    h = blocks_[l].forward(h, layout, mask, la, gates, config_.norm_eps);
  }
  out.hidden = h;
  return out;
}

void Backbone::freeze() {
  config_.frozen = true;
  for (auto& b : blocks_) b.set_trainable(false);
}

void Backbone::unfreeze() {
  config_.frozen = false;
  for (auto& b : blocks_) b.set_trainable(true);
}

void Backbone::collect(nn::ParamList& out, const std::string& prefix) const {
  for (std::size_t l = 0; l < blocks_.size(); ++l) blocks_[l].collect(out, prefix + "." + std::to_string(l));
}

std::size_t Backbone::parameter_count() const {
  const std::size_t d = config_.d_model, f = config_.d_ffn;
  const std::size_t attn = 4 * (d * d + d);
  const std::size_t ffn = 2 * (d * f + f) + (f * d + d);
  return config_.layers * (attn + ffn + 2 * d);
}

double pretrain_then_freeze(Backbone& backbone, const PretrainSpec& spec) {
  const std::size_t d = backbone.config().d_model;
  auto rng = nn::component_rng(spec.seed, "pretrain");
  embed::TsEmbedder embedder(spec.lookback, d, 0, rng);
  embed::OutputHead head(d, spec.horizon, rng);

  data::SynthSpec synth;
  synth.kind = data::SynthKind::SineMixture;
  synth.channels = 4;
  synth.steps = 1000;
  synth.seed = spec.seed;
  synth.noise = 0.05;
  auto series = std::make_shared<const data::MultivariateSeries>(data::synth_generate(synth).series);
  auto windows = data::make_windows(data::SeriesView(series, 0, series->steps), spec.lookback, spec.horizon);

  backbone.unfreeze();
  nn::ParamList params;
  backbone.collect(params, "backbone");
  embedder.collect(params, "embedder");
  head.collect(params, "head");
  optim::AdamW opt(params, {.lr = spec.lr});

  double last = 0.0;
  ad::Tape tape;
  for (std::size_t step = 0; step < spec.steps; ++step) {
    std::vector<std::size_t> idx(spec.batch_size);
    for (auto& i : idx) i = rng.below(windows.windows.size());
    auto batch = data::make_batch(windows, idx);
    tape.clear();
    ad::TapeScope scope(tape);
    auto xn = embed::normalize_with(batch.x, batch.norm_stats);
    auto yn = embed::normalize_with(batch.y, batch.norm_stats);
    SequenceLayout layout{batch.batch, batch.channels};
    auto hidden = backbone.forward(embedder.embed(xn), layout).hidden;
    auto loss = ad::mean(ad::square(ad::sub(head.project(hidden), yn)));
    opt.zero_grad();
    tape.backward(loss);
    optim::clip_grad_norm(opt.params(), 5.0);
    opt.step();
    last = loss.item();
  }
  backbone.freeze();
  return last;
}

}  // namespace dlf::backbone
