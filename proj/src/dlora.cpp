// SPDX-License-Identifier: Apache-2.0
#include "dlf/dlora.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace dlf::lora {

const char* name(Module m) {
  static constexpr const char* kNames[] = {"Q", "K", "V", "O", "G", "U", "D"};
  return kNames[static_cast<std::size_t>(m)];
}

LoraAdapter make_adapter(Module module, std::size_t d_in, std::size_t d_out, std::size_t rank, Rng& rng) {
  if (rank == 0 || rank > std::min(d_in, d_out) / 2)
    throw std::invalid_argument(std::string("LoRA rank ") + std::to_string(rank) + " for module " + name(module) +
                                " must satisfy 1 <= r <= min(" + std::to_string(d_in) + "," +
                                std::to_string(d_out) + ")/2");
  LoraAdapter a;
  a.module = module;
  a.rank = rank;
  a.a = nn::gaussian({d_in, rank}, 0.02, rng, true);
  a.b = ad::Tensor::zeros({rank, d_out}, true);
  return a;
}

ad::Tensor apply(const ad::Tensor& x, const nn::Linear& base, const LoraAdapter* adapter,
                 std::span<const double> row_gates) {
  const bool any = adapter && std::any_of(row_gates.begin(), row_gates.end(), [](double g) { return g != 0.0; });
  if (!any) return base(x);
  const bool all_on = std::all_of(row_gates.begin(), row_gates.end(), [](double g) { return g == 1.0; });
  auto low = ad::matmul(ad::matmul(x, adapter->a), adapter->b);
  if (!all_on) low = ad::scale_rows(low, row_gates);
  return ad::add(ad::add(ad::matmul(x, base.weight), low), base.bias);
}

ad::Tensor apply(const ad::Tensor& x, const nn::Linear& base, const LoraAdapter* adapter, double gate) {
  std::vector<double> gates(x.rows(), gate);
  return apply(x, base, adapter, gates);
}

RouterActivation parse_activation(const std::string& n) {
  if (n == "tanh") return RouterActivation::Tanh;
  if (n == "identity" || n == "none") return RouterActivation::Identity;
  if (n == "relu") return RouterActivation::Relu;
  throw std::invalid_argument("unknown router activation '" + n + "' (expected tanh, identity, relu)");
}

std::string to_string(RouterActivation a) {
  switch (a) {
    case RouterActivation::Tanh: return "tanh";
    case RouterActivation::Identity: return "identity";
    case RouterActivation::Relu: return "relu";
  }
  return "?";
}

LoraRouter make_router(std::size_t d_model, std::size_t top_n, RouterActivation act, Rng& rng) {
  if (top_n < 1 || top_n > kNumModules)
    throw std::invalid_argument("router top_n must lie in [1, 7], got " + std::to_string(top_n));
  return {nn::gaussian({d_model, kNumModules}, 0.02, rng, true), act, top_n};
}

ad::Tensor pool(const ad::Tensor& hidden) {
  if (hidden.rows() == 0) throw ad::DimensionError("pool: empty hidden state");
  return ad::slice(hidden, 0, hidden.rows() - 1, hidden.rows());
}

ad::Tensor pool(const ad::Tensor& hidden, std::size_t batch, std::size_t seq_len) {
  if (seq_len == 0 || hidden.rows() != batch * seq_len)
    throw ad::DimensionError("pool: hidden " + ad::to_string(hidden.shape()) + " is not " + std::to_string(batch) +
                             " sequences of " + std::to_string(seq_len));
  std::vector<std::size_t> rows(batch);
  for (std::size_t b = 0; b < batch; ++b) rows[b] = (b + 1) * seq_len - 1;
  return ad::select_rows(hidden, rows);
}

Gates top_n(const Probs& probs, std::size_t n) {
  std::array<std::size_t, kNumModules> order;
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return probs[a] > probs[b]; });
  Gates g{};
  for (std::size_t i = 0; i < std::min(n, kNumModules); ++i) g[order[i]] = 1;
  return g;
}

RouteResult route(const ad::Tensor& pooled, const LoraRouter& router, std::size_t layer) {
  ad::Tensor act = pooled;
  switch (router.activation) {
    case RouterActivation::Tanh: act = ad::tanh(pooled); break;
    case RouterActivation::Relu: act = ad::relu(pooled); break;
    case RouterActivation::Identity: break;
  }
  RouteResult r;
  r.probs = ad::softmax(ad::matmul(act, router.weight), 1);
  const std::size_t batch = r.probs.rows();
  r.decisions.resize(batch);
  auto p = r.probs.data();
  for (std::size_t b = 0; b < batch; ++b) {
    auto& d = r.decisions[b];
    d.layer = layer;
    std::copy_n(p.begin() + static_cast<std::ptrdiff_t>(b * kNumModules), kNumModules, d.probs.begin());
    d.gates = top_n(d.probs, router.top_n);
  }
  return r;
}

namespace {
std::size_t argmax(const Probs& p) {
  return static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
}
}  // namespace

RoutingStats accumulate_stats(const std::vector<RouteResult>& layers) {
  RoutingStats s;
  for (const auto& layer : layers) {
    if (layer.decisions.empty()) throw std::invalid_argument("accumulate_stats: layer without decisions");
    Probs f{};
    for (const auto& d : layer.decisions) f[argmax(d.probs)] += 1.0;
    for (auto& v : f) v /= static_cast<double>(layer.decisions.size());
    auto p_hat = ad::mean_rows(layer.probs);
    Probs ph{};
    std::copy_n(p_hat.data().begin(), kNumModules, ph.begin());
    s.f.push_back(f);
    s.p_hat.push_back(ph);
    s.p_hat_tensor.push_back(p_hat);
  }
  return s;
}

ad::Tensor load_balance_loss(const RoutingStats& stats) {
  ad::Tensor total = ad::Tensor::scalar(0.0);
  for (std::size_t l = 0; l < stats.f.size(); ++l) {
    auto f = ad::Tensor::from({1, kNumModules}, std::vector<double>(stats.f[l].begin(), stats.f[l].end()));
    total = ad::add(total, ad::sum(ad::mul(f, stats.p_hat_tensor[l])));
  }
  return ad::scale(total, static_cast<double>(kNumModules));
}

// --- RoutingAccumulator ---------------------------------------------------------

void RoutingAccumulator::reset(std::size_t layers) {
  gate_counts_.assign(layers, {});
  argmax_counts_.assign(layers, {});
  prob_sums_.assign(layers, {});
  gate_set_counts_.assign(layers, {});
  samples_.assign(layers, 0);
}

void RoutingAccumulator::record(std::size_t layer, const Probs& probs, const Gates& gates) {
  if (layer >= layers()) throw std::out_of_range("RoutingAccumulator: layer out of range");
  unsigned mask = 0;
  for (std::size_t i = 0; i < kNumModules; ++i) {
    gate_counts_[layer][i] += gates[i];
    prob_sums_[layer][i] += probs[i];
    if (gates[i]) mask |= 1u << i;
  }
  argmax_counts_[layer][argmax(probs)] += 1;
  gate_set_counts_[layer][mask] += 1;
  samples_[layer] += 1;
}

void RoutingAccumulator::add(const std::vector<RouteResult>& layers) {
  for (std::size_t l = 0; l < layers.size(); ++l)
    for (const auto& d : layers[l].decisions) record(l, d.probs, d.gates);
}

void RoutingAccumulator::add_forced(std::size_t layer, const RouterDecision& decision, const Gates& applied) {
  record(layer, decision.probs, applied);
}

Probs RoutingAccumulator::activation_share(std::size_t layer) const {
  Probs out{};
  const auto total = std::accumulate(gate_counts_[layer].begin(), gate_counts_[layer].end(), std::uint64_t{0});
  if (total == 0) return out;
  for (std::size_t i = 0; i < kNumModules; ++i)
    out[i] = static_cast<double>(gate_counts_[layer][i]) / static_cast<double>(total);
  return out;
}

Probs RoutingAccumulator::argmax_fraction(std::size_t layer) const {
  Probs out{};
  if (samples_[layer] == 0) return out;
  for (std::size_t i = 0; i < kNumModules; ++i)
    out[i] = static_cast<double>(argmax_counts_[layer][i]) / static_cast<double>(samples_[layer]);
  return out;
}

Probs RoutingAccumulator::mean_probs(std::size_t layer) const {
  Probs out{};
  if (samples_[layer] == 0) return out;
  for (std::size_t i = 0; i < kNumModules; ++i) out[i] = prob_sums_[layer][i] / static_cast<double>(samples_[layer]);
  return out;
}

double RoutingAccumulator::gate_set_entropy(std::size_t layer) const {
  if (samples_[layer] == 0) return 0.0;
  double h = 0.0;
  for (auto c : gate_set_counts_[layer]) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / static_cast<double>(samples_[layer]);
    h -= p * std::log2(p);
  }
  return h == 0.0 ? 0.0 : h;  // avoid -0
}

nlohmann::json RoutingAccumulator::to_json() const {
  nlohmann::json modules = nlohmann::json::array();
  for (auto m : kModules) modules.push_back(name(m));
  nlohmann::json layers_json = nlohmann::json::array();
  for (std::size_t l = 0; l < layers(); ++l) {
    auto share = activation_share(l);
    auto f = argmax_fraction(l);
    auto p = mean_probs(l);
    layers_json.push_back({{"layer", l},
                           {"samples", samples_[l]},
                           {"activation_share", std::vector<double>(share.begin(), share.end())},
                           {"argmax_fraction", std::vector<double>(f.begin(), f.end())},
                           {"mean_probability", std::vector<double>(p.begin(), p.end())},
                           {"gate_counts", std::vector<std::uint64_t>(gate_counts_[l].begin(), gate_counts_[l].end())},
                           {"gate_set_entropy_bits", gate_set_entropy(l)}});
  }
  return {{"modules", modules}, {"layers", layers_json}};
}

}  // namespace dlf::lora
