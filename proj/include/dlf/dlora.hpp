// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dlf/nn.hpp"

namespace dlf::lora {

/// Adapter attachment points of one LLaMA-style block, in router slot order.
enum class Module : std::uint8_t { Q = 0, K, V, O, G, U, D };
inline constexpr std::size_t kNumModules = 7;
inline constexpr std::array<Module, kNumModules> kModules = {Module::Q, Module::K, Module::V, Module::O,
                                                             Module::G, Module::U, Module::D};
const char* name(Module m);

using Gates = std::array<std::uint8_t, kNumModules>;
using Probs = std::array<double, kNumModules>;

/// Low-rank pair (A: d_in×r, B: r×d_out) attached to one backbone linear.
struct LoraAdapter {
  Module module = Module::Q;
  std::size_t rank = 0;
  ad::Tensor a;
  ad::Tensor b;
};

/// A ~ N(0, 0.02²), B = 0. Requires 1 ≤ rank ≤ min(d_in, d_out)/2.
LoraAdapter make_adapter(Module module, std::size_t d_in, std::size_t d_out, std::size_t rank, Rng& rng);

/// x·W + gate·(x·A)·B + b, with gate applied per row. The low-rank product
/// A·B is never formed. Rows whose gate is 0 receive exactly x·W + b.
ad::Tensor apply(const ad::Tensor& x, const nn::Linear& base, const LoraAdapter* adapter,
                 std::span<const double> row_gates);
ad::Tensor apply(const ad::Tensor& x, const nn::Linear& base, const LoraAdapter* adapter, double gate);

enum class RouterActivation { Tanh, Identity, Relu };
RouterActivation parse_activation(const std::string& name);
std::string to_string(RouterActivation a);

struct LoraRouter {
  ad::Tensor weight;  // d_model×7
  RouterActivation activation = RouterActivation::Tanh;
  std::size_t top_n = 4;
};

LoraRouter make_router(std::size_t d_model, std::size_t top_n, RouterActivation act, Rng& rng);

struct RouterDecision {
  std::size_t layer = 0;
  Probs probs{};
  Gates gates{};
};

/// Last row of a single sequence.
ad::Tensor pool(const ad::Tensor& hidden);
/// Last row of each of `batch` consecutive sequences of length `seq_len`.
ad::Tensor pool(const ad::Tensor& hidden, std::size_t batch, std::size_t seq_len);

/// 1 on the n largest entries, ties broken toward the lower slot index.
Gates top_n(const Probs& probs, std::size_t n);

struct RouteResult {
  ad::Tensor probs;  // batch×7, on the tape when training
  std::vector<RouterDecision> decisions;
};

/// probs = softmax(act(pooled)·W_r) per row; gates = top-n of probs.
RouteResult route(const ad::Tensor& pooled, const LoraRouter& router, std::size_t layer);

/// Per-layer batch statistics feeding the load-balancing loss.
struct RoutingStats {
  std::vector<Probs> f;          // fraction of samples whose argmax slot is i
  std::vector<Probs> p_hat;      // batch-mean probability of slot i
  std::vector<ad::Tensor> p_hat_tensor;  // same as p_hat, differentiable (1×7)
};

RoutingStats accumulate_stats(const std::vector<RouteResult>& layers);

/// N_mod · Σ_l Σ_i f_i^l · p̂_i^l; f is a constant, p̂ carries gradients.
ad::Tensor load_balance_loss(const RoutingStats& stats);

/// Long-run routing counters over many batches (evaluation export, entropy).
class RoutingAccumulator {
 public:
  explicit RoutingAccumulator(std::size_t layers = 0) { reset(layers); }
  void reset(std::size_t layers);
  void add(const std::vector<RouteResult>& layers);
  /// Adds decisions where the gates were overridden (static / disabled adapters).
  void add_forced(std::size_t layer, const RouterDecision& decision, const Gates& applied);

  std::size_t layers() const { return gate_counts_.size(); }
  std::size_t samples(std::size_t layer) const { return samples_[layer]; }
  /// Share of all activated adapters that went to each module (sums to 1).
  Probs activation_share(std::size_t layer) const;
  Probs argmax_fraction(std::size_t layer) const;
  Probs mean_probs(std::size_t layer) const;
  /// Shannon entropy in bits of the distribution over distinct gate sets.
  double gate_set_entropy(std::size_t layer) const;
  nlohmann::json to_json() const;

 private:
  void record(std::size_t layer, const Probs& probs, const Gates& gates);

  std::vector<std::array<std::uint64_t, kNumModules>> gate_counts_;
  std::vector<std::array<std::uint64_t, kNumModules>> argmax_counts_;
  std::vector<Probs> prob_sums_;
  std::vector<std::array<std::uint64_t, 128>> gate_set_counts_;
  std::vector<std::size_t> samples_;
};

}  // namespace dlf::lora
