// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dlf/nn.hpp"

namespace dlf::align {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Hash-bucket word ids: whitespace split, lowercase, FNV-1a (64-bit) mod vocab,
/// truncated to max_tokens. Throws ConfigError on empty text.
std::vector<std::size_t> tokenize(const std::string& text, std::size_t vocab, std::size_t max_tokens);

/// Substitutes {dataset}, {horizon} and {frequency} in a prompt template.
std::string render_prompt(const std::string& tmpl, const std::string& dataset, std::size_t horizon,
                          const std::string& frequency);

inline constexpr const char* kDefaultPromptTemplate = "forecast {dataset} horizon {horizon} frequency {frequency}";

struct PromptEmbedding {
  std::string source_text;
  std::vector<std::size_t> bucket_ids;
  ad::Tensor tokens;  // P×d_model rows gathered from the table
};

/// Trainable V×d_model lookup table for prompt words.
class PromptTable {
 public:
  PromptTable() = default;
  PromptTable(std::size_t vocab, std::size_t d_model, Rng& rng);

  PromptEmbedding build_prompt(const std::string& text, std::size_t max_tokens) const;
  /// Gathers rows for already-tokenized ids (differentiable w.r.t. the table).
  ad::Tensor lookup(const std::vector<std::size_t>& ids) const;

  std::size_t vocab() const { return table_.rows(); }
  const ad::Tensor& table() const { return table_; }
  void collect(nn::ParamList& out, const std::string& prefix) const;

 private:
  ad::Tensor table_;
};

/// Per-head attention weights recorded by CrossAttention::align for inspection.
struct AttentionTrace {
  std::vector<ad::Tensor> weights;  // one N×P matrix per head
};

/// Multi-head cross-attention with a residual connection:
///   H ← H + Concat(A_1..A_K)·W^O,  A_k = Softmax(Q_k K_kᵀ / √d_head)·V_k
/// with queries from time-series tokens and keys/values from the prompt.
/// Head k's projections are column block k of the d_model×d_model matrices.
class CrossAttention {
 public:
  CrossAttention() = default;
  CrossAttention(std::size_t d_model, std::size_t heads, Rng& rng);

  ad::Tensor align(const ad::Tensor& ts_tokens, const ad::Tensor& prompt_tokens,
                   AttentionTrace* trace = nullptr) const;

  std::size_t heads() const { return heads_; }
  std::size_t d_model() const { return wq_.rows(); }
  void collect(nn::ParamList& out, const std::string& prefix) const;

  ad::Tensor& wq() { return wq_; }
  ad::Tensor& wk() { return wk_; }
  ad::Tensor& wv() { return wv_; }
  ad::Tensor& wo() { return wo_; }

 private:
  std::size_t heads_ = 1;
  ad::Tensor wq_, wk_, wv_, wo_;
};

}  // namespace dlf::align
