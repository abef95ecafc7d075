// SPDX-License-Identifier: Apache-2.0
#include "dlf/alignment.hpp"

#include <cctype>
#include <cmath>
#include <sstream>

namespace dlf::align {

std::vector<std::size_t> tokenize(const std::string& text, std::size_t vocab, std::size_t max_tokens) {
  if (vocab == 0) throw ConfigError("prompt vocabulary must be non-empty");
  std::istringstream is(text);
  std::vector<std::size_t> ids;
  std::string word;
  while (is >> word && ids.size() < max_tokens) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : word) {
      h ^= static_cast<unsigned char>(std::tolower(ch));
      h *= 0x100000001b3ULL;
    }
    ids.push_back(static_cast<std::size_t>(h % vocab));
  }
  if (ids.empty()) throw ConfigError("prompt text is empty");
  return ids;
}

std::string render_prompt(const std::string& tmpl, const std::string& dataset, std::size_t horizon,
                          const std::string& frequency) {
  std::string out = tmpl;
  auto replace = [&](const std::string& key, const std::string& value) {
    for (auto pos = out.find(key); pos != std::string::npos; pos = out.find(key, pos + value.size()))
      out.replace(pos, key.size(), value);
  };
  replace("{dataset}", dataset);
  replace("{horizon}", std::to_string(horizon));
  replace("{frequency}", frequency);
  return out;
}

PromptTable::PromptTable(std::size_t vocab, std::size_t d_model, Rng& rng)
    : table_(nn::gaussian({vocab, d_model}, 0.02, rng, true)) {}

ad::Tensor PromptTable::lookup(const std::vector<std::size_t>& ids) const { return ad::select_rows(table_, ids); }

PromptEmbedding PromptTable::build_prompt(const std::string& text, std::size_t max_tokens) const {
  PromptEmbedding p;
  p.source_text = text;
  p.bucket_ids = tokenize(text, vocab(), max_tokens);
  p.tokens = lookup(p.bucket_ids);
  return p;
}

void PromptTable::collect(nn::ParamList& out, const std::string& prefix) const {
  out.push_back({prefix + ".table", table_});
}

CrossAttention::CrossAttention(std::size_t d_model, std::size_t heads, Rng& rng) : heads_(heads) {
  if (heads == 0 || d_model % heads != 0)
    throw ConfigError("alignment heads (" + std::to_string(heads) + ") must divide d_model (" +
                      std::to_string(d_model) + ")");
  wq_ = nn::gaussian({d_model, d_model}, 0.02, rng, true);
  wk_ = nn::gaussian({d_model, d_model}, 0.02, rng, true);
  wv_ = nn::gaussian({d_model, d_model}, 0.02, rng, true);
  wo_ = ad::Tensor::zeros({d_model, d_model}, true);
}

ad::Tensor CrossAttention::align(const ad::Tensor& ts_tokens, const ad::Tensor& prompt_tokens,
                                 AttentionTrace* trace) const {
  const std::size_t dm = d_model();
  if (ts_tokens.cols() != dm || prompt_tokens.cols() != dm)
    throw ad::DimensionError("align: token widths " + ad::to_string(ts_tokens.shape()) + " / " +
                             ad::to_string(prompt_tokens.shape()) + " vs d_model " + std::to_string(dm));
  const std::size_t dh = dm / heads_;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  auto q = ad::matmul(ts_tokens, wq_);
  auto k = ad::matmul(prompt_tokens, wk_);
  auto v = ad::matmul(prompt_tokens, wv_);
  std::vector<ad::Tensor> heads;
  heads.reserve(heads_);
  for (std::size_t h = 0; h < heads_; ++h) {
    auto qh = ad::slice(q, 1, h * dh, (h + 1) * dh);
    auto kh = ad::slice(k, 1, h * dh, (h + 1) * dh);
    auto vh = ad::slice(v, 1, h * dh, (h + 1) * dh);
    auto weights = ad::softmax(ad::scale(ad::matmul(qh, ad::transpose(kh)), inv_sqrt), 1);
    if (trace) trace->weights.push_back(weights);
    heads.push_back(ad::matmul(weights, vh));
  }
  auto mixed = heads_ == 1 ? heads.front() : ad::concat(heads, 1);
  return ad::add(ts_tokens, ad::matmul(mixed, wo_));
}

void CrossAttention::collect(nn::ParamList& out, const std::string& prefix) const {
  out.push_back({prefix + ".wq", wq_});
  out.push_back({prefix + ".wk", wk_});
  out.push_back({prefix + ".wv", wv_});
  out.push_back({prefix + ".wo", wo_});
}

}  // namespace dlf::align
