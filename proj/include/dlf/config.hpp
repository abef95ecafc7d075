// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "dlf/model.hpp"
#include "dlf/training.hpp"

namespace dlf::config {

/// Bad keys, bad values, or inconsistent settings. Maps to exit code 2.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Everything needed to reproduce one run.
struct RunConfig {
  // [data]
  std::string csv;
  std::string date_column = "date";
  std::string synthetic = "sine_mixture";  // used when csv is empty
  std::size_t synth_channels = 3;
  std::size_t synth_length = 2000;
  double synth_noise = 0.0;
  std::uint64_t synth_seed = 0;  // 0 → use seed
  std::string dataset_name;  // defaults to the file stem / synthetic kind
  std::string frequency = "hourly";
  double train_frac = 0.7;
  double val_frac = 0.1;
  std::size_t train_len = 0;  // explicit split lengths override the fractions when train_len > 0
  std::size_t val_len = 0;
  std::size_t test_len = 0;
  std::size_t lookback = 512;
  std::size_t horizon = 96;
  double few_shot = 1.0;
  bool instance_norm = true;
  bool global_standardize = false;

  // [model]
  std::size_t d_model = 64;
  std::size_t layers = 4;
  std::size_t heads = 4;
  std::size_t d_ffn = 0;  // 0 → 4·d_model
  std::size_t embed_hidden = 0;
  std::size_t align_heads = 8;
  std::size_t rank = 8;
  std::size_t top_n = 4;
  std::string router_activation = "tanh";
  bool causal_mask = false;
  std::string backbone_mode = "random_frozen";
  std::string prompt_template = align::kDefaultPromptTemplate;
  std::size_t prompt_vocab = 256;
  std::size_t prompt_max_tokens = 16;
  std::string variant = "full";

  // [train]
  double lr = 1e-3;
  double weight_decay = 0.0;
  std::size_t batch_size = 16;
  std::size_t epochs = 20;
  double lambda_lb = 0.01;
  std::string loss = "mse";
  std::uint64_t seed = 7;
  std::size_t patience = 3;
  double grad_clip = 5.0;

  // [eval]
  std::string mase_convention = "paper";
  std::size_t seasonality = 0;  // 0 → derived from frequency

  // [output]
  std::string out_dir = "dlf_out";
};

struct KeyInfo {
  std::string key;
  std::string section;
  std::string help;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

/// Every configurable key, in file order.
const std::vector<KeyInfo>& keys();
std::vector<std::string> key_names();

/// Sets one key; throws ConfigError naming the valid keys when `key` is unknown.
void set(RunConfig& cfg, const std::string& key, const std::string& value);
std::string get(const RunConfig& cfg, const std::string& key);

/// Parses "[section]" headers and "key = value" lines; '#' and ';' start comments.
RunConfig parse(const std::string& text, RunConfig base = {});
RunConfig load(const std::filesystem::path& path, RunConfig base = {});
/// Sectioned text that parse() reads back to an identical RunConfig.
std::string serialize(const RunConfig& cfg);

/// Checks ranges and cross-field constraints.
void validate(const RunConfig& cfg);

ModelConfig model_config(const RunConfig& cfg);
train::TrainConfig train_config(const RunConfig& cfg);
std::string prompt_text(const RunConfig& cfg);
std::string dataset_label(const RunConfig& cfg);
std::size_t seasonality(const RunConfig& cfg);

}  // namespace dlf::config
