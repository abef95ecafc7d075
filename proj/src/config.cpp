// SPDX-License-Identifier: Apache-2.0
#include "dlf/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <type_traits>

#include "dlf/metrics.hpp"

namespace dlf::config {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  return s.substr(first, s.find_last_not_of(" \t\r") - first + 1);
}

template <typename T>
T parse_value(const std::string& key, const std::string& text) {
  const std::string v = trim(text);
  if constexpr (std::is_same_v<T, std::string>) {
    return v;
  } else if constexpr (std::is_same_v<T, bool>) {
    if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "off" || v == "no") return false;
    throw ConfigError("key '" + key + "': expected a boolean, got '" + v + "'");
  } else {
    T out{};
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (v.empty() || ec != std::errc() || ptr != v.data() + v.size())
      throw ConfigError("key '" + key + "': cannot parse '" + v + "' as a number");
    return out;
  }
}

template <typename T>
std::string format_value(const T& v) {
  if constexpr (std::is_same_v<T, std::string>) {
    return v;
  } else if constexpr (std::is_same_v<T, bool>) {
    return v ? "true" : "false";
  } else if constexpr (std::is_floating_point_v<T>) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
  } else {
    return std::to_string(v);
  }
}

template <typename T>
KeyInfo entry(std::string key, std::string section, std::string help, T RunConfig::*member) {
  return {key, std::move(section), std::move(help),
          [key, member](RunConfig& c, const std::string& v) { c.*member = parse_value<T>(key, v); },
          [member](const RunConfig& c) { return format_value(c.*member); }};
}

std::vector<KeyInfo> build_keys() {
  std::vector<KeyInfo> k;
  // data
  k.push_back(entry("csv", "data", "input CSV path (empty: use the synthetic generator)", &RunConfig::csv));
  k.push_back(entry("date_column", "data", "name of the date column to validate and drop", &RunConfig::date_column));
  k.push_back(entry("synthetic", "data", "synthetic kind: sine_mixture | ar2 | trend_seasonal", &RunConfig::synthetic));
  k.push_back(entry("synth_channels", "data", "synthetic channel count N", &RunConfig::synth_channels));
  k.push_back(entry("synth_length", "data", "synthetic series length T", &RunConfig::synth_length));
  k.push_back(entry("synth_noise", "data", "synthetic observation noise std", &RunConfig::synth_noise));
  k.push_back(entry("synth_seed", "data", "seed of the synthetic generator (0: use seed)", &RunConfig::synth_seed));
  k.push_back(entry("dataset_name", "data", "dataset name used in the prompt", &RunConfig::dataset_name));
  k.push_back(entry("frequency", "data", "sampling frequency tag (hourly, daily, 15min, ...)", &RunConfig::frequency));
  k.push_back(entry("train_frac", "data", "training fraction of T", &RunConfig::train_frac));
  k.push_back(entry("val_frac", "data", "validation fraction of T", &RunConfig::val_frac));
  k.push_back(entry("train_len", "data", "explicit training length (overrides fractions when > 0)", &RunConfig::train_len));
  k.push_back(entry("val_len", "data", "explicit validation length", &RunConfig::val_len));
  k.push_back(entry("test_len", "data", "explicit test length", &RunConfig::test_len));
  k.push_back(entry("lookback", "data", "lookback window T_L", &RunConfig::lookback));
  k.push_back(entry("horizon", "data", "prediction horizon T_P", &RunConfig::horizon));
  k.push_back(entry("few_shot", "data", "fraction of the training split kept (prefix)", &RunConfig::few_shot));
  k.push_back(entry("instance_norm", "data", "per-window z-scoring with denormalized outputs", &RunConfig::instance_norm));
  k.push_back(entry("global_standardize", "data", "standardize channels with training-split statistics",
                    &RunConfig::global_standardize));
  // model
  k.push_back(entry("d_model", "model", "backbone width d_m", &RunConfig::d_model));
  k.push_back(entry("layers", "model", "backbone block count L", &RunConfig::layers));
  k.push_back(entry("heads", "model", "backbone attention heads", &RunConfig::heads));
  k.push_back(entry("d_ffn", "model", "backbone FFN width (0: 4·d_model)", &RunConfig::d_ffn));
  k.push_back(entry("embed_hidden", "model", "token-embedder hidden width (0: 2·d_model)", &RunConfig::embed_hidden));
  k.push_back(entry("align_heads", "model", "cross-attention heads K", &RunConfig::align_heads));
  k.push_back(entry("rank", "model", "LoRA rank r", &RunConfig::rank));
  k.push_back({"lora_preset", "model", "rank preset: appendix (r=8) | main_text (r=4)",
               [](RunConfig& c, const std::string& v) {
                 const auto p = trim(v);
                 if (p == "appendix")
                   c.rank = 8;
                 else if (p == "main_text")
                   c.rank = 4;
                 else
                   throw ConfigError("key 'lora_preset': expected appendix or main_text, got '" + p + "'");
               },
               [](const RunConfig& c) { return c.rank == 8 ? "appendix" : c.rank == 4 ? "main_text" : "custom"; }});
  k.push_back(entry("top_n", "model", "adapters activated per layer n", &RunConfig::top_n));
  k.push_back(entry("router_activation", "model", "router input activation: tanh | identity | relu",
                    &RunConfig::router_activation));
  k.push_back(entry("causal_mask", "model", "causal mask over channel tokens", &RunConfig::causal_mask));
  k.push_back(entry("backbone_mode", "model", "random_frozen | pretrain_then_freeze", &RunConfig::backbone_mode));
  k.push_back(entry("prompt_template", "model", "prompt text with {dataset} {horizon} {frequency}",
                    &RunConfig::prompt_template));
  k.push_back(entry("prompt_vocab", "model", "prompt hash buckets V", &RunConfig::prompt_vocab));
  k.push_back(entry("prompt_max_tokens", "model", "prompt length cap P_max", &RunConfig::prompt_max_tokens));
  k.push_back(entry("variant", "model", "full | v1_no_align | v2_prefix_prompt | v3_static_lora | v4_frozen",
                    &RunConfig::variant));
  // train
  k.push_back(entry("lr", "train", "learning rate", &RunConfig::lr));
  k.push_back(entry("weight_decay", "train", "AdamW decoupled weight decay", &RunConfig::weight_decay));
  k.push_back(entry("batch_size", "train", "windows per batch", &RunConfig::batch_size));
  k.push_back(entry("epochs", "train", "maximum epochs", &RunConfig::epochs));
  k.push_back(entry("lambda_lb", "train", "load-balancing coefficient", &RunConfig::lambda_lb));
  k.push_back(entry("loss", "train", "mse | smape", &RunConfig::loss));
  k.push_back(entry("seed", "train", "seed for initialization and shuffling (and synthetic data unless synth_seed is set)", &RunConfig::seed));
  k.push_back(entry("patience", "train", "early-stopping patience in epochs", &RunConfig::patience));
  k.push_back(entry("grad_clip", "train", "global gradient-norm clip", &RunConfig::grad_clip));
  // eval
  k.push_back(entry("mase_convention", "eval", "paper | m4", &RunConfig::mase_convention));
  k.push_back(entry("seasonality", "eval", "seasonal period s (0: from frequency)", &RunConfig::seasonality));
  // output
  k.push_back(entry("out_dir", "output", "directory for run artifacts", &RunConfig::out_dir));
  return k;
}

}  // namespace

const std::vector<KeyInfo>& keys() {
  static const std::vector<KeyInfo> k = build_keys();
  return k;
}

std::vector<std::string> key_names() {
  std::vector<std::string> out;
  for (const auto& k : keys()) out.push_back(k.key);
  return out;
}

namespace {
const KeyInfo& find(const std::string& key) {
  for (const auto& k : keys())
    if (k.key == key) return k;
  std::string valid;
  for (const auto& k : keys()) valid += (valid.empty() ? "" : ", ") + k.key;
  throw ConfigError("unknown config key '" + key + "'; valid keys: " + valid);
}
}  // namespace

void set(RunConfig& cfg, const std::string& key, const std::string& value) { find(key).set(cfg, value); }
std::string get(const RunConfig& cfg, const std::string& key) { return find(key).get(cfg); }

RunConfig parse(const std::string& text, RunConfig cfg) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::string section;
  while (std::getline(in, line)) {
    ++line_no;
    auto t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']') throw ConfigError("line " + std::to_string(line_no) + ": malformed section header");
      section = trim(t.substr(1, t.size() - 2));
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value', got '" + t + "'");
    const auto key = trim(t.substr(0, eq));
    const auto& info = find(key);
    if (!section.empty() && section != info.section)
      throw ConfigError("line " + std::to_string(line_no) + ": key '" + key + "' belongs in [" + info.section +
                        "], found in [" + section + "]");
    info.set(cfg, t.substr(eq + 1));
  }
  return cfg;
}

RunConfig load(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), std::move(base));
}

std::string serialize(const RunConfig& cfg) {
  std::ostringstream os;
  std::string section;
  for (const auto& k : keys()) {
    if (k.key == "lora_preset") continue;  // derived from rank
    if (k.section != section) {
      if (!section.empty()) os << '\n';
      section = k.section;
      os << '[' << section << "]\n";
    }
    os << k.key << " = " << k.get(cfg) << '\n';
  }
  return os.str();
}

void validate(const RunConfig& c) {
  auto fail = [](const std::string& m) { throw ConfigError(m); };
  if (c.lookback == 0) fail("lookback must be positive");
  if (c.horizon == 0) fail("horizon must be positive");
  if (c.d_model == 0 || c.heads == 0 || c.d_model % c.heads) fail("heads must divide d_model");
  if (c.align_heads == 0 || c.d_model % c.align_heads) fail("align_heads must divide d_model");
  if (c.top_n < 1 || c.top_n > lora::kNumModules) fail("top_n must lie in [1, 7]");
  const std::size_t ffn = c.d_ffn ? c.d_ffn : 4 * c.d_model;
  if (c.rank < 1 || c.rank > std::min(c.d_model, ffn) / 2) fail("rank must satisfy 1 <= r <= min(d_model, d_ffn)/2");
  if (!(c.few_shot > 0.0 && c.few_shot <= 1.0)) fail("few_shot must lie in (0, 1]");
  if (c.prompt_vocab == 0 || c.prompt_max_tokens == 0) fail("prompt_vocab and prompt_max_tokens must be positive");
  if (c.csv.empty() && (c.synth_channels == 0 || c.synth_length == 0)) fail("synthetic series needs N, T >= 1");
  try {
    parse_variant(c.variant);
    lora::parse_activation(c.router_activation);
    backbone::parse_pretrain_mode(c.backbone_mode);
    train::parse_loss(c.loss);
    if (c.mase_convention != "paper" && c.mase_convention != "m4") fail("mase_convention must be paper or m4");
    if (c.csv.empty()) data::parse_synth_kind(c.synthetic);
    train::validate(train_config(c));
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
}

ModelConfig model_config(const RunConfig& c) {
  ModelConfig m;
  m.lookback = c.lookback;
  m.horizon = c.horizon;
  m.embed_hidden = c.embed_hidden;
  m.backbone.layers = c.layers;
  m.backbone.d_model = c.d_model;
  m.backbone.heads = c.heads;
  m.backbone.d_ffn = c.d_ffn ? c.d_ffn : 4 * c.d_model;
  m.backbone.frozen = true;
  m.backbone.causal_mask = c.causal_mask;
  m.backbone.pretrain_mode = backbone::parse_pretrain_mode(c.backbone_mode);
  m.align_heads = c.align_heads;
  m.rank = c.rank;
  m.top_n = c.top_n;
  m.router_activation = lora::parse_activation(c.router_activation);
  m.instance_norm = c.instance_norm;
  m.prompt_vocab = c.prompt_vocab;
  m.prompt_max_tokens = c.prompt_max_tokens;
  m.variant = parse_variant(c.variant);
  return m;
}

train::TrainConfig train_config(const RunConfig& c) {
  train::TrainConfig t;
  t.lr = c.lr;
  t.weight_decay = c.weight_decay;
  t.batch_size = c.batch_size;
  t.epochs = c.epochs;
  t.lambda_lb = c.lambda_lb;
  t.loss = train::parse_loss(c.loss);
  t.seed = c.seed;
  t.patience = c.patience;
  t.grad_clip = c.grad_clip;
  return t;
}

std::string dataset_label(const RunConfig& c) {
  if (!c.dataset_name.empty()) return c.dataset_name;
  if (!c.csv.empty()) return std::filesystem::path(c.csv).stem().string();
  return data::to_string(data::parse_synth_kind(c.synthetic));
}

std::string prompt_text(const RunConfig& c) {
  return align::render_prompt(c.prompt_template, dataset_label(c), c.horizon, c.frequency);
}

std::size_t seasonality(const RunConfig& c) {
  return c.seasonality ? c.seasonality : metrics::seasonality_for(c.frequency);
}

}  // namespace dlf::config
