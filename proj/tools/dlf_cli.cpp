// SPDX-License-Identifier: Apache-2.0
// Command-line entry point: train, eval, forecast, ablate, sweep-n, synth.
#include <CLI11.hpp>

#include <iostream>
#include <map>
#include <string>

#include "dlf/commands.hpp"

namespace {

using dlf::config::RunConfig;

struct Overrides {
  std::string config_path;
  std::map<std::string, std::string> values;
};

// Every config key becomes --key (and --key-with-hyphens when it has underscores).
void add_config_options(CLI::App* app, Overrides& ov) {
  // Unrecognized flags are reported by the config registry, which lists the valid keys.
  app->allow_extras();
  app->add_option("--config", ov.config_path, "config file (sectioned key = value)");
  for (const auto& k : dlf::config::keys()) {
    std::string names = "--" + k.key;
    std::string hyphen = k.key;
    for (auto& ch : hyphen)
      if (ch == '_') ch = '-';
    if (hyphen != k.key) names += ",--" + hyphen;
    const std::string key = k.key;
    app->add_option_function<std::string>(
           names, [&ov, key](const std::string& v) { ov.values[key] = v; }, k.help)
        ->group("Config [" + k.section + "]");
  }
}

void reject_extras(const CLI::App* app) {
  for (const auto& extra : app->remaining()) {
    std::string key = extra.substr(extra.find_first_not_of('-'));
    key = key.substr(0, key.find('='));
    for (auto& ch : key)
      if (ch == '-') ch = '_';
    dlf::config::RunConfig scratch;
    dlf::config::set(scratch, key, "");  // throws ConfigError for unknown keys
    throw dlf::config::ConfigError("unexpected argument '" + extra + "'");
  }
}

RunConfig resolve(const Overrides& ov) {
  RunConfig cfg = ov.config_path.empty() ? RunConfig{} : dlf::config::load(ov.config_path);
  for (const auto& [k, v] : ov.values) dlf::config::set(cfg, k, v);
  dlf::config::validate(cfg);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Channel-as-token forecaster with prompt alignment and routed LoRA adapters"};
  app.require_subcommand(1);

  Overrides train_ov, eval_ov, ablate_ov, sweep_ov, synth_ov;

  auto* train = app.add_subcommand("train", "train a model and write checkpoint, history and routing stats");
  add_config_options(train, train_ov);

  std::string eval_ckpt, eval_out = "dlf_eval";
  auto* eval = app.add_subcommand("eval", "score a checkpoint on the test split");
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
  eval->add_option("--eval-out", eval_out, "directory for metrics.json, metrics.txt, routing.json");
  add_config_options(eval, eval_ov);

  std::string fc_ckpt, fc_input, fc_output;
  auto* forecast = app.add_subcommand("forecast", "forecast the horizon after the last lookback rows of a CSV");
  forecast->add_option("--checkpoint", fc_ckpt, "checkpoint file")->required();
  forecast->add_option("--input", fc_input, "CSV holding at least lookback rows")->required();
  forecast->add_option("--output", fc_output, "forecast CSV to write")->required();

  std::size_t jobs = 1;
  auto* ablate = app.add_subcommand("ablate", "train every architecture variant on the same data and seed");
  ablate->add_option("--jobs", jobs, "variants trained concurrently (results do not depend on it)")
      ->check(CLI::PositiveNumber);
  add_config_options(ablate, ablate_ov);

  std::vector<std::size_t> n_values = {1, 2, 3, 4, 5, 6, 7};
  auto* sweep = app.add_subcommand("sweep-n", "train once per active-adapter count n");
  sweep->add_option("--n-values", n_values, "adapter counts to try")->delimiter(',')->check(CLI::Range(1, 7));
  add_config_options(sweep, sweep_ov);

  std::string synth_output = "synthetic.csv";
  auto* synth = app.add_subcommand("synth", "write a synthetic series CSV and its parameter sidecar");
  synth->add_option("--output", synth_output, "CSV path; the sidecar uses the same stem with .json");
  add_config_options(synth, synth_ov);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : dlf::cli::kConfigError;
  }

  return dlf::cli::run_guarded(
      [&]() -> int {
        for (const auto* sub : app.get_subcommands()) reject_extras(sub);
        if (*train) return dlf::cli::cmd_train(resolve(train_ov), std::cout);
        if (*eval) return dlf::cli::cmd_eval(eval_ckpt, eval_ov.values, eval_out, std::cout);
        if (*forecast) return dlf::cli::cmd_forecast(fc_ckpt, fc_input, fc_output, std::cout);
        if (*ablate) return dlf::cli::cmd_ablate(resolve(ablate_ov), jobs, std::cout);
        if (*sweep) return dlf::cli::cmd_sweep_n(resolve(sweep_ov), n_values, std::cout);
        return dlf::cli::cmd_synth(resolve(synth_ov), synth_output, std::cout);
      },
      std::cerr);
}
