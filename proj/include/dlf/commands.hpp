// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "dlf/config.hpp"
#include "dlf/data.hpp"
#include "dlf/metrics.hpp"
#include "dlf/model.hpp"
#include "dlf/training.hpp"

namespace dlf::cli {

enum ExitCode : int { kOk = 0, kFailure = 1, kConfigError = 2, kDataError = 3, kNumericError = 4 };

/// Runs `body`, printing any error to `err` and mapping it to an exit code.
int run_guarded(const std::function<int()>& body, std::ostream& err);

/// Series, splits and window sets for one config.
struct Pipeline {
  data::SeriesPtr series;
  std::optional<data::SynthResult> synthetic;  // set when the series was generated
  data::Splits splits;
  data::SeriesView train_view;  // after the few-shot cut
  data::WindowSet train;
  data::WindowSet val;
  data::WindowSet test;
};

Pipeline prepare(const config::RunConfig& cfg);

/// Mean squared error of repeating each window's last lookback value.
double repeat_last_mse(const data::WindowSet& set);

struct Fitted {
  std::unique_ptr<ForecastModel> model;
  train::TrainResult result;
  std::uint64_t shared_init_checksum = 0;  // of the shared components before training
};

Fitted fit(const config::RunConfig& cfg, const Pipeline& data);

/// Test-split metrics of a model (and of the seasonal-naive baseline).
struct Evaluation {
  train::Predictions predictions;
  metrics::MetricReport model;
  metrics::MetricReport naive;
};

Evaluation evaluate(const ForecastModel& model, const config::RunConfig& cfg, const data::WindowSet& set);

/// Artifact names inside out_dir.
inline constexpr const char* kCheckpointFile = "model.ckpt";
inline constexpr const char* kHistoryFile = "history.csv";
inline constexpr const char* kRoutingFile = "routing.json";

int cmd_train(const config::RunConfig& cfg, std::ostream& out);
/// `overrides` may change data keys; lookback and horizon must match the checkpoint.
int cmd_eval(const std::filesystem::path& checkpoint, const std::map<std::string, std::string>& overrides,
             const std::filesystem::path& out_dir, std::ostream& out);
/// Reads the last T_L rows of `input` and writes T_P forecast rows to `output`.
int cmd_forecast(const std::filesystem::path& checkpoint, const std::filesystem::path& input,
                 const std::filesystem::path& output, std::ostream& out);
/// `jobs` > 1 trains variants concurrently; results are identical either way.
int cmd_ablate(const config::RunConfig& cfg, std::size_t jobs, std::ostream& out);
int cmd_sweep_n(const config::RunConfig& cfg, const std::vector<std::size_t>& n_values, std::ostream& out);
int cmd_synth(const config::RunConfig& cfg, const std::filesystem::path& output, std::ostream& out);

}  // namespace dlf::cli
