// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "dlf/data.hpp"
#include "dlf/dlora.hpp"
#include "dlf/model.hpp"

namespace dlf::train {

enum class LossKind { Mse, Smape };
LossKind parse_loss(const std::string& name);
std::string to_string(LossKind k);

struct TrainConfig {
  double lr = 1e-3;
  double weight_decay = 0.0;
  std::size_t batch_size = 16;
  std::size_t epochs = 20;
  double lambda_lb = 0.01;
  LossKind loss = LossKind::Mse;
  std::uint64_t seed = 7;
  std::size_t patience = 3;
  double grad_clip = 5.0;
  bool verbose = false;
};

void validate(const TrainConfig& config);

/// Training diverged (non-finite loss). what() carries the diagnostic dump.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Mean of squared elementwise error.
ad::Tensor mse_loss(const ad::Tensor& y, const ad::Tensor& y_hat);
/// (200/count)·Σ |y−ŷ| / max(|y|+|ŷ|, 1e-8).
ad::Tensor smape_loss(const ad::Tensor& y, const ad::Tensor& y_hat);
/// task + λ·L_lb(stats).
ad::Tensor total_loss(const ad::Tensor& task_loss, const lora::RoutingStats& stats, double lambda_lb);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = std::numeric_limits<double>::quiet_NaN();
  double lb_loss = 0.0;
  std::vector<double> routing_entropy;  // bits, per layer
};

struct TrainResult {
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  double best_val = std::numeric_limits<double>::quiet_NaN();
  bool early_stopped = false;
  std::uint64_t optimizer_steps = 0;
  lora::RoutingAccumulator last_epoch_routing;
  std::string rng_state;  // shuffle generator after the last epoch
};

/// Optimizes the model's trainable tensors. Keeps the best-validation weights
/// (or the final weights when `val` has no windows).
TrainResult train(ForecastModel& model, const data::WindowSet& train_set, const data::WindowSet* val_set,
                  const TrainConfig& config);

/// Forecasts for every window of a set, in window order.
struct Predictions {
  std::size_t windows = 0;
  std::size_t channels = 0;
  std::size_t lookback = 0;
  std::size_t horizon = 0;
  std::vector<double> x;      // windows·channels rows of T_L
  std::vector<double> y;      // windows·channels rows of T_P
  std::vector<double> y_hat;  // same layout as y
  lora::RoutingAccumulator routing;
};

Predictions predict(const ForecastModel& model, const data::WindowSet& set, std::size_t batch_size = 64);
/// Mean squared error over every forecast value of a set.
double evaluate_mse(const ForecastModel& model, const data::WindowSet& set, std::size_t batch_size = 64);

void write_history_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& history);

}  // namespace dlf::train
