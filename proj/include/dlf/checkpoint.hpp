// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "dlf/config.hpp"
#include "dlf/model.hpp"

namespace dlf::ckpt {

/// Unreadable, truncated, or mismatched checkpoint file.
class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kFormatVersion = 1;

struct StoredTensor {
  std::string name;
  ad::Shape shape;
  std::vector<double> values;
};

/// Binary layout, little-endian throughout:
///   "DLF1" | u32 version | u64 n + config text | u64 seed | u64 step
///   | u64 n + rng state text | u32 tensor count
///   | per tensor: u32 n + name, u8 dtype (1 = f64), u32 rank, u64 dims[rank],
///     u64 payload bytes, f64 values
struct Checkpoint {
  std::string config_text;
  std::uint64_t seed = 0;
  std::uint64_t step = 0;
  std::string rng_state;
  std::vector<StoredTensor> tensors;
};

void write(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read(const std::filesystem::path& path);

/// Snapshot of every tensor the model uses, trainable or not.
Checkpoint capture(const ForecastModel& model, const config::RunConfig& cfg, std::uint64_t step,
                   const std::string& rng_state);
/// Overwrites the model's tensors; every stored name must match one model
/// tensor of the same shape and vice versa.
void restore(ForecastModel& model, const Checkpoint& ckpt);

struct Loaded {
  config::RunConfig config;
  std::unique_ptr<ForecastModel> model;
  std::uint64_t step = 0;
  std::string rng_state;
};

/// Rebuilds the model from the embedded config and restores its weights.
Loaded load(const std::filesystem::path& path);

}  // namespace dlf::ckpt
