// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "dlf/tensor.hpp"

namespace dlf {
class Rng;
}

namespace dlf::data {

/// Ingestion and windowing failures (bad files, short series, few-shot starvation).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// T×N matrix of observations, row-major by time step.
struct MultivariateSeries {
  std::string name;
  std::string frequency;
  std::vector<std::string> channel_names;
  std::size_t steps = 0;
  std::size_t channels = 0;
  std::vector<double> values;

  double at(std::size_t t, std::size_t n) const { return values[t * channels + n]; }
};

using SeriesPtr = std::shared_ptr<const MultivariateSeries>;

/// Throws DataError unless the series is finite and holds at least one
/// lookback+horizon window.
void validate(const MultivariateSeries& series, std::size_t lookback, std::size_t horizon);

/// Contiguous range of time steps [begin, begin+length) of a shared series.
class SeriesView {
 public:
  SeriesView() = default;
  SeriesView(SeriesPtr series, std::size_t begin, std::size_t length);

  const MultivariateSeries& series() const { return *series_; }
  const SeriesPtr& shared() const { return series_; }
  std::size_t begin() const { return begin_; }
  std::size_t length() const { return length_; }
  std::size_t end() const { return begin_ + length_; }
  std::size_t channels() const { return series_ ? series_->channels : 0; }
  bool empty() const { return length_ == 0; }
  /// Value at view-relative step t.
  double at(std::size_t t, std::size_t n) const { return series_->at(begin_ + t, n); }

 private:
  SeriesPtr series_;
  std::size_t begin_ = 0;
  std::size_t length_ = 0;
};

struct SplitSpec {
  std::size_t train_len = 0;
  std::size_t val_len = 0;
  std::size_t test_len = 0;
};

/// Split lengths from fractions of T; the test split takes the remainder.
SplitSpec split_by_fraction(std::size_t steps, double train_frac, double val_frac);

struct Splits {
  SeriesView train;
  SeriesView val;
  SeriesView test;
};

/// Chronological train/val/test views. Val and test reach back `lookback`
/// steps into the preceding split so their first window has a full lookback.
Splits chronological_split(const SeriesPtr& series, const SplitSpec& spec, std::size_t lookback);

struct Window {
  std::size_t x_begin;  // absolute step index of the first lookback step
  std::size_t y_begin;  // absolute step index of the first target step
};

struct WindowSet {
  SeriesView view;
  std::size_t lookback = 0;
  std::size_t horizon = 0;
  std::vector<Window> windows;
  std::string warning;  // set when the view is too short for any window
};

WindowSet make_windows(const SeriesView& view, std::size_t lookback, std::size_t horizon,
                       std::size_t stride = 1);

/// First floor(fraction·length) steps of the training view. Throws DataError
/// ("insufficient few-shot data") when the prefix cannot hold one window.
SeriesView few_shot_subset(const SeriesView& train, double fraction, std::size_t lookback,
                           std::size_t horizon);

/// Per-row mean/std of a lookback block (one row per sample·channel).
struct NormStats {
  std::vector<double> mean;
  std::vector<double> stddev;
};

inline constexpr double kStdFloor = 1e-8;

/// Lookbacks and targets of a set of windows, one row per (sample, channel).
/// Row b·N + n holds channel n of sample b.
struct WindowBatch {
  std::size_t batch = 0;
  std::size_t channels = 0;
  ad::Tensor x;  // (B·N)×T_L
  ad::Tensor y;  // (B·N)×T_P
  NormStats norm_stats;  // per-row statistics of x
};

WindowBatch make_batch(const WindowSet& set, std::span<const std::size_t> indices);

/// Shuffled index order over `count` windows.
std::vector<std::size_t> shuffled_order(std::size_t count, Rng& rng);

/// Per-channel z-scoring with statistics taken from a reference view.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> stddev;

  static Standardizer fit(const SeriesView& view);
  MultivariateSeries apply(const MultivariateSeries& series) const;
};

// --- I/O ----------------------------------------------------------------------

/// Reads a header-first, comma-separated file. A column whose header equals
/// `date_column` (case-insensitive) is validated as non-empty and dropped;
/// all other columns must parse as finite floats.
MultivariateSeries load_csv(const std::filesystem::path& path, const std::string& date_column = "date");
MultivariateSeries parse_csv(const std::string& text, const std::string& date_column = "date",
                             const std::string& source = "<memory>");
void write_csv(const std::filesystem::path& path, const MultivariateSeries& series);

// --- Synthetic series ---------------------------------------------------------

enum class SynthKind { SineMixture, Ar2, TrendSeasonal };

SynthKind parse_synth_kind(const std::string& name);
std::string to_string(SynthKind kind);

struct SynthSpec {
  SynthKind kind = SynthKind::SineMixture;
  std::size_t channels = 3;
  std::size_t steps = 2000;
  std::uint64_t seed = 7;
  double noise = 0.0;  // std of additive observation noise
  std::size_t components = 3;  // sine terms per channel
};

struct SynthResult {
  MultivariateSeries series;
  nlohmann::json params;  // every drawn parameter, for the sidecar
};

SynthResult synth_generate(const SynthSpec& spec);
void write_sidecar(const std::filesystem::path& path, const SynthResult& result);

}  // namespace dlf::data
