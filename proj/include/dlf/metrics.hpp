// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace dlf::metrics {

/// A metric whose formula is undefined for the given inputs (zero denominator).
class UndefinedMetric : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

double mse(std::span<const double> y, std::span<const double> y_hat);
double mae(std::span<const double> y, std::span<const double> y_hat);
/// (200/H)·Σ |y−ŷ| / (|y|+|ŷ|); a term with y = ŷ = 0 contributes 0.
double smape(std::span<const double> y, std::span<const double> y_hat);
/// (100/H)·Σ |y−ŷ| / |y|; throws UndefinedMetric on a zero target.
double mape(std::span<const double> y, std::span<const double> y_hat);

enum class MaseConvention {
  Horizon,  // scale by the seasonal-difference error of the target itself
  InSample, // scale by the seasonal-naive error on the lookback (M4 practice)
};
MaseConvention parse_mase_convention(const std::string& name);

/// Horizon convention: (1/H)·Σ|y−ŷ| / ((1/(H−s))·Σ_{j>s}|y_j − y_{j−s}|).
double mase(std::span<const double> y, std::span<const double> y_hat, std::size_t s);
/// In-sample convention, scaling by the lookback's seasonal-naive error.
double mase_insample(std::span<const double> y, std::span<const double> y_hat, std::span<const double> lookback,
                     std::size_t s);

/// ½·(smape/smape_naive + mase/mase_naive).
double owa(double smape_model, double mase_model, double smape_naive, double mase_naive);

/// ŷ_h = lookback[T_L − s + ((h−1) mod s)], h = 1..H.
std::vector<double> naive_seasonal_forecast(std::span<const double> lookback, std::size_t s, std::size_t horizon);

/// Seasonal period for a frequency tag (hourly 24, daily 7, ...). Unknown → 1.
std::size_t seasonality_for(const std::string& frequency);

struct MetricValues {
  double mse = 0.0;
  double mae = 0.0;
  double smape = 0.0;
  std::optional<double> mape;
  std::optional<double> mase;
  std::optional<double> owa;
};

/// Metrics of one forecaster, per series and averaged over series.
struct MetricReport {
  std::string label;
  std::size_t horizon = 0;
  std::size_t seasonality = 1;
  std::size_t series = 0;
  MetricValues aggregate;
  std::vector<MetricValues> per_series;
  std::vector<std::string> notes;  // why optional metrics are missing
};

struct SeriesForecast {
  std::span<const double> lookback;
  std::span<const double> y;
  std::span<const double> y_hat;
};

/// Scores every series, computes the seasonal-naive baseline on the same
/// targets for OWA, and averages (unweighted) over series. MAPE/MASE/OWA are
/// reported only when defined for every series.
MetricReport evaluate(const std::vector<SeriesForecast>& series, std::size_t s, MaseConvention convention,
                      const std::string& label = "");

nlohmann::json to_json(const MetricReport& report);
/// Aligned text table, one row per report: label, horizon, MSE, MAE, SMAPE, MAPE, MASE, OWA.
std::string format_table(const std::vector<MetricReport>& reports);

}  // namespace dlf::metrics
