// SPDX-License-Identifier: Apache-2.0
#include "dlf/metrics.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

namespace dlf::metrics {

namespace {

void require_same(std::span<const double> y, std::span<const double> y_hat, const char* what) {
  if (y.size() != y_hat.size() || y.empty())
    throw std::invalid_argument(std::string(what) + ": need equal, non-empty lengths (" + std::to_string(y.size()) +
                                " vs " + std::to_string(y_hat.size()) + ")");
}

double mean_abs_error(std::span<const double> y, std::span<const double> y_hat) {
  double s = 0.0;
  for (std::size_t h = 0; h < y.size(); ++h) s += std::abs(y[h] - y_hat[h]);
  return s / static_cast<double>(y.size());
}

double seasonal_scale(std::span<const double> series, std::size_t s, const char* what) {
  if (s < 1 || series.size() <= s)
    throw UndefinedMetric(std::string(what) + ": need length > s >= 1 (length " + std::to_string(series.size()) +
                          ", s " + std::to_string(s) + ")");
  double d = 0.0;
  for (std::size_t j = s; j < series.size(); ++j) d += std::abs(series[j] - series[j - s]);
  d /= static_cast<double>(series.size() - s);
  if (d == 0.0) throw UndefinedMetric(std::string(what) + ": seasonal-difference scale is zero");
  return d;
}

}  // namespace

double mse(std::span<const double> y, std::span<const double> y_hat) {
  require_same(y, y_hat, "mse");
  double s = 0.0;
  for (std::size_t h = 0; h < y.size(); ++h) s += (y[h] - y_hat[h]) * (y[h] - y_hat[h]);
  return s / static_cast<double>(y.size());
}

double mae(std::span<const double> y, std::span<const double> y_hat) {
  require_same(y, y_hat, "mae");
  return mean_abs_error(y, y_hat);
}

double smape(std::span<const double> y, std::span<const double> y_hat) {
  require_same(y, y_hat, "smape");
  double s = 0.0;
  for (std::size_t h = 0; h < y.size(); ++h) {
    const double den = std::abs(y[h]) + std::abs(y_hat[h]);
    if (den > 0.0) s += std::abs(y[h] - y_hat[h]) / den;
  }
  return 200.0 * s / static_cast<double>(y.size());
}

double mape(std::span<const double> y, std::span<const double> y_hat) {
  require_same(y, y_hat, "mape");
  double s = 0.0;
  for (std::size_t h = 0; h < y.size(); ++h) {
    if (y[h] == 0.0) throw UndefinedMetric("mape: ground truth is zero at step " + std::to_string(h + 1));
    s += std::abs(y[h] - y_hat[h]) / std::abs(y[h]);
  }
  return 100.0 * s / static_cast<double>(y.size());
}

MaseConvention parse_mase_convention(const std::string& name) {
  if (name == "paper" || name == "horizon") return MaseConvention::Horizon;
  if (name == "m4" || name == "insample") return MaseConvention::InSample;
  throw std::invalid_argument("unknown mase convention '" + name + "' (expected paper, m4)");
}

double mase(std::span<const double> y, std::span<const double> y_hat, std::size_t s) {
  require_same(y, y_hat, "mase");
  return mean_abs_error(y, y_hat) / seasonal_scale(y, s, "mase");
}

double mase_insample(std::span<const double> y, std::span<const double> y_hat, std::span<const double> lookback,
                     std::size_t s) {
  require_same(y, y_hat, "mase");
  return mean_abs_error(y, y_hat) / seasonal_scale(lookback, s, "mase(m4)");
}

double owa(double smape_model, double mase_model, double smape_naive, double mase_naive) {
  if (smape_naive == 0.0 || mase_naive == 0.0) throw UndefinedMetric("owa: naive baseline scores zero");
  return 0.5 * (smape_model / smape_naive + mase_model / mase_naive);
}

std::vector<double> naive_seasonal_forecast(std::span<const double> lookback, std::size_t s, std::size_t horizon) {
  if (s < 1 || lookback.size() < s)
    throw std::invalid_argument("naive_seasonal_forecast: lookback of length " + std::to_string(lookback.size()) +
                                " is shorter than s = " + std::to_string(s));
  std::vector<double> out(horizon);
  const std::size_t base = lookback.size() - s;
  for (std::size_t h = 0; h < horizon; ++h) out[h] = lookback[base + h % s];
  return out;
}

std::size_t seasonality_for(const std::string& frequency) {
  if (frequency == "hourly" || frequency == "1h") return 24;
  if (frequency == "daily") return 7;
  if (frequency == "weekly") return 52;
  if (frequency == "monthly") return 12;
  if (frequency == "quarterly") return 4;
  if (frequency == "yearly") return 1;
  if (frequency == "15min") return 96;
  if (frequency == "10min") return 144;
  return 1;
}

MetricReport evaluate(const std::vector<SeriesForecast>& series, std::size_t s, MaseConvention convention,
                      const std::string& label) {
  MetricReport r;
  r.label = label;
  r.seasonality = s;
  r.series = series.size();
  if (series.empty()) throw std::invalid_argument("evaluate: no series");
  r.horizon = series.front().y.size();

  bool mape_ok = true, mase_ok = true, owa_ok = true;
  double n_mape = 0, n_mase = 0, n_owa = 0;
  for (const auto& sf : series) {
    MetricValues v;
    v.mse = mse(sf.y, sf.y_hat);
    v.mae = mae(sf.y, sf.y_hat);
    v.smape = smape(sf.y, sf.y_hat);
    try {
      v.mape = mape(sf.y, sf.y_hat);
    } catch (const UndefinedMetric& e) {
      if (mape_ok) r.notes.push_back(e.what());
      mape_ok = false;
    }
    try {
      v.mase = convention == MaseConvention::Horizon ? mase(sf.y, sf.y_hat, s)
                                                     : mase_insample(sf.y, sf.y_hat, sf.lookback, s);
      const auto naive = naive_seasonal_forecast(sf.lookback, s, sf.y.size());
      const double naive_smape = smape(sf.y, naive);
      const double naive_mase = convention == MaseConvention::Horizon ? mase(sf.y, naive, s)
                                                                      : mase_insample(sf.y, naive, sf.lookback, s);
      v.owa = owa(v.smape, *v.mase, naive_smape, naive_mase);
    } catch (const std::exception& e) {
      if (!v.mase) {
        if (mase_ok) r.notes.push_back(e.what());
        mase_ok = false;
      }
      if (owa_ok) r.notes.push_back(e.what());
      owa_ok = false;
    }
    r.aggregate.mse += v.mse;
    r.aggregate.mae += v.mae;
    r.aggregate.smape += v.smape;
    if (v.mape) n_mape += *v.mape;
    if (v.mase) n_mase += *v.mase;
    if (v.owa) n_owa += *v.owa;
    r.per_series.push_back(v);
  }
  const auto n = static_cast<double>(series.size());
  r.aggregate.mse /= n;
  r.aggregate.mae /= n;
  r.aggregate.smape /= n;
  if (mape_ok) r.aggregate.mape = n_mape / n;
  if (mase_ok) r.aggregate.mase = n_mase / n;
  if (owa_ok) r.aggregate.owa = n_owa / n;
  return r;
}

namespace {
nlohmann::json values_json(const MetricValues& v) {
  nlohmann::json j = {{"mse", v.mse}, {"mae", v.mae}, {"smape", v.smape}};
  j["mape"] = v.mape ? nlohmann::json(*v.mape) : nlohmann::json(nullptr);
  j["mase"] = v.mase ? nlohmann::json(*v.mase) : nlohmann::json(nullptr);
  j["owa"] = v.owa ? nlohmann::json(*v.owa) : nlohmann::json(nullptr);
  return j;
}
}  // namespace

nlohmann::json to_json(const MetricReport& report) {
  nlohmann::json per = nlohmann::json::array();
  for (const auto& v : report.per_series) per.push_back(values_json(v));
  return {{"label", report.label},         {"horizon", report.horizon},
          {"seasonality", report.seasonality}, {"series", report.series},
          {"aggregate", values_json(report.aggregate)}, {"per_series", per},
          {"notes", report.notes}};
}

std::string format_table(const std::vector<MetricReport>& reports) {
  std::ostringstream os;
  auto cell = [&](const std::optional<double>& v) {
    if (v)
      os << std::setw(10) << std::fixed << std::setprecision(4) << *v;
    else
      os << std::setw(10) << "-";
  };
  os << std::left << std::setw(20) << "label" << std::right << std::setw(8) << "horizon" << std::setw(10) << "MSE"
     << std::setw(10) << "MAE" << std::setw(10) << "SMAPE" << std::setw(10) << "MAPE" << std::setw(10) << "MASE"
     << std::setw(10) << "OWA" << '\n';
  for (const auto& r : reports) {
    os << std::left << std::setw(20) << r.label << std::right << std::setw(8) << r.horizon;
    cell(r.aggregate.mse);
    cell(r.aggregate.mae);
    cell(r.aggregate.smape);
    cell(r.aggregate.mape);
    cell(r.aggregate.mase);
    cell(r.aggregate.owa);
    os << '\n';
  }
  return os.str();
}

}  // namespace dlf::metrics
