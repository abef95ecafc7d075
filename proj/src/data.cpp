// SPDX-License-Identifier: Apache-2.0
#include "dlf/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>

#include "dlf/rng.hpp"

namespace dlf::data {

void validate(const MultivariateSeries& series, std::size_t lookback, std::size_t horizon) {
  if (series.values.size() != series.steps * series.channels)
    throw DataError("series '" + series.name + "': value count does not match steps×channels");
  for (std::size_t i = 0; i < series.values.size(); ++i)
    if (!std::isfinite(series.values[i]))
      throw DataError("series '" + series.name + "': non-finite value at step " +
                      std::to_string(i / std::max<std::size_t>(series.channels, 1)));
  if (series.steps < lookback + horizon)
    throw DataError("series '" + series.name + "' has " + std::to_string(series.steps) +
                    " steps; at least lookback+horizon = " + std::to_string(lookback + horizon) +
                    " are needed for one window");
}

SeriesView::SeriesView(SeriesPtr series, std::size_t begin, std::size_t length)
    : series_(std::move(series)), begin_(begin), length_(length) {
  if (!series_ || begin_ + length_ > series_->steps)
    throw DataError("view [" + std::to_string(begin_) + "," + std::to_string(begin_ + length_) +
                    ") exceeds series length");
}

SplitSpec split_by_fraction(std::size_t steps, double train_frac, double val_frac) {
  if (train_frac <= 0.0 || val_frac < 0.0 || train_frac + val_frac > 1.0)
    throw DataError("invalid split fractions train=" + std::to_string(train_frac) +
                    " val=" + std::to_string(val_frac));
  SplitSpec s;
  s.train_len = static_cast<std::size_t>(std::floor(train_frac * static_cast<double>(steps)));
  s.val_len = static_cast<std::size_t>(std::floor(val_frac * static_cast<double>(steps)));
  s.test_len = steps - s.train_len - s.val_len;
  return s;
}

Splits chronological_split(const SeriesPtr& series, const SplitSpec& spec, std::size_t lookback) {
  const std::size_t total = spec.train_len + spec.val_len + spec.test_len;
  if (total > series->steps)
    throw DataError("split (" + std::to_string(spec.train_len) + "," + std::to_string(spec.val_len) + "," +
                    std::to_string(spec.test_len) + ") exceeds series length " +
                    std::to_string(series->steps));
  auto extended = [&](std::size_t start, std::size_t len) {
    if (len == 0) return SeriesView(series, start, 0);
    const std::size_t from = start >= lookback ? start - lookback : 0;
    return SeriesView(series, from, start + len - from);
  };
  Splits out;
  out.train = SeriesView(series, 0, spec.train_len);
  out.val = extended(spec.train_len, spec.val_len);
  out.test = extended(spec.train_len + spec.val_len, spec.test_len);
  return out;
}

WindowSet make_windows(const SeriesView& view, std::size_t lookback, std::size_t horizon,
                       std::size_t stride) {
  if (stride == 0) throw DataError("make_windows: stride must be positive");
  WindowSet set{view, lookback, horizon, {}, {}};
  if (view.length() < lookback + horizon) {
    set.warning = "view of length " + std::to_string(view.length()) + " is shorter than lookback+horizon (" +
                  std::to_string(lookback + horizon) + "); no windows";
    return set;
  }
  const std::size_t count = (view.length() - lookback - horizon) / stride + 1;
  set.windows.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t start = view.begin() + i * stride;
    set.windows.push_back({start, start + lookback});
  }
  return set;
}

SeriesView few_shot_subset(const SeriesView& train, double fraction, std::size_t lookback,
                           std::size_t horizon) {
  if (!(fraction > 0.0 && fraction <= 1.0))
    throw DataError("few-shot fraction must lie in (0, 1], got " + std::to_string(fraction));
  const auto steps = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(train.length())));
  if (steps < lookback + horizon)
    throw DataError("insufficient few-shot data: " + std::to_string(steps) + " steps < lookback+horizon " +
                    std::to_string(lookback + horizon));
  return SeriesView(train.shared(), train.begin(), steps);
}

WindowBatch make_batch(const WindowSet& set, std::span<const std::size_t> indices) {
  const auto& series = set.view.series();
  const std::size_t n = series.channels, tl = set.lookback, tp = set.horizon;
  WindowBatch b;
  b.batch = indices.size();
  b.channels = n;
  std::vector<double> xs(indices.size() * n * tl), ys(indices.size() * n * tp);
  b.norm_stats.mean.resize(indices.size() * n);
  b.norm_stats.stddev.resize(indices.size() * n);
  for (std::size_t s = 0; s < indices.size(); ++s) {
    const Window& w = set.windows.at(indices[s]);
    for (std::size_t c = 0; c < n; ++c) {
      const std::size_t row = s * n + c;
      double m = 0.0;
      for (std::size_t t = 0; t < tl; ++t) {
        const double v = series.at(w.x_begin + t, c);
        xs[row * tl + t] = v;
        m += v;
      }
      m /= static_cast<double>(tl);
      double var = 0.0;
      for (std::size_t t = 0; t < tl; ++t) var += (xs[row * tl + t] - m) * (xs[row * tl + t] - m);
      var /= static_cast<double>(tl);
      b.norm_stats.mean[row] = m;
      b.norm_stats.stddev[row] = std::max(std::sqrt(var), kStdFloor);
      for (std::size_t t = 0; t < tp; ++t) ys[row * tp + t] = series.at(w.y_begin + t, c);
    }
  }
  b.x = ad::Tensor::from({indices.size() * n, tl}, std::move(xs));
  b.y = ad::Tensor::from({indices.size() * n, tp}, std::move(ys));
  return b;
}

std::vector<std::size_t> shuffled_order(std::size_t count, Rng& rng) {
  std::vector<std::size_t> order(count);
  for (std::size_t i = 0; i < count; ++i) order[i] = i;
  // Fisher-Yates driven by Rng::below so the permutation is library-independent.
  for (std::size_t i = count; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  return order;
}

Standardizer Standardizer::fit(const SeriesView& view) {
  Standardizer s;
  const std::size_t n = view.channels();
  s.mean.assign(n, 0.0);
  s.stddev.assign(n, 0.0);
  if (view.empty()) throw DataError("cannot fit standardizer on an empty view");
  const auto len = static_cast<double>(view.length());
  for (std::size_t c = 0; c < n; ++c) {
    double m = 0.0;
    for (std::size_t t = 0; t < view.length(); ++t) m += view.at(t, c);
    m /= len;
    double var = 0.0;
    for (std::size_t t = 0; t < view.length(); ++t) var += (view.at(t, c) - m) * (view.at(t, c) - m);
    s.mean[c] = m;
    s.stddev[c] = std::max(std::sqrt(var / len), kStdFloor);
  }
  return s;
}

MultivariateSeries Standardizer::apply(const MultivariateSeries& series) const {
  MultivariateSeries out = series;
  for (std::size_t t = 0; t < out.steps; ++t)
    for (std::size_t c = 0; c < out.channels; ++c) {
      auto& v = out.values[t * out.channels + c];
      v = (v - mean[c]) / stddev[c];
    }
  return out;
}

// --- CSV ----------------------------------------------------------------------

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

}  // namespace

MultivariateSeries parse_csv(const std::string& text, const std::string& date_column, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) break;
  }
  if (trim(line).empty()) throw DataError(source + ": missing header row");

  auto header = split_line(line);
  for (auto& h : header) h = trim(h);
  std::ptrdiff_t date_idx = -1;
  if (!date_column.empty())
    for (std::size_t i = 0; i < header.size(); ++i)
      if (lower(header[i]) == lower(date_column)) date_idx = static_cast<std::ptrdiff_t>(i);

  MultivariateSeries s;
  s.name = source;
  for (std::size_t i = 0; i < header.size(); ++i)
    if (static_cast<std::ptrdiff_t>(i) != date_idx) s.channel_names.push_back(header[i]);
  s.channels = s.channel_names.size();
  if (s.channels == 0) throw DataError(source + ": no value columns in header");

  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto cells = split_line(line);
    if (cells.size() != header.size())
      throw DataError(source + ":" + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                      " fields, found " + std::to_string(cells.size()));
    for (std::size_t i = 0; i < cells.size(); ++i) {
      const std::string cell = trim(cells[i]);
      if (static_cast<std::ptrdiff_t>(i) == date_idx) {
        if (cell.empty()) throw DataError(source + ":" + std::to_string(line_no) + ": empty date cell");
        continue;
      }
      double v = 0.0;
      const char* first = cell.data();
      const char* last = cell.data() + cell.size();
      if (!cell.empty() && *first == '+') ++first;
      auto [ptr, ec] = std::from_chars(first, last, v);
      if (cell.empty() || ec != std::errc() || ptr != last)
        throw DataError(source + ":" + std::to_string(line_no) + ": non-numeric cell '" + cell + "' in column '" +
                        header[i] + "'");
      if (!std::isfinite(v))
        throw DataError(source + ":" + std::to_string(line_no) + ": non-finite value '" + cell +
                        "' in column '" + header[i] + "' (row rejected)");
      s.values.push_back(v);
    }
    ++s.steps;
  }
  return s;
}

MultivariateSeries load_csv(const std::filesystem::path& path, const std::string& date_column) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  auto s = parse_csv(buf.str(), date_column, path.string());
  s.name = path.stem().string();
  return s;
}

void write_csv(const std::filesystem::path& path, const MultivariateSeries& series) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << "date";
  for (const auto& name : series.channel_names) out << ',' << name;
  out << '\n' << std::setprecision(17);
  for (std::size_t t = 0; t < series.steps; ++t) {
    out << t;
    for (std::size_t c = 0; c < series.channels; ++c) out << ',' << series.at(t, c);
    out << '\n';
  }
}

// --- Synthetic ------------------------------------------------------------------

SynthKind parse_synth_kind(const std::string& name) {
  const auto n = lower(name);
  if (n == "sine" || n == "sine_mixture") return SynthKind::SineMixture;
  if (n == "ar2") return SynthKind::Ar2;
  if (n == "trend" || n == "trend_seasonal") return SynthKind::TrendSeasonal;
  throw DataError("unknown synthetic kind '" + name + "' (expected sine_mixture, ar2, trend_seasonal)");
}

std::string to_string(SynthKind kind) {
  switch (kind) {
    case SynthKind::SineMixture: return "sine_mixture";
    case SynthKind::Ar2: return "ar2";
    case SynthKind::TrendSeasonal: return "trend_seasonal";
  }
  return "?";
}

SynthResult synth_generate(const SynthSpec& spec) {
  if (spec.channels == 0 || spec.steps == 0) throw DataError("synthetic series needs N >= 1 and T >= 1");
  Rng rng(spec.seed);
  SynthResult r;
  auto& s = r.series;
  s.name = "synthetic_" + to_string(spec.kind);
  s.frequency = "hourly";
  s.steps = spec.steps;
  s.channels = spec.channels;
  s.values.assign(spec.steps * spec.channels, 0.0);
  for (std::size_t c = 0; c < spec.channels; ++c) s.channel_names.push_back("ch" + std::to_string(c));
  r.params = {{"kind", to_string(spec.kind)}, {"channels", spec.channels}, {"steps", spec.steps},
              {"seed", spec.seed},           {"noise", spec.noise}};
  const double two_pi = 2.0 * std::numbers::pi;

  switch (spec.kind) {
    case SynthKind::SineMixture: {
      const std::size_t j_count = std::max<std::size_t>(spec.components, 1);
      std::vector<double> amp(j_count), freq(j_count);
      for (std::size_t j = 0; j < j_count; ++j) {
        amp[j] = rng.uniform(0.5, 1.5);
        freq[j] = 1.0 / rng.uniform(8.0, 48.0);
      }
      nlohmann::json phases = nlohmann::json::array();
      for (std::size_t c = 0; c < spec.channels; ++c) {
        std::vector<double> phi(j_count);
        for (auto& p : phi) p = rng.uniform(0.0, two_pi);
        phases.push_back(phi);
        for (std::size_t t = 0; t < spec.steps; ++t) {
          double v = 0.0;
          for (std::size_t j = 0; j < j_count; ++j)
            v += amp[j] * std::sin(two_pi * freq[j] * static_cast<double>(t) + phi[j]);
          s.values[t * spec.channels + c] = v;
        }
      }
      r.params["amplitudes"] = amp;
      r.params["frequencies"] = freq;
      r.params["phases"] = phases;
      break;
    }
    case SynthKind::Ar2: {
      // Complex-conjugate roots of modulus < 1 keep every channel stationary.
      constexpr std::size_t burn_in = 200;
      nlohmann::json coeffs = nlohmann::json::array();
      for (std::size_t c = 0; c < spec.channels; ++c) {
        const double radius = rng.uniform(0.80, 0.95);
        const double theta = rng.uniform(0.1, 0.4) * std::numbers::pi;
        const double phi1 = 2.0 * radius * std::cos(theta);
        const double phi2 = -radius * radius;
        coeffs.push_back({{"phi1", phi1}, {"phi2", phi2}, {"root_modulus", radius}});
        double x1 = 0.0, x2 = 0.0;
        for (std::size_t t = 0; t < burn_in + spec.steps; ++t) {
          const double x = phi1 * x1 + phi2 * x2 + rng.normal();
          x2 = x1;
          x1 = x;
          if (t >= burn_in) s.values[(t - burn_in) * spec.channels + c] = x;
        }
      }
      r.params["coefficients"] = coeffs;
      r.params["innovation_std"] = 1.0;
      break;
    }
    case SynthKind::TrendSeasonal: {
      constexpr double period = 24.0;
      nlohmann::json chans = nlohmann::json::array();
      for (std::size_t c = 0; c < spec.channels; ++c) {
        const double level = rng.uniform(-1.0, 1.0);
        const double slope = rng.uniform(-2.0, 2.0);
        const double amp = rng.uniform(0.5, 1.5);
        const double phase = rng.uniform(0.0, two_pi);
        chans.push_back({{"level", level}, {"slope", slope}, {"amplitude", amp}, {"phase", phase}});
        for (std::size_t t = 0; t < spec.steps; ++t) {
          const double u = static_cast<double>(t) / static_cast<double>(spec.steps);
          s.values[t * spec.channels + c] =
              level + slope * u + amp * std::sin(two_pi * static_cast<double>(t) / period + phase);
        }
      }
      r.params["period"] = period;
      r.params["channels_params"] = chans;
      break;
    }
  }
  if (spec.noise > 0.0)
    for (auto& v : s.values) v += rng.normal(0.0, spec.noise);
  return r;
}

void write_sidecar(const std::filesystem::path& path, const SynthResult& result) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << result.params.dump(2) << '\n';
}

}  // namespace dlf::data
