// SPDX-License-Identifier: Apache-2.0
#include "dlf/commands.hpp"

#include <cmath>
#include <fstream>
#include <future>
#include <iomanip>
#include <iostream>
#include <numeric>

#include "dlf/checkpoint.hpp"

namespace dlf::cli {

namespace fs = std::filesystem;

int run_guarded(const std::function<int()>& body, std::ostream& err) {
  try {
    return body();
  } catch (const train::NumericError& e) {
    err << "numeric error: " << e.what() << '\n';
    return kNumericError;
  } catch (const data::DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const ckpt::CheckpointError& e) {
    err << "checkpoint error: " << e.what() << '\n';
    return kDataError;
  } catch (const std::invalid_argument& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kFailure;
  }
}

namespace {

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << text;
}

data::SplitSpec split_spec(const config::RunConfig& cfg, std::size_t steps) {
  if (cfg.train_len > 0) return {cfg.train_len, cfg.val_len, cfg.test_len ? cfg.test_len : steps - std::min(steps, cfg.train_len + cfg.val_len)};
  return data::split_by_fraction(steps, cfg.train_frac, cfg.val_frac);
}

nlohmann::json routing_json(const lora::RoutingAccumulator& acc, const std::string& variant, std::size_t top_n) {
  auto j = acc.to_json();
  j["variant"] = variant;
  j["top_n"] = top_n;
  return j;
}

double mean_entropy(const lora::RoutingAccumulator& acc) {
  if (acc.layers() == 0) return 0.0;
  double s = 0.0;
  for (std::size_t l = 0; l < acc.layers(); ++l) s += acc.gate_set_entropy(l);
  return s / static_cast<double>(acc.layers());
}

}  // namespace

Pipeline prepare(const config::RunConfig& cfg) {
  config::validate(cfg);
  Pipeline p;
  data::MultivariateSeries series;
  if (!cfg.csv.empty()) {
    series = data::load_csv(cfg.csv, cfg.date_column);
  } else {
    data::SynthSpec spec;
    spec.kind = data::parse_synth_kind(cfg.synthetic);
    spec.channels = cfg.synth_channels;
    spec.steps = cfg.synth_length;
    spec.seed = cfg.synth_seed ? cfg.synth_seed : cfg.seed;
    spec.noise = cfg.synth_noise;
    p.synthetic = data::synth_generate(spec);
    series = p.synthetic->series;
  }
  series.name = config::dataset_label(cfg);
  series.frequency = cfg.frequency;
  data::validate(series, cfg.lookback, cfg.horizon);

  const auto spec = split_spec(cfg, series.steps);
  if (cfg.global_standardize) {
    auto raw = std::make_shared<const data::MultivariateSeries>(series);
    auto splits = data::chronological_split(raw, spec, cfg.lookback);
    series = data::Standardizer::fit(splits.train).apply(series);
  }
  p.series = std::make_shared<const data::MultivariateSeries>(std::move(series));
  p.splits = data::chronological_split(p.series, spec, cfg.lookback);
  p.train_view = cfg.few_shot < 1.0 ? data::few_shot_subset(p.splits.train, cfg.few_shot, cfg.lookback, cfg.horizon)
                                    : p.splits.train;
  p.train = data::make_windows(p.train_view, cfg.lookback, cfg.horizon);
  p.val = data::make_windows(p.splits.val, cfg.lookback, cfg.horizon);
  p.test = data::make_windows(p.splits.test, cfg.lookback, cfg.horizon);
  if (p.train.windows.empty()) throw data::DataError("training split has no windows: " + p.train.warning);
  return p;
}

double repeat_last_mse(const data::WindowSet& set) {
  double s = 0.0;
  std::size_t n = 0;
  for (const auto& w : set.windows)
    for (std::size_t c = 0; c < set.view.channels(); ++c) {
      const double last = set.view.series().at(w.x_begin + set.lookback - 1, c);
      for (std::size_t h = 0; h < set.horizon; ++h) {
        const double e = set.view.series().at(w.y_begin + h, c) - last;
        s += e * e;
        ++n;
      }
    }
  return n ? s / static_cast<double>(n) : std::nan("");
}

Fitted fit(const config::RunConfig& cfg, const Pipeline& data) {
  Fitted f;
  f.model = std::make_unique<ForecastModel>(config::model_config(cfg), config::prompt_text(cfg), cfg.seed);
  f.shared_init_checksum = nn::checksum(f.model->shared_parameters());
  f.result = train::train(*f.model, data.train, data.val.windows.empty() ? nullptr : &data.val,
                          config::train_config(cfg));
  return f;
}

Evaluation evaluate(const ForecastModel& model, const config::RunConfig& cfg, const data::WindowSet& set) {
  if (set.windows.empty()) throw data::DataError("evaluation split has no windows: " + set.warning);
  Evaluation ev;
  ev.predictions = train::predict(model, set);
  const auto& p = ev.predictions;
  const std::size_t rows = p.windows * p.channels;
  const std::size_t s = config::seasonality(cfg);
  const auto convention = metrics::parse_mase_convention(cfg.mase_convention);

  std::vector<metrics::SeriesForecast> model_series;
  std::vector<std::vector<double>> naive(rows);
  std::vector<metrics::SeriesForecast> naive_series;
  const bool naive_ok = p.lookback >= s;
  for (std::size_t r = 0; r < rows; ++r) {
    std::span<const double> lb(p.x.data() + r * p.lookback, p.lookback);
    std::span<const double> y(p.y.data() + r * p.horizon, p.horizon);
    std::span<const double> yh(p.y_hat.data() + r * p.horizon, p.horizon);
    model_series.push_back({lb, y, yh});
    if (naive_ok) {
      naive[r] = metrics::naive_seasonal_forecast(lb, s, p.horizon);
      naive_series.push_back({lb, y, naive[r]});
    }
  }
  ev.model = metrics::evaluate(model_series, s, convention, to_string(model.config().variant));
  if (naive_ok) {
    ev.naive = metrics::evaluate(naive_series, s, convention, "seasonal_naive");
  } else {
    ev.naive.label = "seasonal_naive";
    ev.naive.notes.push_back("lookback shorter than seasonality " + std::to_string(s));
  }
  return ev;
}

int cmd_train(const config::RunConfig& cfg, std::ostream& out) {
  const auto data = prepare(cfg);
  const fs::path dir = cfg.out_dir;
  fs::create_directories(dir);
  auto fitted = fit(cfg, data);
  const auto& r = fitted.result;

  ckpt::write(dir / kCheckpointFile, ckpt::capture(*fitted.model, cfg, r.optimizer_steps, r.rng_state));
  train::write_history_csv(dir / kHistoryFile, r.history);
  write_json(dir / kRoutingFile, routing_json(r.last_epoch_routing, cfg.variant, cfg.top_n));
  write_text(dir / "config.ini", config::serialize(cfg));
  if (data.synthetic) data::write_sidecar(dir / "synthetic.json", *data.synthetic);

  out << "trained " << cfg.variant << " for " << r.history.size() << " epochs (" << r.optimizer_steps
      << " steps), best epoch " << r.best_epoch;
  if (!std::isnan(r.best_val)) out << ", val mse " << r.best_val;
  out << "\nartifacts in " << dir.string() << '\n';
  return kOk;
}

int cmd_eval(const fs::path& checkpoint, const std::map<std::string, std::string>& overrides, const fs::path& out_dir,
             std::ostream& out) {
  auto loaded = ckpt::load(checkpoint);
  auto cfg = loaded.config;
  for (const auto& [k, v] : overrides) config::set(cfg, k, v);
  if (cfg.horizon != loaded.config.horizon)
    throw config::ConfigError("horizon mismatch: checkpoint forecasts " + std::to_string(loaded.config.horizon) +
                              " steps, dataset requests " + std::to_string(cfg.horizon));
  if (cfg.lookback != loaded.config.lookback)
    throw config::ConfigError("lookback mismatch: checkpoint reads " + std::to_string(loaded.config.lookback) +
                              " steps, dataset requests " + std::to_string(cfg.lookback));
  const auto data = prepare(cfg);
  const auto ev = evaluate(*loaded.model, cfg, data.test);

  fs::create_directories(out_dir);
  write_json(out_dir / "metrics.json", {{"model", metrics::to_json(ev.model)},
                                        {"seasonal_naive", metrics::to_json(ev.naive)},
                                        {"repeat_last_mse", repeat_last_mse(data.test)}});
  const auto table = metrics::format_table({ev.model, ev.naive});
  write_text(out_dir / "metrics.txt", table);
  write_json(out_dir / kRoutingFile, routing_json(ev.predictions.routing, cfg.variant, cfg.top_n));
  out << table;
  return kOk;
}

int cmd_forecast(const fs::path& checkpoint, const fs::path& input, const fs::path& output, std::ostream& out) {
  auto loaded = ckpt::load(checkpoint);
  const auto& cfg = loaded.config;
  const auto series = data::load_csv(input, cfg.date_column);
  if (series.steps < cfg.lookback)
    throw data::DataError("'" + input.string() + "' has " + std::to_string(series.steps) +
                          " rows; the model needs a lookback of " + std::to_string(cfg.lookback));
  const std::size_t n = series.channels;
  std::vector<double> x(n * cfg.lookback);
  const std::size_t start = series.steps - cfg.lookback;
  for (std::size_t c = 0; c < n; ++c)
    for (std::size_t t = 0; t < cfg.lookback; ++t) x[c * cfg.lookback + t] = series.at(start + t, c);

  ad::NoGradScope no_grad;
  auto f = loaded.model->forward(ad::Tensor::from({n, cfg.lookback}, std::move(x)), 1, n);
  data::MultivariateSeries result;
  result.channel_names = series.channel_names;
  result.channels = n;
  result.steps = cfg.horizon;
  result.values.resize(cfg.horizon * n);
  for (std::size_t c = 0; c < n; ++c)
    for (std::size_t h = 0; h < cfg.horizon; ++h) result.values[h * n + c] = f.forecast.at(c, h);
  data::write_csv(output, result);
  out << "wrote " << cfg.horizon << " forecast steps for " << n << " channels to " << output.string() << '\n';
  return kOk;
}

namespace {

struct VariantRow {
  std::string variant;
  double test_mse = 0.0;
  double test_mae = 0.0;
  std::size_t trainable = 0;
  std::size_t adapter = 0;
  std::size_t seq_len = 0;
  double entropy = 0.0;
  std::uint64_t shared_checksum = 0;
  std::size_t epochs = 0;
  nlohmann::json routing;
};

VariantRow run_variant(config::RunConfig cfg, const Pipeline& data, const std::string& variant) {
  cfg.variant = variant;
  auto fitted = fit(cfg, data);
  const auto ev = evaluate(*fitted.model, cfg, data.test);
  VariantRow row;
  row.variant = variant;
  row.test_mse = ev.model.aggregate.mse;
  row.test_mae = ev.model.aggregate.mae;
  row.trainable = nn::count(fitted.model->trainable_parameters());
  row.adapter = nn::count(fitted.model->adapter_parameters());
  {
    ad::NoGradScope no_grad;
    std::vector<std::size_t> first{0};
    row.seq_len = fitted.model->forward(data::make_batch(data.test, first)).backbone_seq_len;
  }
  row.entropy = mean_entropy(ev.predictions.routing);
  row.shared_checksum = fitted.shared_init_checksum;
  row.epochs = fitted.result.history.size();
  row.routing = routing_json(ev.predictions.routing, variant, cfg.top_n);
  return row;
}

}  // namespace

int cmd_ablate(const config::RunConfig& cfg, std::size_t jobs, std::ostream& out) {
  const auto data = prepare(cfg);
  const std::vector<std::string> variants = {"full", "v1_no_align", "v2_prefix_prompt", "v3_static_lora",
                                             "v4_frozen"};
  std::vector<VariantRow> rows(variants.size());
  if (jobs > 1) {
    std::vector<std::future<VariantRow>> pending;
    for (std::size_t next = 0; next < variants.size();) {
      pending.clear();
      const std::size_t batch_end = std::min(variants.size(), next + jobs);
      for (std::size_t i = next; i < batch_end; ++i)
        pending.push_back(std::async(std::launch::async, run_variant, cfg, std::cref(data), variants[i]));
      for (std::size_t i = next; i < batch_end; ++i) rows[i] = pending[i - next].get();
      next = batch_end;
    }
  } else {
    for (std::size_t i = 0; i < variants.size(); ++i) rows[i] = run_variant(cfg, data, variants[i]);
  }

  const fs::path dir = cfg.out_dir;
  fs::create_directories(dir);
  std::ofstream csv(dir / "ablation.csv");
  if (!csv) throw std::runtime_error("cannot write ablation.csv");
  csv << "variant,test_mse,test_mae,trainable_params,adapter_params,backbone_seq_len,routing_entropy_bits,"
         "shared_init_checksum,epochs\n"
      << std::setprecision(17);
  nlohmann::json routing = nlohmann::json::object();
  for (const auto& r : rows) {
    csv << r.variant << ',' << r.test_mse << ',' << r.test_mae << ',' << r.trainable << ',' << r.adapter << ','
        << r.seq_len << ',' << r.entropy << ',' << r.shared_checksum << ',' << r.epochs << '\n';
    routing[r.variant] = r.routing;
  }
  write_json(dir / "ablation_routing.json", routing);

  out << std::left << std::setw(18) << "variant" << std::right << std::setw(12) << "test_mse" << std::setw(12)
      << "test_mae" << std::setw(12) << "trainable" << std::setw(10) << "adapter" << std::setw(8) << "seq"
      << '\n';
  for (const auto& r : rows)
    out << std::left << std::setw(18) << r.variant << std::right << std::fixed << std::setprecision(6)
        << std::setw(12) << r.test_mse << std::setw(12) << r.test_mae << std::setw(12) << r.trainable
        << std::setw(10) << r.adapter << std::setw(8) << r.seq_len << '\n';
  out << "repeat-last test mse " << repeat_last_mse(data.test) << '\n';
  return kOk;
}

int cmd_sweep_n(const config::RunConfig& cfg, const std::vector<std::size_t>& n_values, std::ostream& out) {
  const auto data = prepare(cfg);
  const fs::path dir = cfg.out_dir;
  fs::create_directories(dir);
  std::ofstream csv(dir / "sweep_n.csv");
  if (!csv) throw std::runtime_error("cannot write sweep_n.csv");
  csv << "n,test_mse,test_mae,routing_entropy_bits";
  for (auto m : lora::kModules) csv << ",share_" << lora::name(m);
  csv << '\n' << std::setprecision(17);

  for (auto n : n_values) {
    auto run_cfg = cfg;
    run_cfg.top_n = n;
    config::validate(run_cfg);
    auto fitted = fit(run_cfg, data);
    const auto ev = evaluate(*fitted.model, run_cfg, data.test);
    const auto& acc = ev.predictions.routing;
    write_json(dir / ("routing_n" + std::to_string(n) + ".json"), routing_json(acc, run_cfg.variant, n));

    // Activation share per module averaged over layers.
    lora::Probs share{};
    for (std::size_t l = 0; l < acc.layers(); ++l) {
      const auto s = acc.activation_share(l);
      for (std::size_t m = 0; m < lora::kNumModules; ++m) share[m] += s[m] / static_cast<double>(acc.layers());
    }
    csv << n << ',' << ev.model.aggregate.mse << ',' << ev.model.aggregate.mae << ',' << mean_entropy(acc);
    for (double s : share) csv << ',' << s;
    csv << '\n';
    out << "n=" << n << " test mse " << ev.model.aggregate.mse << " mae " << ev.model.aggregate.mae << '\n';
  }
  return kOk;
}

int cmd_synth(const config::RunConfig& cfg, const fs::path& output, std::ostream& out) {
  data::SynthSpec spec;
  spec.kind = data::parse_synth_kind(cfg.synthetic);
  spec.channels = cfg.synth_channels;
  spec.steps = cfg.synth_length;
  spec.seed = cfg.synth_seed ? cfg.synth_seed : cfg.seed;
  spec.noise = cfg.synth_noise;
  const auto result = data::synth_generate(spec);
  if (output.has_parent_path()) fs::create_directories(output.parent_path());
  data::write_csv(output, result.series);
  auto sidecar = output;
  sidecar.replace_extension(".json");
  data::write_sidecar(sidecar, result);
  out << "wrote " << spec.steps << "x" << spec.channels << " " << data::to_string(spec.kind) << " series to "
      << output.string() << '\n';
  return kOk;
}

}  // namespace dlf::cli
