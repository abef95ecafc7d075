// SPDX-License-Identifier: Apache-2.0
#include "dlf/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "dlf/optim.hpp"

namespace dlf::train {

LossKind parse_loss(const std::string& name) {
  if (name == "mse" || name == "MSE") return LossKind::Mse;
  if (name == "smape" || name == "SMAPE") return LossKind::Smape;
  throw std::invalid_argument("unknown loss '" + name + "' (expected mse, smape)");
}

std::string to_string(LossKind k) { return k == LossKind::Mse ? "mse" : "smape"; }

void validate(const TrainConfig& c) {
  if (!(c.lr > 0.0)) throw std::invalid_argument("lr must be positive");
  if (c.batch_size == 0) throw std::invalid_argument("batch_size must be at least 1");
  if (c.lambda_lb < 0.0) throw std::invalid_argument("lambda_lb must be non-negative");
  if (c.weight_decay < 0.0) throw std::invalid_argument("weight_decay must be non-negative");
}

ad::Tensor mse_loss(const ad::Tensor& y, const ad::Tensor& y_hat) {
  if (y.shape() != y_hat.shape())
    throw ad::DimensionError("mse_loss: " + ad::to_string(y.shape()) + " vs " + ad::to_string(y_hat.shape()));
  return ad::mean(ad::square(ad::sub(y_hat, y)));
}

ad::Tensor smape_loss(const ad::Tensor& y, const ad::Tensor& y_hat) {
  if (y.shape() != y_hat.shape())
    throw ad::DimensionError("smape_loss: " + ad::to_string(y.shape()) + " vs " + ad::to_string(y_hat.shape()));
  auto num = ad::abs(ad::sub(y, y_hat));
  auto den = ad::clamp_min(ad::add(ad::abs(y), ad::abs(y_hat)), 1e-8);
  return ad::scale(ad::mean(ad::div(num, den)), 200.0);
}

ad::Tensor total_loss(const ad::Tensor& task_loss, const lora::RoutingStats& stats, double lambda_lb) {
  if (lambda_lb == 0.0 || stats.f.empty()) return task_loss;
  return ad::add(task_loss, ad::scale(lora::load_balance_loss(stats), lambda_lb));
}

namespace {

std::vector<std::vector<double>> snapshot(const nn::ParamList& params) {
  std::vector<std::vector<double>> s;
  s.reserve(params.size());
  for (const auto& p : params) s.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
  return s;
}

void restore(nn::ParamList& params, const std::vector<std::vector<double>>& s) {
  for (std::size_t i = 0; i < params.size(); ++i) std::copy(s[i].begin(), s[i].end(), params[i].tensor.data().begin());
}

void record_routing(lora::RoutingAccumulator& acc, const ForecastModel::Forward& f) {
  if (!f.routing.empty()) {
    acc.add(f.routing);
    return;
  }
  lora::RouterDecision none;
  none.probs.fill(1.0 / static_cast<double>(lora::kNumModules));
  for (std::size_t l = 0; l < f.applied_gates.size(); ++l)
    for (const auto& g : f.applied_gates[l]) acc.add_forced(l, none, g);
}

}  // namespace

TrainResult train(ForecastModel& model, const data::WindowSet& train_set, const data::WindowSet* val_set,
                  const TrainConfig& config) {
  validate(config);
  if (train_set.windows.empty()) throw data::DataError("training set has no windows: " + train_set.warning);
  const bool has_val = val_set && !val_set->windows.empty();

  auto params = model.trainable_parameters();
  optim::AdamW opt(params, {.lr = config.lr, .weight_decay = config.weight_decay});
  auto rng = nn::component_rng(config.seed, "shuffle");
  const std::size_t layers = model.backbone().layers();

  TrainResult result;
  auto best = snapshot(params);
  std::size_t bad_epochs = 0;
  ad::Tape tape;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto order = data::shuffled_order(train_set.windows.size(), rng);
    lora::RoutingAccumulator acc(layers);
    double loss_sum = 0.0, lb_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::span<const std::size_t> idx(order.data() + start, end - start);
      auto batch = data::make_batch(train_set, idx);

      tape.clear();
      ad::TapeScope scope(tape);
      auto f = model.forward(batch);
      auto task = config.loss == LossKind::Mse ? mse_loss(batch.y, f.forecast) : smape_loss(batch.y, f.forecast);
      ad::Tensor total = task;
      double lb_value = 0.0;
      if (!f.routing.empty()) {
        auto stats = lora::accumulate_stats(f.routing);
        auto lb = lora::load_balance_loss(stats);
        lb_value = lb.item();
        if (config.lambda_lb != 0.0) total = ad::add(task, ad::scale(lb, config.lambda_lb));
      }
      if (!std::isfinite(total.item())) {
        std::ostringstream msg;
        msg << "non-finite loss at epoch " << epoch << ", batch " << batches << ": task=" << task.item()
            << " lb=" << lb_value << " lr=" << config.lr << " batch_size=" << batch.batch << " x_range=["
            << *std::min_element(batch.x.data().begin(), batch.x.data().end()) << ","
            << *std::max_element(batch.x.data().begin(), batch.x.data().end()) << "]";
        throw NumericError(msg.str());
      }
      opt.zero_grad();
      tape.backward(total);
      optim::clip_grad_norm(opt.params(), config.grad_clip);
      opt.step();

      record_routing(acc, f);
      loss_sum += task.item();
      lb_sum += lb_value;
      ++batches;
    }
    tape.clear();

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(batches);
    rec.lb_loss = lb_sum / static_cast<double>(batches);
    for (std::size_t l = 0; l < layers; ++l) rec.routing_entropy.push_back(acc.gate_set_entropy(l));
    if (has_val) rec.val_loss = evaluate_mse(model, *val_set);
    result.history.push_back(rec);
    result.last_epoch_routing = acc;
    if (config.verbose)
      std::cerr << "epoch " << epoch << " train=" << rec.train_loss << " val=" << rec.val_loss
                << " lb=" << rec.lb_loss << '\n';

    if (has_val) {
      if (std::isnan(result.best_val) || rec.val_loss < result.best_val) {
        result.best_val = rec.val_loss;
        result.best_epoch = epoch;
        best = snapshot(params);
        bad_epochs = 0;
      } else if (++bad_epochs >= config.patience && config.patience > 0) {
        result.early_stopped = true;
        break;
      }
    } else {
      result.best_epoch = epoch;
    }
  }
  if (has_val) restore(params, best);
  result.optimizer_steps = opt.steps();
  result.rng_state = rng.state();
  return result;
}

Predictions predict(const ForecastModel& model, const data::WindowSet& set, std::size_t batch_size) {
  ad::NoGradScope no_grad;
  Predictions p;
  p.windows = set.windows.size();
  p.channels = set.view.channels();
  p.lookback = set.lookback;
  p.horizon = set.horizon;
  p.routing.reset(model.backbone().layers());
  for (std::size_t start = 0; start < p.windows; start += batch_size) {
    const std::size_t end = std::min(p.windows, start + batch_size);
    std::vector<std::size_t> idx(end - start);
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = start + i;
    auto batch = data::make_batch(set, idx);
    auto f = model.forward(batch);
    p.x.insert(p.x.end(), batch.x.data().begin(), batch.x.data().end());
    p.y.insert(p.y.end(), batch.y.data().begin(), batch.y.data().end());
    p.y_hat.insert(p.y_hat.end(), f.forecast.data().begin(), f.forecast.data().end());
    record_routing(p.routing, f);
  }
  return p;
}

double evaluate_mse(const ForecastModel& model, const data::WindowSet& set, std::size_t batch_size) {
  auto p = predict(model, set, batch_size);
  if (p.y.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0.0;
  for (std::size_t i = 0; i < p.y.size(); ++i) s += (p.y_hat[i] - p.y[i]) * (p.y_hat[i] - p.y[i]);
  return s / static_cast<double>(p.y.size());
}

void write_history_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& history) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << "epoch,train_loss,val_loss,lb_loss";
  const std::size_t layers = history.empty() ? 0 : history.front().routing_entropy.size();
  for (std::size_t l = 0; l < layers; ++l) out << ",routing_entropy_l" << l;
  out << '\n' << std::setprecision(17);
  for (const auto& r : history) {
    out << r.epoch << ',' << r.train_loss << ',';
    if (!std::isnan(r.val_loss)) out << r.val_loss;
    out << ',' << r.lb_loss;
    for (double e : r.routing_entropy) out << ',' << e;
    out << '\n';
  }
}

}  // namespace dlf::train
