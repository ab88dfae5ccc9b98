#include "odesr/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <numeric>

namespace odesr {

void TrainConfig::validate() const {
  if (!(lr_floor >= 0.0 && lr_floor < lr_peak)) throw std::invalid_argument("need 0 <= lr_floor < lr_peak");
  if (warmup_steps >= total_steps && total_steps > 0)
    throw std::invalid_argument("warmup_steps must be below total_steps");
  if (!(restart_damping >= 1.0)) throw std::invalid_argument("restart_damping must be >= 1");
  if (tokens_per_batch == 0) throw std::invalid_argument("tokens_per_batch must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0 && eps > 0.0))
    throw std::invalid_argument("bad Adam hyperparameters");
}

double learning_rate(const TrainConfig& cfg, std::size_t step) {
  if (step < cfg.warmup_steps)
    return cfg.lr_floor + (cfg.lr_peak - cfg.lr_floor) * static_cast<double>(step) /
                              static_cast<double>(cfg.warmup_steps);
  std::size_t period = cfg.cycle_steps;
  if (period == 0) period = std::max<std::size_t>(1, cfg.total_steps > cfg.warmup_steps ? cfg.total_steps - cfg.warmup_steps : 1);
  std::size_t offset = step - cfg.warmup_steps;
  double peak = cfg.lr_peak;
  while (offset >= period) {
    offset -= period;
    period *= 2;
    peak /= cfg.restart_damping;
  }
  const double progress = static_cast<double>(offset) / static_cast<double>(period);
  return cfg.lr_floor + (peak - cfg.lr_floor) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

Trainer::Trainer(Model& model, const TrainConfig& cfg)
    : Trainer(model, cfg, AdamState{model.params().zeros_like(), model.params().zeros_like(), 0}, 0) {}

Trainer::Trainer(Model& model, const TrainConfig& cfg, AdamState state, std::size_t step)
    : model_(model), cfg_(cfg), adam_(std::move(state)), grads_(model.params().zeros_like()), step_(step) {
  cfg_.validate();
}

LossStats Trainer::step(std::span<const TrainingExample> batch) {
  grads_.set_zero();
  const LossStats stats = batch_loss(model_, batch, &grads_);
  if (!std::isfinite(stats.loss)) throw NonFiniteLoss("non-finite loss at step " + std::to_string(step_));

  std::vector<Matrix*> params, grads, ms, vs;
  model_.params().visit([&](const std::string&, Matrix& m) { params.push_back(&m); });
  grads_.visit([&](const std::string&, Matrix& m) { grads.push_back(&m); });
  for (const Matrix* g : grads)
    for (double x : g->storage())
      if (!std::isfinite(x)) throw NonFiniteLoss("non-finite gradient at step " + std::to_string(step_));
  adam_.m.visit([&](const std::string&, Matrix& m) { ms.push_back(&m); });
  adam_.v.visit([&](const std::string&, Matrix& m) { vs.push_back(&m); });

  const double lr = learning_rate(cfg_, step_);
  ++adam_.t;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(adam_.t));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(adam_.t));
  for (std::size_t t = 0; t < params.size(); ++t) {
    double* w = params[t]->data();
    const double* g = grads[t]->data();
    double* m = ms[t]->data();
    double* v = vs[t]->data();
    const std::size_t n = params[t]->size();
    for (std::size_t i = 0; i < n; ++i) {
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      w[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg_.eps);
    }
  }
  ++step_;
  return stats;
}

std::vector<std::vector<std::size_t>> make_length_batches(std::span<const TrainingExample> examples,
                                                          std::size_t tokens_per_batch, Rng& rng) {
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto ka = std::make_pair(examples[a].target.size(), examples[a].grid.points);
    const auto kb = std::make_pair(examples[b].target.size(), examples[b].grid.points);
    return ka < kb;
  });
  std::vector<std::vector<std::size_t>> batches;
  std::vector<std::size_t> current;
  std::size_t used = 0;
  for (std::size_t idx : order) {
    const std::size_t cost = examples[idx].token_count();
    if (!current.empty() && used + cost > tokens_per_batch) {
      batches.push_back(std::move(current));
      current.clear();
      used = 0;
    }
    current.push_back(idx);
    used += cost;
  }
  if (!current.empty()) batches.push_back(std::move(current));
  for (std::size_t i = batches.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
    std::swap(batches[i - 1], batches[j]);
  }
  return batches;
}

TrainingLog::TrainingLog(const std::string& path) {
  const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
  out_.open(path, std::ios::app);
  if (!out_) throw std::runtime_error("cannot open training log " + path);
  if (fresh) out_ << "step,lr,loss\n";
}

void TrainingLog::record(std::size_t step, double lr, double loss) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g\n", step, lr, loss);
  out_ << buf;
  out_.flush();
}

LossStats evaluate_examples(const Model& model, std::span<const TrainingExample> examples,
                            std::size_t tokens_per_batch) {
  LossStats total;
  double loss_sum = 0.0;
  std::size_t begin = 0;
  while (begin < examples.size()) {
    std::size_t end = begin, used = 0;
    while (end < examples.size() && (end == begin || used + examples[end].token_count() <= tokens_per_batch))
      used += examples[end++].token_count();
    const LossStats s = batch_loss(model, examples.subspan(begin, end - begin), nullptr);
    loss_sum += s.loss * static_cast<double>(s.tokens);
    total.tokens += s.tokens;
    total.correct += s.correct;
    begin = end;
  }
  total.loss = total.tokens ? loss_sum / static_cast<double>(total.tokens) : 0.0;
  return total;
}

TrainingOutcome run_training(Trainer& trainer, std::span<const TrainingExample> examples, const TrainingRun& run,
                             Rng& rng) {
  TrainingOutcome out;
  if (examples.empty()) throw std::invalid_argument("no training examples");
  const auto start = std::chrono::steady_clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(); };
  const std::size_t budget = trainer.config().tokens_per_batch;
  auto check_accuracy = [&] {
    const LossStats s = evaluate_examples(trainer.model(), examples, budget);
    out.accuracy = s.tokens ? static_cast<double>(s.correct) / static_cast<double>(s.tokens) : 0.0;
    out.reached_accuracy = out.accuracy >= run.stop_accuracy;
    return out.reached_accuracy;
  };
  std::vector<std::vector<std::size_t>> batches;
  std::size_t cursor = 0;
  std::vector<TrainingExample> batch;
  while (out.steps_run < run.steps) {
    if (run.time_limit_seconds > 0.0 && elapsed() >= run.time_limit_seconds) {
      out.hit_time_limit = true;
      break;
    }
    if (cursor == batches.size()) {
      batches = make_length_batches(examples, budget, rng);
      cursor = 0;
    }
    batch.clear();
    for (std::size_t idx : batches[cursor]) batch.push_back(examples[idx]);
    ++cursor;
    const double lr = trainer.current_lr();
    const LossStats s = trainer.step(batch);
    ++out.steps_run;
    out.losses.push_back(s.loss);
    if (run.log) run.log->record(trainer.step_count(), lr, s.loss);
    if (run.on_step) run.on_step(trainer.step_count(), lr, s);
    if (run.stop_accuracy > 0.0 && run.eval_every > 0 && out.steps_run % run.eval_every == 0 && check_accuracy())
      break;
  }
  if (run.stop_accuracy > 0.0 && !out.reached_accuracy && (out.steps_run == 0 || run.eval_every == 0 ||
                                                           out.steps_run % run.eval_every != 0))
    check_accuracy();
  out.seconds = elapsed();
  return out;
}

}  // namespace odesr
