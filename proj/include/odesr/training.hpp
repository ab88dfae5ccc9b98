#pragma once

#include <cstdint>
#include <fstream>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "odesr/model.hpp"
#include "odesr/random.hpp"

namespace odesr {

struct TrainConfig {
  double lr_peak = 2e-4;
  double lr_floor = 1e-7;
  std::size_t warmup_steps = 100;
  /// Length of the first cosine cycle after warmup; 0 means "until total_steps".
  std::size_t cycle_steps = 0;
  double restart_damping = 1.5;
  std::size_t tokens_per_batch = 4000;
  std::size_t total_steps = 1000;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t seed = 0;

  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// Linear warmup lr_floor -> lr_peak, then cosine decay to lr_floor. Each
/// restart divides the peak by restart_damping and doubles the cycle length.
double learning_rate(const TrainConfig& cfg, std::size_t step);

class NonFiniteLoss : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct AdamState {
  ModelParams m;
  ModelParams v;
  std::size_t t = 0;
};

class Trainer {
 public:
  Trainer(Model& model, const TrainConfig& cfg);
  Trainer(Model& model, const TrainConfig& cfg, AdamState state, std::size_t step);

  /// One Adam update on the whole batch at learning_rate(cfg, step()).
  /// Throws NonFiniteLoss (parameters untouched) if loss or gradients are
  /// not finite.
  LossStats step(std::span<const TrainingExample> batch);

  std::size_t step_count() const noexcept { return step_; }
  double current_lr() const { return learning_rate(cfg_, step_); }
  const AdamState& adam() const noexcept { return adam_; }
  const TrainConfig& config() const noexcept { return cfg_; }
  Model& model() noexcept { return model_; }

 private:
  Model& model_;
  TrainConfig cfg_;
  AdamState adam_;
  ModelParams grads_;
  std::size_t step_ = 0;
};

/// Groups examples of similar length (target length, then point count) into
/// batches whose token_count() sum stays within the budget (a single
/// oversized example forms its own batch). Batch order is shuffled.
std::vector<std::vector<std::size_t>> make_length_batches(std::span<const TrainingExample> examples,
                                                          std::size_t tokens_per_batch, Rng& rng);

/// Append-only CSV with header "step,lr,loss".
class TrainingLog {
 public:
  explicit TrainingLog(const std::string& path);
  void record(std::size_t step, double lr, double loss);

 private:
  std::ofstream out_;
};

/// Teacher-forced loss and token accuracy over all examples, no gradients.
LossStats evaluate_examples(const Model& model, std::span<const TrainingExample> examples,
                            std::size_t tokens_per_batch);

struct TrainingRun {
  std::size_t steps = 1000;  // steps to take from the trainer's current step
  /// When > 0, stop once evaluate_examples over the training set reaches this
  /// token accuracy; checked every eval_every steps and after the last step.
  double stop_accuracy = 0.0;
  std::size_t eval_every = 50;
  double time_limit_seconds = 0.0;  // 0: none
  TrainingLog* log = nullptr;
  std::function<void(std::size_t step, double lr, const LossStats& batch)> on_step;
};

struct TrainingOutcome {
  std::size_t steps_run = 0;
  std::vector<double> losses;  // per step, batch mean
  double accuracy = -1.0;      // last measured token accuracy, -1 if never measured
  bool reached_accuracy = false;
  bool hit_time_limit = false;
  double seconds = 0.0;
};

/// Epochs of make_length_batches(examples, cfg.tokens_per_batch) with a
/// fresh shuffle each epoch.
TrainingOutcome run_training(Trainer& trainer, std::span<const TrainingExample> examples, const TrainingRun& run,
                             Rng& rng);

}  // namespace odesr
