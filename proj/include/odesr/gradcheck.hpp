#pragma once

#include <span>
#include <string>
#include <vector>

#include "odesr/model.hpp"
#include "odesr/random.hpp"

namespace odesr {

struct GradCheckEntry {
  std::string block;
  std::size_t index;
  double analytic;
  double numeric;
  double rel_error;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_block;
  std::size_t blocks_checked = 0;
  std::vector<GradCheckEntry> entries;
};

/// 16-wide, 2 heads, one layer each side, D_max 2.
ModelConfig tiny_model_config(std::uint64_t seed = 1);

/// Random trajectories (numeric tokens only) and random symbolic targets.
std::vector<TrainingExample> random_training_batch(const Vocabulary& vocab, int max_dimension, std::size_t count,
                                                   Rng& rng);

/// rel = |a - n| / max(|a|, |n|, floor).
double relative_error(double analytic, double numeric, double floor = 1e-7) noexcept;

/// Central differences with step h against batch_loss gradients, for
/// `samples_per_block` entries of every parameter block. Entries are drawn
/// from those with analytic gradient above 1e-9, favouring larger magnitudes;
/// pairs where both values are below 1e-9 count as agreeing.
GradCheckReport gradient_check(const Model& model, std::span<const TrainingExample> batch, double h,
                               int samples_per_block, Rng& rng);

/// Same comparison for a single Linear layer under a linear loss
/// sum(C .* (X W + b)), where central differences are exact up to rounding.
double linear_head_gradient_check(Rng& rng, double h = 1e-4);

}  // namespace odesr
