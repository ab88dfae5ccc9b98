#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "odesr/bfgs.hpp"
#include "odesr/expr.hpp"
#include "odesr/integrator.hpp"
#include "odesr/model.hpp"
#include "odesr/random.hpp"
#include "odesr/tokenizer.hpp"

namespace odesr {

/// t~ = a t + b and x~_i = x_i / anchors[i].
struct RescaleTransform {
  double a = 1.0;
  double b = 0.0;
  std::vector<double> anchors;
  /// Dimensions whose first value was zero and got max |x_i| instead.
  std::vector<int> replaced_anchors;

  static RescaleTransform identity(int dimension);
};

struct RescaledTrajectory {
  Trajectory trajectory;
  RescaleTransform transform;
};

/// Maps the observed time range onto [1, 10] and every first state to 1.
/// A zero first value is replaced by max |x_i| over the trajectory (or 1 when
/// the dimension is identically zero) and recorded in replaced_anchors.
RescaledTrajectory rescale(const Trajectory& traj);

/// Applies an existing transform to a trajectory.
Trajectory apply_transform(const Trajectory& traj, const RescaleTransform& tf);

/// Back to original units: f_i(x) = a * anchor_i * f~_i(x_1 / anchor_1, ...),
/// built symbolically.
OdeSystem unscale_system(const OdeSystem& scaled, const RescaleTransform& tf);

struct DecodeConfig {
  int beam_size = 50;
  double temperature = 0.1;
  int max_length = 0;  // 0: the model's max_target_length

  void validate() const;
};

struct Candidate {
  OdeSystem system;
  TokenSequence tokens;
  double log_prob = 0.0;  // sum of temperature-scaled token log-probabilities
};

/// Stochastic beam decoding. Every step scores each expansion of each live
/// hypothesis by cumulative log-probability plus a Gumbel draw and keeps the
/// best beam_size (sampling without replacement from the pooled
/// expansions). Hypotheses ending in EOS are frozen. Malformed sequences are
/// dropped; duplicates are merged. May return an empty list.
std::vector<Candidate> beam_sample(const Model& model, const TokenGrid& grid, const DecodeConfig& cfg, Rng& rng);

/// Integration settings used to score candidates against observations.
IntegrationConfig scoring_integration_config();

/// Variance-weighted R^2 of `sys` integrated from the first observation over
/// the observed times; -infinity when integration fails.
double reconstruction_score(const OdeSystem& sys, const Trajectory& observed, const IntegrationConfig& cfg);

struct Selection {
  std::size_t index = 0;
  double score = 0.0;
  std::vector<double> scores;  // per candidate
};

class NoValidCandidate : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Argmax of reconstruction_score; ties keep the earliest candidate. Throws
/// NoValidCandidate when the list is empty or no candidate integrates.
Selection select_best(std::span<const OdeSystem> candidates, const Trajectory& observed,
                      const IntegrationConfig& cfg);

struct RefineConfig {
  IntegrationConfig integration;  // tight tolerances keep the objective smooth
  BfgsOptions bfgs;

  RefineConfig();
};

/// Negative variance-weighted R^2, +infinity on integration failure.
double refinement_objective(const OdeSystem& sys, const Trajectory& observed, const IntegrationConfig& cfg);

struct RefineResult {
  OdeSystem system;
  double objective_before = 0.0;
  double objective_after = 0.0;
  int evaluations = 0;
};

/// BFGS over all constants of `sys`; the result is never worse than the input
/// under refinement_objective. Systems without constants, or whose every
/// evaluation fails, come back unchanged.
RefineResult refine_constants(const OdeSystem& sys, const Trajectory& observed, const RefineConfig& cfg = {});

struct InferenceConfig {
  DecodeConfig decode;
  bool rescale = true;
  bool refine = false;
  IntegrationConfig scoring = scoring_integration_config();
  RefineConfig refinement;
};

struct ScoredCandidate {
  OdeSystem scaled;    // as decoded
  OdeSystem system;    // original units
  double log_prob = 0.0;
  double score = 0.0;  // reconstruction R^2 on the observations
};

struct Prediction {
  bool valid = false;
  OdeSystem system;  // selected (refined when enabled), original units
  double score = 0.0;
  std::vector<ScoredCandidate> candidates;  // sorted by score, best first
  RescaleTransform transform;
  std::optional<RefineResult> refinement;
  double seconds = 0.0;
  std::string error;  // set when !valid
};

/// rescale -> tokenize -> beam_sample -> unscale -> select_best -> refine.
/// Never throws for bad predictions; failures come back as !valid.
Prediction predict(const Model& model, const Trajectory& observed, const InferenceConfig& cfg, Rng& rng);

/// One JSON object describing a prediction.
std::string prediction_json(const Prediction& p);

}  // namespace odesr
