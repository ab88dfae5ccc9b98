#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "odesr/expr.hpp"
#include "odesr/inference.hpp"
#include "odesr/integrator.hpp"
#include "odesr/metrics.hpp"
#include "odesr/random.hpp"

namespace odesr {

enum class Task : std::uint8_t { reconstruction, generalization };
std::string_view to_string(Task t) noexcept;

inline constexpr double accuracy_threshold = 0.9;

struct EvaluationResult {
  int case_id = 0;
  Task task = Task::reconstruction;
  double sigma = 0.0;
  double rho = 0.0;
  double r2 = std::numeric_limits<double>::quiet_NaN();  // NaN: invalid prediction
  bool accurate = false;
  std::size_t complexity = 0;
  double inference_seconds = 0.0;
  std::string predicted;  // infix, empty when no prediction

  bool valid() const noexcept { return is_valid_score(r2); }
};

struct EvaluationGrid {
  double t_start = 1.0;
  double t_end = 10.0;
  std::size_t dense_points = 512;
  IntegrationConfig integration;

  EvaluationGrid();
};

/// Integrates truth (noiseless) and prediction from `ic` on the dense grid
/// and scores them with r2_score. A failed prediction (or none) is invalid.
/// Throws std::runtime_error when the ground truth itself fails to integrate.
EvaluationResult score_against_truth(const std::optional<OdeSystem>& pred, const OdeSystem& truth,
                                     std::span<const double> ic, const EvaluationGrid& grid,
                                     double threshold = accuracy_threshold);

/// Same initial condition and interval as the observations.
EvaluationResult reconstruction_eval(const std::optional<OdeSystem>& pred, const OdeSystem& truth,
                                     std::span<const double> ic, const EvaluationGrid& grid,
                                     double threshold = accuracy_threshold);

/// A different initial condition over the same interval.
EvaluationResult generalization_eval(const std::optional<OdeSystem>& pred, const OdeSystem& truth,
                                     std::span<const double> new_ic, const EvaluationGrid& grid,
                                     double threshold = accuracy_threshold);

/// Share of results with a valid r2 above `threshold`; invalid results count
/// in the denominator. Throws std::invalid_argument for an empty set.
double accuracy_at_threshold(std::span<const EvaluationResult> results, double threshold = accuracy_threshold);

/// A system with two initial conditions: the first is observed, the second
/// is held out for generalization.
struct BenchmarkCase {
  int id = 0;
  std::string name;
  OdeSystem system;
  std::vector<std::vector<double>> initial_conditions;
};

struct BenchmarkConfig {
  std::vector<double> noise_levels{0.0, 0.01, 0.02, 0.03, 0.04, 0.05};
  std::vector<double> subsample_levels{0.0, 0.5};
  std::vector<Task> tasks{Task::reconstruction, Task::generalization};
  std::size_t observed_points = 150;  // before subsampling
  EvaluationGrid grid;
  std::uint64_t seed = 0;
  double threshold = accuracy_threshold;
};

/// Predicted system (nullopt when invalid) and the time spent producing it.
struct PredictionOutcome {
  std::optional<OdeSystem> system;
  double seconds = 0.0;
};
using PredictionSource = std::function<PredictionOutcome(const Trajectory& observed, Rng& rng)>;

/// Wraps a model and inference settings as a prediction source.
PredictionSource model_predictor(const Model& model, const InferenceConfig& cfg);

struct BenchmarkTable {
  std::vector<EvaluationResult> rows;  // cases x noise x subsample x tasks

  struct Aggregate {
    Task task;
    double sigma, rho;
    std::size_t count = 0, invalid = 0;
    double accuracy = 0.0;
    double mean_r2 = 0.0;    // over valid rows
    double median_r2 = 0.0;  // over valid rows
  };
  std::vector<Aggregate> aggregates() const;
};

/// Observations of `c` for one corruption level: the first initial condition
/// integrated on the observed grid, then noise and subsampling.
Trajectory observe_case(const BenchmarkCase& c, const BenchmarkConfig& cfg, double sigma, double rho, Rng& rng);

/// Sweep over cases x (sigma, rho) x tasks. One prediction per (case, sigma,
/// rho) serves both tasks. Each cell draws from its own stream of cfg.seed,
/// so the table does not depend on execution order. Failures of a single
/// cell become invalid rows.
BenchmarkTable run_benchmark(const PredictionSource& source, std::span<const BenchmarkCase> cases,
                             const BenchmarkConfig& cfg);

void write_results_csv(std::ostream& out, const BenchmarkTable& table);
BenchmarkTable read_results_csv(std::istream& in);
std::string summary_json(const BenchmarkTable& table);

}  // namespace odesr
