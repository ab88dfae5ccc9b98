#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "odesr/expr.hpp"
#include "odesr/matrix.hpp"
#include "odesr/random.hpp"

namespace odesr {

/// Observations (t_i, x_i): strictly increasing times and an N x D state matrix.
struct Trajectory {
  std::vector<double> times;
  Matrix states;

  std::size_t size() const noexcept { return times.size(); }
  int dimension() const noexcept { return static_cast<int>(states.cols()); }

  /// Throws std::invalid_argument unless N >= 2, shapes agree, entries are
  /// finite, and times strictly increase.
  void validate() const;
};

struct IntegrationConfig {
  double rtol = 1e-3;
  double atol = 1e-6;
  double t_start = 1.0;
  double t_end = 10.0;
  int min_points = 50;  // grid size N is drawn from [min_points, max_points]
  int max_points = 200;
  double wall_timeout_seconds = 1.0;
  std::size_t max_steps = 1'000'000;
  double divergence_threshold = 1e2;
  double oscillation_threshold = 1e-3;
  double oscillation_window = 0.25;
  double converged_keep_probability = 0.1;
  double ic_scale = 1.0;  // variance of the initial-condition normal

  void validate() const;
};

enum class IntegrationStatus : std::uint8_t { ok, non_finite, step_underflow, timeout, step_limit };
std::string_view to_string(IntegrationStatus s) noexcept;

struct IntegrationResult {
  IntegrationStatus status = IntegrationStatus::ok;
  Trajectory trajectory;
  std::size_t accepted_steps = 0;
  std::size_t rejected_steps = 0;

  bool ok() const noexcept { return status == IntegrationStatus::ok; }
};

/// Flattened postfix form of an OdeSystem for hot evaluation loops.
class CompiledSystem {
 public:
  explicit CompiledSystem(const OdeSystem& sys);
  int dimension() const noexcept { return dimension_; }
  void operator()(const double* x, double* dxdt) const noexcept;

 private:
  struct Instr {
    std::uint8_t code;  // 0 const, 1 var, 2 unary, 3 binary
    std::uint8_t op;
    int index;
    double value;
  };
  int dimension_ = 0;
  std::vector<Instr> program_;
  std::vector<std::size_t> ends_;  // program end offset per component
  std::size_t max_stack_ = 0;
};

/// numpy-style linspace: start + i * step, last point exactly `stop`.
std::vector<double> linspace(double start, double stop, std::size_t n);

/// Adaptive Dormand-Prince 5(4) with dense output at `times` (strictly
/// increasing; integration starts at times.front() from x0).
IntegrationResult integrate(const OdeSystem& sys, std::span<const double> x0, std::span<const double> times,
                            const IntegrationConfig& cfg);

/// Reports on linspace(cfg.t_start, cfg.t_end, n_points).
IntegrationResult integrate_on_grid(const OdeSystem& sys, std::span<const double> x0, std::size_t n_points,
                                    const IntegrationConfig& cfg);

/// Fixed-step 5th-order propagation (no error control); returns the state at t1.
std::vector<double> integrate_fixed_step(const OdeSystem& sys, std::span<const double> x0, double t0, double t1,
                                         std::size_t steps);

std::vector<double> sample_initial_condition(int dimension, double gamma, Rng& rng);

/// max - min per dimension over the trailing `window_fraction` of points.
std::vector<double> oscillation(const Trajectory& traj, double window_fraction);

enum class FilterReason : std::uint8_t { kept, divergent, converged };
std::string_view to_string(FilterReason r) noexcept;

struct FilterDecision {
  bool keep;
  FilterReason reason;
};

/// Discards divergent trajectories (any |x| above the threshold); discards
/// converged ones (oscillation below threshold in every dimension over the
/// window) unless a keep draw with probability converged_keep_probability
/// succeeds.
FilterDecision passes_filters(const Trajectory& traj, const IntegrationConfig& cfg, Rng& rng);

}  // namespace odesr
