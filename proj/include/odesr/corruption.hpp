#pragma once

#include "odesr/integrator.hpp"
#include "odesr/random.hpp"

namespace odesr {

struct CorruptionConfig {
  double noise_sigma = 0.0;
  double subsample_rho = 0.0;

  void validate() const;
};

/// x -> (1 + xi) x with xi ~ N(0, sigma) (sigma is the standard deviation).
Trajectory add_noise(const Trajectory& traj, double sigma, Rng& rng);

/// Keeps exactly round((1 - rho) N) points: the first point plus a uniform
/// random subset of the rest, order preserved. Throws std::invalid_argument
/// when fewer than 2 points would remain.
Trajectory subsample(const Trajectory& traj, double rho, Rng& rng);

/// Noise first, then subsampling.
Trajectory corrupt(const Trajectory& traj, const CorruptionConfig& cfg, Rng& rng);

}  // namespace odesr
