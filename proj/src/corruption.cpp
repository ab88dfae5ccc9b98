#include "odesr/corruption.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace odesr {

void CorruptionConfig::validate() const {
  if (!(noise_sigma >= 0.0)) throw std::invalid_argument("noise sigma must be >= 0");
  if (!(subsample_rho >= 0.0 && subsample_rho < 1.0)) throw std::invalid_argument("subsample rho must be in [0, 1)");
}

Trajectory add_noise(const Trajectory& traj, double sigma, Rng& rng) {
  if (!(sigma >= 0.0)) throw std::invalid_argument("noise sigma must be >= 0");
  Trajectory out = traj;
  if (sigma == 0.0) return out;
  for (double& v : out.states.storage()) v *= 1.0 + sigma * rng.normal();
  return out;
}

Trajectory subsample(const Trajectory& traj, double rho, Rng& rng) {
  if (!(rho >= 0.0 && rho < 1.0)) throw std::invalid_argument("subsample rho must be in [0, 1)");
  const std::size_t n = traj.size();
  const auto keep = static_cast<std::size_t>(std::llround((1.0 - rho) * static_cast<double>(n)));
  if (keep < 2) throw std::invalid_argument("subsampling would leave fewer than 2 points");
  if (keep >= n) return traj;

  // Partial Fisher-Yates over indices 1..n-1 picks keep-1 of them uniformly.
  std::vector<std::size_t> idx(n - 1);
  std::iota(idx.begin(), idx.end(), std::size_t{1});
  for (std::size_t i = 0; i + 1 < keep; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(idx.size() - i) - 1));
    std::swap(idx[i], idx[j]);
  }
  std::vector<bool> chosen(n, false);
  chosen[0] = true;
  for (std::size_t i = 0; i + 1 < keep; ++i) chosen[idx[i]] = true;

  Trajectory out;
  const std::size_t d = traj.states.cols();
  out.states.resize(keep, d);
  out.times.reserve(keep);
  for (std::size_t i = 0, r = 0; i < n; ++i) {
    if (!chosen[i]) continue;
    out.times.push_back(traj.times[i]);
    for (std::size_t j = 0; j < d; ++j) out.states(r, j) = traj.states(i, j);
    ++r;
  }
  return out;
}

Trajectory corrupt(const Trajectory& traj, const CorruptionConfig& cfg, Rng& rng) {
  cfg.validate();
  return subsample(add_noise(traj, cfg.noise_sigma, rng), cfg.subsample_rho, rng);
}

}  // namespace odesr
