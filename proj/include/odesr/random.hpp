#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace odesr {

/// xoshiro256** seeded through splitmix64.
///
/// Every distribution below is implemented here rather than taken from
/// <random>, whose distributions are implementation-defined. Integer draws are
/// bit-identical across platforms; real draws depend only on IEEE arithmetic
/// plus std::log / std::sqrt for the normal sampler.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) noexcept;

  /// Independent stream for (seed, stream) pairs, e.g. per worker or per attempt.
  static Rng for_stream(std::uint64_t seed, std::uint64_t stream) noexcept;

  std::uint64_t next_u64() noexcept;

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept;
  double uniform(double lo, double hi) noexcept;

  /// Uniform on the closed integer range [lo, hi]; unbiased (rejection).
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) noexcept;

  /// Standard normal, Marsaglia polar method.
  double normal() noexcept;
  double normal(double mean, double stddev) noexcept { return mean + stddev * normal(); }

  bool bernoulli(double p) noexcept { return uniform() < p; }

  /// Gumbel(0, 1) draw, used for sampling without replacement.
  double gumbel() noexcept;

  std::uint64_t seed() const noexcept { return seed_; }

 private:
  std::uint64_t seed_;
  std::uint64_t s_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t& state) noexcept;

/// Seed of attempt `index` under `base`; stable mixing of the pair.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) noexcept;

/// FNV-1a over bytes; used for content hashes of text artifacts.
std::uint64_t fnv1a64(std::span<const unsigned char> bytes,
                      std::uint64_t basis = 0xcbf29ce484222325ULL) noexcept;
std::uint64_t fnv1a64(std::string_view text) noexcept;

}  // namespace odesr
