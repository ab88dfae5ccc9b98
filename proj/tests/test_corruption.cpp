#include <doctest.h>

#include <cmath>

#include "odesr/corruption.hpp"
#include "odesr/random.hpp"

using namespace odesr;

namespace {

Trajectory ramp(std::size_t n, int d) {
  Trajectory t;
  t.times = linspace(1.0, 10.0, n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> row(static_cast<std::size_t>(d));
    for (int j = 0; j < d; ++j) row[static_cast<std::size_t>(j)] = 1.0 + static_cast<double>(i + j);
    t.states.append_row(row);
  }
  return t;
}

}  // namespace

TEST_SUITE("corruption") {
  TEST_CASE("zero levels are identities") {
    Rng rng(1);
    const Trajectory t = ramp(50, 2);
    const Trajectory c = corrupt(t, CorruptionConfig{}, rng);
    CHECK(c.times == t.times);
    CHECK(c.states == t.states);
  }

  TEST_CASE("subsample keeps round((1 - rho) N) points including the first") {
    Rng rng(2);
    const Trajectory t = ramp(101, 1);
    for (double rho : {0.1, 0.25, 0.5, 0.9}) {
      const Trajectory s = subsample(t, rho, rng);
      CHECK(s.size() == static_cast<std::size_t>(std::lround((1.0 - rho) * 101)));
      CHECK(s.times.front() == t.times.front());
      for (std::size_t i = 1; i < s.size(); ++i) CHECK(s.times[i] > s.times[i - 1]);
    }
    CHECK_THROWS_AS(subsample(ramp(3, 1), 0.9, rng), std::invalid_argument);
  }

  TEST_CASE("noise is multiplicative with the requested std") {
    Rng rng(3);
    const Trajectory t = ramp(1000, 3);
    const Trajectory n = add_noise(t, 0.05, rng);
    double ss = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i)
      for (int j = 0; j < 3; ++j) ss += std::pow(n.states(i, j) / t.states(i, j) - 1.0, 2);
    CHECK(std::sqrt(ss / 3000) == doctest::Approx(0.05).epsilon(0.05));
    CHECK(n.times == t.times);
  }

  TEST_CASE("config validation") {
    CorruptionConfig c;
    c.subsample_rho = 1.0;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = CorruptionConfig{};
    c.noise_sigma = -0.1;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  }
}
