#include <doctest.h>

#include <cmath>

#include "odesr/integrator.hpp"
#include "odesr/random.hpp"

using namespace odesr;

TEST_SUITE("integrator") {
  TEST_CASE("linspace hits both ends") {
    const auto t = linspace(1.0, 10.0, 7);
    CHECK(t.size() == 7);
    CHECK(t.front() == 1.0);
    CHECK(t.back() == 10.0);
    CHECK(linspace(0.0, 1.0, 1).size() == 1);
  }

  TEST_CASE("exponential decay matches the closed form") {
    const OdeSystem sys = parse_infix_system("-0.7 * x0");
    IntegrationConfig cfg;
    cfg.rtol = 1e-8;
    cfg.atol = 1e-12;
    const double x0[] = {2.0};
    const auto r = integrate_on_grid(sys, x0, 100, cfg);
    REQUIRE(r.ok());
    for (std::size_t i = 0; i < r.trajectory.size(); ++i) {
      const double t = r.trajectory.times[i];
      CHECK(r.trajectory.states(i, 0) == doctest::Approx(2.0 * std::exp(-0.7 * (t - 1.0))).epsilon(1e-7));
    }
  }

  TEST_CASE("harmonic oscillator dense output") {
    const OdeSystem sys = parse_infix_system("x1 | -x0");
    IntegrationConfig cfg;
    cfg.rtol = 1e-9;
    cfg.atol = 1e-12;
    const double x0[] = {1.0, 0.0};
    const auto r = integrate_on_grid(sys, x0, 333, cfg);
    REQUIRE(r.ok());
    for (std::size_t i = 0; i < r.trajectory.size(); ++i) {
      const double t = r.trajectory.times[i] - 1.0;
      CHECK(r.trajectory.states(i, 0) == doctest::Approx(std::cos(t)).epsilon(1e-6));
      CHECK(r.trajectory.states(i, 1) == doctest::Approx(-std::sin(t)).epsilon(1e-6));
    }
  }

  TEST_CASE("finite-time blow-up is reported, not thrown") {
    const OdeSystem sys = parse_infix_system("x0 * x0");
    const double x0[] = {1.0};
    const auto r = integrate_on_grid(sys, x0, 50, IntegrationConfig{});
    CHECK(!r.ok());
  }

  TEST_CASE("step limit") {
    const OdeSystem sys = parse_infix_system("-1000 * x0 + sin(100 * x0)");
    IntegrationConfig cfg;
    cfg.max_steps = 5;
    const double x0[] = {1.0};
    const auto r = integrate_on_grid(sys, x0, 50, cfg);
    CHECK(r.status == IntegrationStatus::step_limit);
  }

  TEST_CASE("fixed-step propagation is fifth order") {
    const OdeSystem sys = parse_infix_system("x1 | -x0");
    const double x0[] = {1.0, 0.0};
    double prev = 0.0;
    for (std::size_t steps : {20, 40, 80}) {
      const auto x = integrate_fixed_step(sys, x0, 0.0, 5.0, steps);
      const double err = std::hypot(x[0] - std::cos(5.0), x[1] + std::sin(5.0));
      if (prev > 0) CHECK(std::log2(prev / err) == doctest::Approx(5.0).epsilon(0.1));
      prev = err;
    }
  }

  TEST_CASE("filters") {
    IntegrationConfig cfg;
    Rng rng(1);
    const double one[] = {1.0};
    const auto grow = integrate_on_grid(parse_infix_system("x0"), one, 100, cfg);
    REQUIRE(grow.ok());
    CHECK(passes_filters(grow.trajectory, cfg, rng).reason == FilterReason::divergent);

    const auto osc = integrate_on_grid(parse_infix_system("x1 | -x0"), std::vector<double>{1.0, 0.0}, 100, cfg);
    REQUIRE(osc.ok());
    CHECK(passes_filters(osc.trajectory, cfg, rng).keep);

    const auto conv = integrate_on_grid(parse_infix_system("-5 * x0"), one, 100, cfg);
    REQUIRE(conv.ok());
    int kept = 0;
    for (int i = 0; i < 2000; ++i) kept += passes_filters(conv.trajectory, cfg, rng).keep;
    CHECK(kept > 100);
    CHECK(kept < 300);
  }

  TEST_CASE("oscillation window") {
    Trajectory t;
    t.times = linspace(0, 1, 8);
    for (int i = 0; i < 8; ++i) {
      const double v[] = {static_cast<double>(i)};
      t.states.append_row(v);
    }
    CHECK(oscillation(t, 0.25)[0] == doctest::Approx(2.0));
  }

  TEST_CASE("trajectory validation") {
    Trajectory t;
    t.times = {1.0, 1.0};
    t.states = Matrix(2, 1);
    CHECK_THROWS_AS(t.validate(), std::invalid_argument);
  }

  TEST_CASE("initial conditions scale with gamma") {
    Rng rng(5);
    double ss = 0.0;
    for (int i = 0; i < 20000; ++i) ss += std::pow(sample_initial_condition(1, 4.0, rng)[0], 2);
    CHECK(ss / 20000 == doctest::Approx(4.0).epsilon(0.05));
  }
}
