#include <doctest.h>

#include <cmath>
#include <sstream>

#include "odesr/evaluation.hpp"
#include "odesr/metrics.hpp"
#include "odesr/random.hpp"

using namespace odesr;

namespace {

Matrix random_matrix(std::size_t n, std::size_t d, Rng& rng) {
  Matrix m(n, d);
  for (double& v : m.storage()) v = rng.normal() * 3.0;
  return m;
}

BenchmarkCase decay_case() {
  return BenchmarkCase{1, "decay", parse_infix_system("-0.5 * x0 + 0.2 * x0 * x0"), {{1.0}, {0.4}}};
}

}  // namespace

TEST_SUITE("evaluation") {
  TEST_CASE("r2_score matches the pooled formula") {
    Rng rng(1);
    for (int trial = 0; trial < 20; ++trial) {
      const Matrix y = random_matrix(40, 3, rng), p = random_matrix(40, 3, rng);
      double res = 0.0, tot = 0.0;
      for (std::size_t j = 0; j < 3; ++j) {
        double mean = 0.0;
        for (std::size_t i = 0; i < 40; ++i) mean += y(i, j) / 40.0;
        for (std::size_t i = 0; i < 40; ++i) {
          res += std::pow(y(i, j) - p(i, j), 2);
          tot += std::pow(y(i, j) - mean, 2);
        }
      }
      CHECK(std::abs(r2_score(y, p) - (1.0 - res / tot)) < 1e-12);
    }
    Matrix y(3, 1);
    y(0, 0) = 1;
    y(1, 0) = 2;
    y(2, 0) = 4;
    CHECK(r2_score(y, y) == 1.0);
    Matrix bad = y;
    bad(1, 0) = INFINITY;
    CHECK(!is_valid_score(r2_score(y, bad)));
    CHECK_THROWS_AS(r2_score(Matrix(3, 1, 2.0), y), std::invalid_argument);
    CHECK_THROWS_AS(r2_score(y, Matrix(2, 1)), std::invalid_argument);
  }

  TEST_CASE("accuracy counts invalid rows in the denominator") {
    std::vector<EvaluationResult> rows(4);
    rows[0].r2 = 0.95;
    rows[1].r2 = 0.5;
    rows[2].r2 = 0.99;
    CHECK(accuracy_at_threshold(rows) == doctest::Approx(0.5));
    CHECK(accuracy_at_threshold(rows, 0.98) == doctest::Approx(0.25));
    CHECK_THROWS_AS(accuracy_at_threshold(std::span<const EvaluationResult>{}), std::invalid_argument);
  }

  TEST_CASE("scoring the truth against itself") {
    const BenchmarkCase c = decay_case();
    const EvaluationGrid g;
    const EvaluationResult r = reconstruction_eval(c.system, c.system, c.initial_conditions[0], g);
    CHECK(r.r2 == doctest::Approx(1.0));
    CHECK(r.accurate);
    CHECK(!reconstruction_eval(std::nullopt, c.system, c.initial_conditions[0], g).valid());
    const EvaluationResult blow = generalization_eval(parse_infix_system("x0 * x0"), c.system, c.initial_conditions[1], g);
    CHECK(!blow.valid());
    CHECK(!blow.accurate);
  }

  TEST_CASE("benchmark sweep with an oracle predictor") {
    const std::vector<BenchmarkCase> cases = {decay_case()};
    BenchmarkConfig cfg;
    cfg.noise_levels = {0.0, 0.05};
    cfg.subsample_levels = {0.0, 0.5};
    const PredictionSource oracle = [&](const Trajectory& obs, Rng&) {
      CHECK(obs.dimension() == 1);
      return PredictionOutcome{cases[0].system, 0.0};
    };
    const BenchmarkTable t = run_benchmark(oracle, cases, cfg);
    CHECK(t.rows.size() == 1 * 2 * 2 * 2);
    for (const auto& r : t.rows) CHECK(r.r2 == doctest::Approx(1.0));
    const auto agg = t.aggregates();
    CHECK(agg.size() == 8);
    for (const auto& a : agg) CHECK(a.accuracy == 1.0);

    std::stringstream csv;
    write_results_csv(csv, t);
    const BenchmarkTable back = read_results_csv(csv);
    REQUIRE(back.rows.size() == t.rows.size());
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
      CHECK(back.rows[i].r2 == t.rows[i].r2);
      CHECK(back.rows[i].predicted == t.rows[i].predicted);
      CHECK(back.rows[i].task == t.rows[i].task);
    }
    CHECK(summary_json(t).find("accuracy") != std::string::npos);
  }

  TEST_CASE("observations are reproducible per cell") {
    const BenchmarkCase c = decay_case();
    BenchmarkConfig cfg;
    Rng a(9), b(9);
    const Trajectory x = observe_case(c, cfg, 0.03, 0.5, a), y = observe_case(c, cfg, 0.03, 0.5, b);
    CHECK(x.states == y.states);
    CHECK(x.size() == 75);
  }

  TEST_CASE("failed predictions become invalid rows") {
    const std::vector<BenchmarkCase> cases = {decay_case()};
    BenchmarkConfig cfg;
    cfg.noise_levels = {0.0};
    cfg.subsample_levels = {0.0};
    const PredictionSource broken = [](const Trajectory&, Rng&) -> PredictionOutcome {
      throw std::runtime_error("boom");
    };
    const BenchmarkTable t = run_benchmark(broken, cases, cfg);
    REQUIRE(t.rows.size() == 2);
    CHECK(!t.rows[0].valid());
    CHECK(t.aggregates()[0].invalid == 1);
  }

  TEST_CASE("csv reader reports malformed input") {
    std::stringstream bad("case_id,task\n1,x\n");
    CHECK_THROWS(read_results_csv(bad));
  }
}
