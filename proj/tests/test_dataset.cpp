#include <doctest.h>

#include <cmath>
#include <sstream>

#include "odesr/dataset.hpp"

using namespace odesr;

namespace {

DatasetConfig small_config(std::uint64_t seed) {
  DatasetConfig c;
  c.generator.max_dimension = 2;
  c.seed = seed;
  c.integration.min_points = 20;
  c.integration.max_points = 40;
  return c;
}

}  // namespace

TEST_SUITE("dataset") {
  TEST_CASE("zero count is empty") { CHECK(generate_dataset(0, small_config(1)).empty()); }

  TEST_CASE("output does not depend on the worker count") {
    DatasetConfig one = small_config(2), four = small_config(2);
    four.workers = 4;
    const auto a = generate_dataset(30, one), b = generate_dataset(30, four);
    REQUIRE(a.size() == 30);
    REQUIRE(b.size() == 30);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(record_json(a[i]) == record_json(b[i]));
  }

  TEST_CASE("records satisfy the filters and the corruption ranges") {
    DatasetConfig c = small_config(3);
    c.corruption.sigma_max = 0.0;
    GenerationStats stats;
    const auto recs = generate_dataset(40, c, &stats);
    CHECK(stats.accepted == 40);
    CHECK(stats.attempts >= 40);
    CHECK(stats.attempts == stats.accepted + stats.integration_failed + stats.divergent + stats.converged);
    for (const auto& r : recs) {
      CHECK(r.sigma == 0.0);
      CHECK(r.rho <= 0.5);
      CHECK(r.dimension() <= 2);
      CHECK(r.dimension() == r.system().dimension());
      for (double v : r.trajectory.states.storage()) CHECK(std::abs(v) <= 100.0);
    }
  }

  TEST_CASE("max dimension 1 yields only 1D systems") {
    DatasetConfig c = small_config(4);
    c.generator.max_dimension = 1;
    for (const auto& r : generate_dataset(20, c)) CHECK(r.dimension() == 1);
  }

  TEST_CASE("JSONL round-trip") {
    const auto recs = generate_dataset(10, small_config(5));
    std::stringstream ss;
    write_records(ss, recs);
    const auto back = read_records(ss);
    REQUIRE(back.size() == recs.size());
    for (std::size_t i = 0; i < recs.size(); ++i) {
      CHECK(back[i].prefix == recs[i].prefix);
      CHECK(back[i].trajectory.times == recs[i].trajectory.times);
      CHECK(back[i].trajectory.states == recs[i].trajectory.states);
      CHECK(back[i].sigma == recs[i].sigma);
      CHECK(back[i].seed == recs[i].seed);
    }
    const auto ex = to_training_example(recs[0], Vocabulary(6));
    CHECK(ex.grid.points == recs[0].points());
  }

  TEST_CASE("malformed lines report their number") {
    const auto recs = generate_dataset(2, small_config(6));
    std::stringstream ss;
    ss << record_json(recs[0]) << "\n{\"index\": 1, \"prefix\": \"add x0\"}\n";
    try {
      read_records(ss);
      FAIL("expected MalformedRecord");
    } catch (const MalformedRecord& e) {
      CHECK(e.line() == 2);
    }
  }

  TEST_CASE("throughput guard trips on impossible filters") {
    DatasetConfig c = small_config(7);
    c.integration.divergence_threshold = 1e-9;
    c.guard_attempts = 200;
    CHECK_THROWS_AS(generate_dataset(5, c), ThroughputError);
  }

  TEST_CASE("manifest records config and statistics") {
    GenerationStats stats;
    const DatasetConfig c = small_config(8);
    generate_dataset(5, c, &stats);
    const std::string m = manifest_json(c, 5, stats);
    CHECK(m.find("acceptance_rate") != std::string::npos);
    CHECK(m.find("\"seed\"") != std::string::npos);
  }
}
