#include <doctest.h>

#include <map>

#include "odesr/odebench.hpp"
#include "odesr/random.hpp"

using namespace odesr;

TEST_SUITE("odebench") {
  TEST_CASE("corpus shape") {
    const auto entries = load_corpus();
    REQUIRE(entries.size() == 63);
    std::map<int, int> dims;
    int chaotic = 0;
    for (std::size_t i = 0; i < entries.size(); ++i) {
      const auto& e = entries[i];
      CHECK(e.id == static_cast<int>(i) + 1);
      CHECK(e.system.dimension() == e.dimension);
      CHECK(e.equations.size() == static_cast<std::size_t>(e.dimension));
      for (const auto& ic : e.initial_conditions) CHECK(ic.size() == static_cast<std::size_t>(e.dimension));
      ++dims[e.dimension];
      chaotic += e.chaotic;
    }
    CHECK(dims[1] == 23);
    CHECK(dims[2] == 28);
    CHECK(dims[3] == 10);
    CHECK(dims[4] == 2);
    CHECK(chaotic == 4);
    CHECK(corpus_cases(entries).size() == 63);
  }

  TEST_CASE("embedded text matches the pinned hash") {
    CHECK(corpus_hash() == 0xb23a4df2f54d59cbULL);
    CHECK(pinned_corpus_hash == corpus_hash());
  }

  TEST_CASE("known entries") {
    const auto entries = load_corpus();
    const auto& logistic = entries[2];
    const double x[] = {0.5};
    double dx[1];
    logistic.system.evaluate(x, dx);
    CHECK(logistic.params.size() == 2);
    CHECK(dx[0] == doctest::Approx(logistic.params[0] * 0.5 * (1.0 - 0.5 / logistic.params[1])));
  }

  TEST_CASE("malformed corpus text names the record") {
    const std::string good(corpus_source());
    const std::string bad = good.substr(0, good.find("dim:")) + "dim: 7\n" + good.substr(good.find('\n', good.find("dim:")) + 1);
    try {
      parse_corpus(bad);
      FAIL("expected CorpusIntegrityError");
    } catch (const CorpusIntegrityError& e) {
      CHECK(std::string(e.what()).find("line 11:") != std::string::npos);
    }
  }

  TEST_CASE("trajectories for both initial conditions") {
    const auto entries = load_corpus();
    Rng rng(1);
    const EntryTrajectories t = generate_entry_trajectories(entries[0], 120, CorruptionConfig{0.0, 0.5}, rng);
    CHECK(t.reconstruction.size() == 60);
    CHECK(t.generalization.size() == 60);
    CHECK(t.reconstruction.times.front() == 1.0);
  }

  TEST_CASE("Strogatz collection is only referenced") {
    const StrogatzNote n = load_strogatz_note();
    CHECK(n.unique_systems == 7);
    CHECK(n.deprecated);
    CHECK(!n.ships_trajectories);
  }
}
