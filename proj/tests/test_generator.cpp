#include <doctest.h>

#include <set>

#include "odesr/generator.hpp"
#include "odesr/random.hpp"

using namespace odesr;

TEST_SUITE("generator") {
  TEST_CASE("catalan numbers") {
    CHECK(catalan(0) == 1);
    CHECK(catalan(3) == 5);
    CHECK(catalan(10) == 16796);
  }

  TEST_CASE("skeletons are full binary trees with b internal nodes") {
    Rng rng(1);
    std::set<std::string> shapes;
    for (int i = 0; i < 2000; ++i) {
      const Skeleton s = sample_binary_skeleton(3, rng);
      CHECK(s.internal_count() == 3);
      CHECK(s.nodes.size() == 7);
      shapes.insert(s.code());
    }
    CHECK(shapes.size() == 5);
    CHECK(sample_binary_skeleton(0, rng).code() == "L");
  }

  TEST_CASE("components respect dimension, depth rule and complexity bound") {
    GeneratorConfig cfg;
    Rng rng(2);
    for (int i = 0; i < 2000; ++i) {
      const int d = sample_dimension(cfg, rng);
      CHECK(d >= 1);
      CHECK(d <= cfg.max_dimension);
      ComponentTrace trace;
      const Expression e = sample_component(cfg, d, rng, &trace);
      CHECK(max_variable_index(e) < d);
      CHECK(complexity(e) <= component_complexity_bound(cfg));
      CHECK(trace.binary_count <= cfg.max_binary);
      for (const auto& ins : trace.insertions) CHECK(ins.subtree_depth < cfg.max_unary_subtree_depth);
      for (double c : trace.coefficients) {
        CHECK(std::abs(c) >= cfg.c_min);
        CHECK(std::abs(c) <= cfg.c_max);
      }
    }
  }

  TEST_CASE("systems use every variable range and are reproducible") {
    GeneratorConfig cfg;
    Rng a(7), b(7);
    for (int i = 0; i < 50; ++i) {
      const OdeSystem s = sample_system(cfg, a);
      CHECK(s == sample_system(cfg, b));
    }
  }

  TEST_CASE("config validation") {
    GeneratorConfig cfg;
    cfg.c_min = -1;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = GeneratorConfig{};
    cfg.max_dimension = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  }
}
