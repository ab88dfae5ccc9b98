#include <doctest.h>

#include <cmath>

#include "odesr/integrator.hpp"
#include "odesr/random.hpp"
#include "odesr/tokenizer.hpp"

using namespace odesr;

TEST_SUITE("tokenizer") {
  TEST_CASE("vocabulary layout") {
    const Vocabulary v;
    CHECK(Vocabulary::numeric_token_count == 10203);
    CHECK(v.size() == 3 + 1 + 10203 + 12 + 2 + 6);
    CHECK(v.token(Vocabulary::pad) == "<PAD>");
    CHECK(v.find("E-100").has_value());
    CHECK(v.find("x5").has_value());
    CHECK(!v.find("x6").has_value());
    CHECK(Vocabulary::deserialize(v.serialize()) == v);
    CHECK(Vocabulary::deserialize(v.serialize()).hash() == v.hash());
  }

  TEST_CASE("float encoding rounds to four significant digits") {
    CHECK(encode_float(1.23456) == FloatTriplet{false, 1235, -3});
    CHECK(encode_float(-0.5) == FloatTriplet{true, 5000, -4});
    CHECK(encode_float(9.9996) == FloatTriplet{false, 1000, -2});
    CHECK(encode_float(0.0) == FloatTriplet{false, 0, 0});
    CHECK(decode_float(encode_float(3.14159)) == doctest::Approx(3.142).epsilon(1e-12));
    CHECK_THROWS_AS(encode_float(std::nan("")), std::invalid_argument);
    CHECK_THROWS_AS(encode_float(INFINITY), std::invalid_argument);
  }

  TEST_CASE("out-of-range magnitudes saturate") {
    const FloatTriplet big = encode_float(1e200);
    CHECK(big.exponent == Vocabulary::max_exponent);
    CHECK(big.mantissa == 9999);
    const FloatTriplet tiny = encode_float(1e-200);
    CHECK(tiny.exponent == Vocabulary::min_exponent);
  }

  TEST_CASE("relative error bound") {
    Rng rng(4);
    for (int i = 0; i < 10000; ++i) {
      const double v = (rng.bernoulli(0.5) ? -1 : 1) * std::pow(10.0, rng.uniform(-80, 80));
      CHECK(std::abs(decode_float(encode_float(v)) - v) <= 5e-4 * std::abs(v));
    }
  }

  TEST_CASE("expression tokens round-trip up to constant rounding") {
    const Vocabulary v;
    const OdeSystem sys = parse_infix_system("1.5 * x0 + sin(x1) | -2 * x0 * x1");
    const TokenSequence t = encode_expression(sys, v);
    CHECK(t.front() == Vocabulary::bos);
    CHECK(t.back() == Vocabulary::eos);
    CHECK(decode_expression(t, v) == sys);
    TokenSequence truncated(t.begin(), t.end() - 2);
    truncated.push_back(Vocabulary::eos);
    CHECK_THROWS_AS(decode_expression(truncated, v), MalformedSequence);
    CHECK_THROWS_AS(decode_expression(TokenSequence{Vocabulary::bos, Vocabulary::eos}, v), MalformedSequence);
  }

  TEST_CASE("trajectory grid layout") {
    const Vocabulary v;
    Trajectory traj;
    traj.times = {1.0, 2.0, 3.0};
    for (int i = 0; i < 3; ++i) {
      const double row[] = {0.1 * i, -2.0 * i};
      traj.states.append_row(row);
    }
    const TokenGrid g = encode_trajectory(traj, v);
    CHECK(g.points == 3);
    CHECK(g.dimension == 2);
    CHECK(g.tokens.size() == 27);
    const Trajectory back = decode_trajectory(g);
    CHECK(back.times == traj.times);
    CHECK(back.states(2, 1) == doctest::Approx(-4.0));
    CHECK(tokens_to_text(std::span<const int>(g.tokens).first(3), v) == "+ 1000 E-3");
  }
}
