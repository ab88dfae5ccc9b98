#include <doctest.h>

#include <algorithm>
#include <set>

#include "odesr/gradcheck.hpp"
#include "odesr/training.hpp"

using namespace odesr;

TEST_SUITE("training") {
  TEST_CASE("learning-rate schedule boundaries") {
    TrainConfig c;
    c.lr_peak = 1e-3;
    c.lr_floor = 1e-6;
    c.warmup_steps = 100;
    c.total_steps = 1100;
    CHECK(learning_rate(c, 0) == doctest::Approx(1e-6));
    CHECK(learning_rate(c, 100) == doctest::Approx(1e-3));
    CHECK(learning_rate(c, 50) == doctest::Approx(0.5 * (1e-6 + 1e-3)));
    CHECK(learning_rate(c, 1099) == doctest::Approx(1e-6).epsilon(1e-2));
    for (std::size_t s = 100; s + 10 < 1100; s += 10) CHECK(learning_rate(c, s + 10) <= learning_rate(c, s));
  }

  TEST_CASE("cosine restarts damp the peak and double the cycle") {
    TrainConfig c;
    c.lr_peak = 1.0;
    c.lr_floor = 0.0;
    c.warmup_steps = 0;
    c.cycle_steps = 100;
    c.restart_damping = 2.0;
    c.total_steps = 1000;
    CHECK(learning_rate(c, 0) == doctest::Approx(1.0));
    CHECK(learning_rate(c, 100) == doctest::Approx(0.5));
    CHECK(learning_rate(c, 300) == doctest::Approx(0.25));
  }

  TEST_CASE("length batches cover every example once within budget") {
    Rng rng(1);
    const Vocabulary vocab(2);
    const auto examples = random_training_batch(vocab, 2, 40, rng);
    const auto batches = make_length_batches(examples, 300, rng);
    std::multiset<std::size_t> seen;
    for (const auto& b : batches) {
      std::size_t tokens = 0;
      for (std::size_t i : b) {
        seen.insert(i);
        tokens += examples[i].token_count();
      }
      CHECK((b.size() == 1 || tokens <= 300));
    }
    CHECK(seen.size() == examples.size());
    CHECK(std::set<std::size_t>(seen.begin(), seen.end()).size() == examples.size());
  }

  TEST_CASE("a few Adam steps lower the loss on a fixed batch") {
    Model model(tiny_model_config(2));
    TrainConfig c;
    c.lr_peak = 3e-3;
    c.warmup_steps = 1;
    c.total_steps = 40;
    Trainer t(model, c);
    Rng rng(3);
    const auto batch = random_training_batch(model.vocabulary(), 2, 4, rng);
    const double first = t.step(batch).loss;
    double last = first;
    for (int i = 0; i < 30; ++i) last = t.step(batch).loss;
    CHECK(last < 0.7 * first);
    CHECK(t.step_count() == 31);
  }

  TEST_CASE("run_training stops at the accuracy target") {
    Model model(tiny_model_config(4));
    TrainConfig c;
    c.lr_peak = 3e-3;
    c.warmup_steps = 5;
    c.total_steps = 2000;
    Trainer t(model, c);
    Rng rng(5);
    const auto examples = random_training_batch(model.vocabulary(), 2, 2, rng);
    TrainingRun run;
    run.steps = 2000;
    run.stop_accuracy = 0.9;
    run.eval_every = 10;
    const TrainingOutcome o = run_training(t, examples, run, rng);
    CHECK(o.reached_accuracy);
    CHECK(o.accuracy >= 0.9);
    CHECK(o.steps_run < 2000);
    CHECK(evaluate_examples(model, examples, 4000).correct >= 0.9 * evaluate_examples(model, examples, 4000).tokens);
  }

  TEST_CASE("config validation") {
    TrainConfig c;
    c.lr_floor = 1.0;
    c.lr_peak = 0.1;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  }
}
