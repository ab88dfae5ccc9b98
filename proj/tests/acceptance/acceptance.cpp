// Acceptance suite. One line per criterion: "[PASS] #n name: details" or
// "[FAIL] ...". Oracles here are written independently of the library code
// they check (closed forms, direct formulas, finite differences).

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "odesr/checkpoint.hpp"
#include "odesr/corruption.hpp"
#include "odesr/dataset.hpp"
#include "odesr/evaluation.hpp"
#include "odesr/generator.hpp"
#include "odesr/gradcheck.hpp"
#include "odesr/inference.hpp"
#include "odesr/metrics.hpp"
#include "odesr/odebench.hpp"
#include "odesr/training.hpp"

namespace fs = std::filesystem;
using namespace odesr;

namespace {

struct Outcome {
  bool pass = false;
  std::string details;
};

class Stopwatch {
 public:
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count(); }

 private:
  std::chrono::steady_clock::time_point t0_ = std::chrono::steady_clock::now();
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

fs::path cache_dir;

// ---- statistics oracles ----

// Kolmogorov distribution tail, P(K > lambda).
double kolmogorov_q(double lambda) {
  if (lambda < 0.2) return 1.0;
  double sum = 0.0;
  for (int k = 1; k <= 100; ++k) sum += (k % 2 ? 2.0 : -2.0) * std::exp(-2.0 * k * k * lambda * lambda);
  return std::clamp(sum, 0.0, 1.0);
}

// One-sample KS test of `x` against Uniform(lo, hi); returns the p-value.
double ks_uniform_p(std::vector<double> x, double lo, double hi, double* stat = nullptr) {
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double f = std::clamp((x[i] - lo) / (hi - lo), 0.0, 1.0);
    d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
  }
  if (stat) *stat = d;
  const double sn = std::sqrt(n);
  return kolmogorov_q((sn + 0.12 + 0.11 / sn) * d);
}

// Chi-square survival function for 4 degrees of freedom.
double chi2_sf_4(double x) { return std::exp(-x / 2.0) * (1.0 + x / 2.0); }

// ---- 1 ----
Outcome tokenizer_roundtrip() {
  Stopwatch sw;
  Rng rng(101);
  double worst = 0.0;
  for (int i = 0; i < 100000; ++i) {
    const double v = (rng.uniform() < 0.5 ? -1.0 : 1.0) * std::pow(10.0, rng.uniform(-80.0, 80.0));
    worst = std::max(worst, std::abs(decode_float(encode_float(v)) - v) / std::abs(v));
  }
  const double secs = sw.seconds();
  // beyond the exponent range values clamp to the boundary triplets
  const bool clamps = encode_float(1e150).exponent == 100 && encode_float(-1e-150).exponent == -100 &&
                      encode_float(-1e-150).negative;
  const int numeric = Vocabulary::numeric_token_count;
  const Vocabulary vocab;
  int counted = 0;
  for (int id = 0; id < vocab.size(); ++id) counted += Vocabulary::is_numeric(id);
  const bool pass = worst <= 5e-4 && numeric == 10203 && counted == 10203 && clamps && secs < 2.0;
  return {pass, fmt("max rel err %.3e (<= 5e-4), numeric tokens %d, clamp %s, %.2f s (< 2 s)", worst, counted,
                    clamps ? "ok" : "wrong", secs)};
}

// ---- 2 ----
Outcome expression_roundtrip() {
  GeneratorConfig cfg;
  Rng rng(202);
  int failures = 0;
  for (int i = 0; i < 10000; ++i) {
    const int d = sample_dimension(cfg, rng);
    const Expression e = sample_component(cfg, d, rng);
    failures += !(parse_prefix(to_prefix(e)) == e);
  }
  const Expression x = Expression::variable(0);
  const std::size_t c1 = complexity(Expression::unary(UnaryOp::exp, Expression::unary(UnaryOp::tan, x)));
  const std::size_t c2 = complexity(Expression::constant(1.0) + Expression::constant(2.0) * x);
  return {failures == 0 && c1 == 3 && c2 == 5,
          fmt("%d/10000 round-trip failures, complexity(exp(tan(x)))=%zu, complexity(1+2x)=%zu", failures, c1, c2)};
}

// ---- 3 ----
Outcome integrator_oracle() {
  Stopwatch sw;
  const auto corpus = load_corpus();
  const IntegrationConfig cfg = corpus_integration_config();
  const auto times = linspace(1.0, 10.0, 500);

  // logistic growth, entry 3: x = K / (1 + (K/x0 - 1) exp(-r (t - t0)))
  const BenchmarkEntry& logistic = corpus[2];
  const double r = logistic.params[0], k = logistic.params[1];
  double logistic_err = 0.0;
  for (const auto& ic : logistic.initial_conditions) {
    const auto res = integrate(logistic.system, ic, times, cfg);
    if (!res.ok()) return {false, "entry 3 failed to integrate"};
    for (std::size_t i = 0; i < times.size(); ++i) {
      const double exact = k / (1.0 + (k / ic[0] - 1.0) * std::exp(-r * (times[i] - 1.0)));
      logistic_err = std::max(logistic_err, std::abs(res.trajectory.states(i, 0) - exact) / std::abs(exact));
    }
  }

  // undamped oscillator, entry 24: E = v^2/2 + w^2 x^2/2
  const BenchmarkEntry& osc = corpus[23];
  const double w2 = osc.params[0];
  double drift = 0.0;
  for (const auto& ic : osc.initial_conditions) {
    const auto res = integrate(osc.system, ic, times, cfg);
    if (!res.ok()) return {false, "entry 24 failed to integrate"};
    const auto energy = [&](std::size_t i) {
      const double x = res.trajectory.states(i, 0), v = res.trajectory.states(i, 1);
      return 0.5 * v * v + 0.5 * w2 * x * x;
    };
    for (std::size_t i = 0; i < times.size(); ++i) drift = std::max(drift, std::abs(energy(i) / energy(0) - 1.0));
  }

  // fixed-step order on the same oscillator against its closed form
  const double w = std::sqrt(w2);
  const std::vector<double> x0 = osc.initial_conditions[0];
  std::vector<double> log_h, log_e;
  for (std::size_t steps : {20, 40, 80, 160, 320}) {
    const auto x = integrate_fixed_step(osc.system, x0, 1.0, 10.0, steps);
    const double t = 9.0;
    const double xe = x0[0] * std::cos(w * t) + x0[1] / w * std::sin(w * t);
    const double ve = -x0[0] * w * std::sin(w * t) + x0[1] * std::cos(w * t);
    log_h.push_back(std::log(9.0 / static_cast<double>(steps)));
    log_e.push_back(std::log(std::hypot(x[0] - xe, x[1] - ve)));
  }
  const double mh = std::accumulate(log_h.begin(), log_h.end(), 0.0) / static_cast<double>(log_h.size());
  const double me = std::accumulate(log_e.begin(), log_e.end(), 0.0) / static_cast<double>(log_e.size());
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < log_h.size(); ++i) {
    sxy += (log_h[i] - mh) * (log_e[i] - me);
    sxx += (log_h[i] - mh) * (log_h[i] - mh);
  }
  const double slope = sxy / sxx;
  const double secs = sw.seconds();
  const bool pass = logistic_err < 1e-2 && drift < 0.01 && std::abs(slope - 5.0) <= 0.3 && secs < 10.0;
  return {pass, fmt("logistic max rel err %.2e (< 1e-2), energy drift %.2e (< 1e-2), order slope %.3f (5 +- 0.3), "
                    "%.2f s (< 10 s)",
                    logistic_err, drift, slope, secs)};
}

// ---- 4 ----
Outcome generator_statistics() {
  GeneratorConfig cfg;
  Rng rng(404);
  std::size_t adds = 0, binaries = 0;
  int deepest = 0;
  std::vector<double> log_mags;
  for (int i = 0; i < 100000; ++i) {
    ComponentTrace trace;
    sample_component(cfg, sample_dimension(cfg, rng), rng, &trace);
    for (BinaryOp op : trace.binary_ops) {
      ++binaries;
      adds += op == BinaryOp::add;
    }
    for (double c : trace.coefficients) log_mags.push_back(std::log(std::abs(c)));
    for (const auto& ins : trace.insertions) deepest = std::max(deepest, ins.subtree_depth);
  }
  const double add_freq = static_cast<double>(adds) / static_cast<double>(binaries);
  double ks = 0.0;
  const double ks_p = ks_uniform_p(log_mags, std::log(cfg.c_min), std::log(cfg.c_max), &ks);

  std::map<std::string, int> shapes;
  const int draws = 100000;
  Rng shape_rng(405);
  for (int i = 0; i < draws; ++i) ++shapes[sample_binary_skeleton(3, shape_rng).code()];
  double chi2 = 0.0;
  const double expected = draws / 5.0;
  for (const auto& [code, n] : shapes) chi2 += (n - expected) * (n - expected) / expected;
  const double chi_p = shapes.size() == 5 ? chi2_sf_4(chi2) : 0.0;

  const bool pass = std::abs(add_freq - 0.75) <= 0.01 && ks_p > 0.01 && chi_p > 0.01 && deepest < 6;
  return {pass, fmt("add freq %.4f (0.75 +- 0.01), constants KS D=%.2e p=%.3f over %zu (> 0.01), %zu shapes "
                    "chi2=%.2f p=%.3f (> 0.01), deepest unary site %d (< 6)",
                    add_freq, ks, ks_p, log_mags.size(), shapes.size(), chi2, chi_p, deepest)};
}

// ---- 5 ----
Outcome filters() {
  IntegrationConfig cfg;
  Rng rng(505);
  const double one[] = {1.0};
  const auto grow = integrate_on_grid(parse_infix_system("x0"), one, 100, cfg);
  int grow_kept = 0;
  if (grow.ok())
    for (int i = 0; i < 1000; ++i) grow_kept += passes_filters(grow.trajectory, cfg, rng).keep;
  else
    grow_kept = -1;  // failing to integrate is a discard too, but the filter is what we check here
  const auto decay = integrate_on_grid(parse_infix_system("-2 * x0"), one, 100, cfg);
  if (!decay.ok()) return {false, "converging system failed to integrate"};
  const int trials = 100000;
  int discarded = 0;
  for (int i = 0; i < trials; ++i) discarded += !passes_filters(decay.trajectory, cfg, rng).keep;
  const double rate = static_cast<double>(discarded) / trials;
  return {grow_kept == 0 && std::abs(rate - 0.9) <= 0.01,
          fmt("x'=x kept %d/1000 times (0), converging discard rate %.4f (0.90 +- 0.01)", grow_kept, rate)};
}

// ---- 6 ----
Outcome corruption() {
  Rng rng(606);
  Trajectory t;
  t.times = linspace(1.0, 10.0, 250000);
  for (std::size_t i = 0; i < t.times.size(); ++i) {
    const double row[] = {1.0 + t.times[i], -2.0, std::sin(t.times[i]) + 3.0, 1e-3 * t.times[i]};
    t.states.append_row(row);
  }
  const double sigma = 0.05;
  const Trajectory n = add_noise(t, sigma, rng);
  double ss = 0.0, mean = 0.0;
  const auto& a = t.states.storage();
  const auto& b = n.states.storage();
  for (std::size_t i = 0; i < a.size(); ++i) mean += (b[i] / a[i] - 1.0) / static_cast<double>(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) ss += std::pow(b[i] / a[i] - 1.0 - mean, 2);
  const double sd = std::sqrt(ss / static_cast<double>(a.size() - 1));

  bool counts_ok = true;
  for (std::size_t npts : {50, 51, 137, 200})
    for (double rho : {0.05, 0.3, 0.5, 0.77}) {
      Trajectory s;
      s.times = linspace(1.0, 10.0, npts);
      s.states = Matrix(npts, 1);
      for (std::size_t i = 0; i < npts; ++i) s.states(i, 0) = static_cast<double>(i);
      const Trajectory sub = subsample(s, rho, rng);
      counts_ok = counts_ok && sub.size() == static_cast<std::size_t>(std::llround((1.0 - rho) * npts)) &&
                  sub.times.front() == s.times.front() && sub.states(0, 0) == 0.0;
    }
  const Trajectory id_noise = add_noise(t, 0.0, rng);
  const Trajectory id_sub = subsample(t, 0.0, rng);
  const bool identities = id_noise.states == t.states && id_sub.states == t.states && id_sub.times == t.times;
  const double rel = std::abs(sd - sigma) / sigma;
  return {rel <= 0.02 && counts_ok && identities,
          fmt("residual std %.5f vs sigma %.2f (rel %.3f <= 0.02) over 1e6 samples, subsample counts %s, identities %s",
              sd, sigma, rel, counts_ok ? "exact" : "wrong", identities ? "ok" : "broken")};
}

// ---- 7 ----
Outcome model_gradients() {
  const Model model(tiny_model_config(707));
  Rng rng(708);
  const auto batch = random_training_batch(model.vocabulary(), 2, 3, rng);
  ModelParams grads = model.params().zeros_like();
  batch_loss(model, batch, &grads);
  std::vector<const Matrix*> g;
  grads.visit([&](const std::string&, const Matrix& m) { g.push_back(&m); });

  Model probe = model;
  const double h = 1e-5;
  double worst = 0.0;
  std::string worst_block;
  std::size_t checked = 0, zero_pairs = 0, block = 0;
  probe.params().visit([&](const std::string& name, Matrix& w) {
    const Matrix& gm = *g[block++];
    std::vector<std::size_t> order(w.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return std::abs(gm.data()[a]) > std::abs(gm.data()[b]); });
    std::vector<std::size_t> picks(order.begin(), order.begin() + std::min<std::size_t>(3, order.size()));
    for (int k = 0; k < 3 && order.size() > 3; ++k) {
      const std::size_t j = order[static_cast<std::size_t>(rng.uniform_int(3, static_cast<std::int64_t>(order.size()) - 1))];
      if (std::abs(gm.data()[j]) > 1e-6) picks.push_back(j);
    }
    for (std::size_t j : picks) {
      const double a = gm.data()[j];
      if (a == 0.0) continue;
      const double saved = w.data()[j];
      w.data()[j] = saved + h;
      const double up = batch_loss(probe, batch, nullptr).loss;
      w.data()[j] = saved - h;
      const double down = batch_loss(probe, batch, nullptr).loss;
      w.data()[j] = saved;
      const double numeric = (up - down) / (2.0 * h);
      ++checked;
      // key biases have an exactly zero gradient (softmax ignores per-query
      // shifts); both sides then sit at roundoff level
      if (std::max(std::abs(a), std::abs(numeric)) < 1e-9) {
        ++zero_pairs;
        continue;
      }
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-6});
      if (rel > worst) {
        worst = rel;
        worst_block = name;
      }
    }
  });

  // PAD inertness: slots past 3 (D + 1) of each point never reach the embedding
  const int dmax = model.config().max_dimension;
  const std::size_t width = 3 * static_cast<std::size_t>(dmax + 1);
  const TokenGrid& grid = batch[0].grid;
  std::vector<int> tokens = padded_point_tokens(grid, dmax);
  const Matrix e1 = embed_points(model, tokens, grid.points, grid.dimension);
  for (std::size_t i = 0; i < grid.points; ++i)
    for (std::size_t k = grid.point_width(); k < width; ++k)
      tokens[i * width + k] = Vocabulary::mantissa_id(static_cast<int>((i * 31 + k) % 10000));
  const bool pad_inert = embed_points(model, tokens, grid.points, grid.dimension) == e1;

  // encoder permutation equivariance: memory rows follow the point order
  TokenGrid reversed = grid;
  for (std::size_t i = 0; i < grid.points; ++i)
    std::copy(grid.point(grid.points - 1 - i), grid.point(grid.points - 1 - i) + grid.point_width(),
              reversed.tokens.begin() + i * grid.point_width());
  const Matrix m1 = encode(model, grid), m2 = encode(model, reversed);
  // attention sums over keys, so reordering the points reorders floating-point
  // additions; agreement is to roundoff, not bitwise
  double perm_diff = 0.0;
  for (std::size_t i = 0; i < grid.points; ++i)
    for (std::size_t c = 0; c < m1.cols(); ++c)
      perm_diff = std::max(perm_diff, std::abs(m2(i, c) - m1(grid.points - 1 - i, c)));
  const bool equivariant = perm_diff < 1e-12;

  return {worst < 1e-4 && checked > 50 && pad_inert && equivariant,
          fmt("max rel err %.2e over %zu entries (< 1e-4, worst in %s; %zu zero-gradient pairs), PAD inert %s "
              "(bitwise), permutation-equivariant %s (max diff %.1e < 1e-12)",
              worst, checked, worst_block.c_str(), zero_pairs, pad_inert ? "yes" : "NO", equivariant ? "yes" : "NO",
              perm_diff)};
}

// ---- 8 ----
Outcome overfit() {
  Stopwatch sw;
  DatasetConfig dc;
  dc.generator.max_dimension = 2;
  dc.seed = 7;
  const auto records = generate_dataset(32, dc);
  const ModelConfig mc;  // desk defaults: d 64, 4 heads, 2 encoder / 4 decoder layers
  Model model(mc);
  std::vector<TrainingExample> examples;
  for (const auto& r : records) examples.push_back(to_training_example(r, model.vocabulary()));
  TrainConfig tc;
  tc.lr_peak = 1e-3;
  tc.warmup_steps = 100;
  tc.total_steps = 2000;
  tc.tokens_per_batch = 4000;
  Trainer trainer(model, tc);
  Rng rng(1);
  TrainingRun run;
  run.steps = 2000;
  run.stop_accuracy = 0.99;
  run.eval_every = 25;
  const TrainingOutcome o = run_training(trainer, examples, run, rng);
  const double secs = sw.seconds();
  const LossStats final_stats = evaluate_examples(model, examples, 4000);
  const double acc = static_cast<double>(final_stats.correct) / static_cast<double>(final_stats.tokens);

  // trend: medians of consecutive 50-step loss windows go down
  std::vector<double> medians;
  for (std::size_t s = 0; s + 50 <= o.losses.size(); s += 50) {
    std::vector<double> w(o.losses.begin() + static_cast<std::ptrdiff_t>(s),
                          o.losses.begin() + static_cast<std::ptrdiff_t>(s + 50));
    std::nth_element(w.begin(), w.begin() + 25, w.end());
    medians.push_back(w[25]);
  }
  const bool trend = medians.size() >= 2 && std::is_sorted(medians.rbegin(), medians.rend());

  // a memorized target shows up among the beam candidates at temperature 0.1
  const Checkpoint ck = make_checkpoint(model, tc, trainer.step_count());
  save_checkpoint((cache_dir / "overfit.ckpt").string(), ck);
  DecodeConfig dec;
  Rng brng(2);
  const auto cands = beam_sample(model, examples[0].grid, dec, brng);
  const bool memorized = std::any_of(cands.begin(), cands.end(),
                                     [&](const Candidate& c) { return c.tokens == examples[0].target; });

  return {acc >= 0.99 && o.steps_run <= 2000 && secs < 600.0 && memorized,
          fmt("token accuracy %.4f (>= 0.99) after %zu steps (<= 2000), %.0f s (< 600 s), loss window medians "
              "%s, memorized target among %zu candidates: %s",
              acc, o.steps_run, secs, trend ? "decreasing" : "not monotone", cands.size(), memorized ? "yes" : "no")};
}

// ---- scaled end-to-end experiment shared by 9 and 14 ----

struct ScaledRecipe {
  std::size_t records = 50000;
  std::uint64_t data_seed = 11;
  std::uint64_t heldout_seed = 999;
  double lr = 5e-4;
  std::size_t warmup = 500;
  double train_seconds = 1800.0;
  std::size_t heldout = 200;

  DatasetConfig dataset(std::uint64_t seed) const {
    DatasetConfig dc;
    dc.generator.max_dimension = 1;
    dc.generator.max_binary = 2;
    dc.generator.max_unary = 1;
    dc.seed = seed;
    return dc;
  }
  std::string key() const {
    return fmt("v2 records=%zu seed=%llu lr=%g warmup=%zu seconds=%g", records, (unsigned long long)data_seed, lr,
               warmup, train_seconds);
  }
};

struct ScaledModel {
  Model model;
  double train_seconds = 0.0;
  std::size_t steps = 0;
  bool cached = false;
};

ScaledModel scaled_model(const ScaledRecipe& recipe) {
  const fs::path ckpt = cache_dir / "scaled.ckpt";
  const fs::path key = cache_dir / "scaled.key";
  if (fs::exists(ckpt) && fs::exists(key)) {
    std::ifstream in(key);
    std::string stored, secs;
    std::getline(in, stored);
    std::getline(in, secs);
    if (stored == recipe.key()) {
      const Checkpoint c = load_checkpoint(ckpt.string());
      return {model_from_checkpoint(c), std::stod(secs), c.step, true};
    }
  }
  const auto records = generate_dataset(recipe.records, recipe.dataset(recipe.data_seed));
  ModelConfig mc;
  mc.max_dimension = 1;
  mc.seed = 5;
  Model model(mc);
  std::vector<TrainingExample> examples;
  for (const auto& r : records) {
    TrainingExample ex = to_training_example(r, model.vocabulary());
    if (ex.target.size() <= static_cast<std::size_t>(mc.max_target_length) + 1) examples.push_back(std::move(ex));
  }
  TrainConfig tc;
  tc.lr_peak = recipe.lr;
  tc.warmup_steps = recipe.warmup;
  tc.total_steps = static_cast<std::size_t>(recipe.train_seconds / 0.2);
  tc.seed = 3;
  Trainer trainer(model, tc);
  TrainingRun run;
  run.steps = 10'000'000;
  run.time_limit_seconds = recipe.train_seconds;
  run.on_step = [](std::size_t step, double, const LossStats& s) {
    if (step % 1000 == 0) std::fprintf(stderr, "  scaled model step %zu loss %.4f\n", step, s.loss);
  };
  Rng rng(9);
  const TrainingOutcome o = run_training(trainer, examples, run, rng);
  save_checkpoint(ckpt.string(), make_checkpoint(model, tc, trainer.step_count()));
  std::ofstream(key) << recipe.key() << '\n' << o.seconds << '\n';
  return {std::move(model), o.seconds, trainer.step_count(), false};
}

struct HeldOutCase {
  OdeSystem truth;
  Trajectory observed;
  std::vector<double> new_ic;
};

std::vector<HeldOutCase> heldout_set(const ScaledRecipe& recipe) {
  DatasetConfig dc = recipe.dataset(recipe.heldout_seed);
  dc.corruption.sigma_max = 0.0;
  dc.corruption.rho_max = 0.0;
  // spare records: a truth that integrates on the generator's grid can still
  // fail on the dense evaluation grid, and those cannot be scored
  const auto records = generate_dataset(recipe.heldout + recipe.heldout / 4, dc);
  const EvaluationGrid grid;
  std::vector<HeldOutCase> out;
  Rng rng(77);
  for (const auto& r : records) {
    if (out.size() == recipe.heldout) break;
    const double x0[] = {r.trajectory.states(0, 0)};
    if (!integrate_on_grid(r.system(), x0, grid.dense_points, grid.integration).ok()) continue;
    HeldOutCase c{r.system(), r.trajectory, {}};
    for (int k = 0; k < 100 && c.new_ic.empty(); ++k) {
      auto ic = sample_initial_condition(1, 1.0, rng);
      if (integrate_on_grid(c.truth, ic, grid.dense_points, grid.integration).ok()) c.new_ic = ic;
    }
    out.push_back(std::move(c));
  }
  return out;
}

struct HeldOutScores {
  std::vector<EvaluationResult> reconstruction, generalization;
  double seconds = 0.0;
};

HeldOutScores score_heldout(const Model& model, const std::vector<HeldOutCase>& cases, int beam, bool refine) {
  Stopwatch sw;
  InferenceConfig cfg;
  cfg.decode.beam_size = beam;
  cfg.refine = refine;
  const EvaluationGrid grid;
  HeldOutScores s;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    Rng rng = Rng::for_stream(4242, i);
    const Prediction p = predict(model, cases[i].observed, cfg, rng);
    std::optional<OdeSystem> sys;
    if (p.valid) sys = p.system;
    const double ic[] = {cases[i].observed.states(0, 0)};
    s.reconstruction.push_back(reconstruction_eval(sys, cases[i].truth, ic, grid));
    if (!cases[i].new_ic.empty())
      s.generalization.push_back(generalization_eval(sys, cases[i].truth, cases[i].new_ic, grid));
  }
  s.seconds = sw.seconds();
  return s;
}

// R^2 clipped to [0, 1] with invalid predictions counted as 0, so a single
// exploding candidate cannot dominate the mean.
double mean_clipped_r2(const std::vector<EvaluationResult>& rows) {
  double sum = 0.0;
  for (const auto& r : rows) sum += r.valid() ? std::clamp(r.r2, 0.0, 1.0) : 0.0;
  return rows.empty() ? 0.0 : sum / static_cast<double>(rows.size());
}

// ---- 9 ----
Outcome end_to_end() {
  const ScaledRecipe recipe;
  const ScaledModel sm = scaled_model(recipe);
  const auto cases = heldout_set(recipe);
  const HeldOutScores s = score_heldout(sm.model, cases, 50, true);
  const double rec = accuracy_at_threshold(s.reconstruction);
  const double gen = s.generalization.empty() ? 0.0 : accuracy_at_threshold(s.generalization);
  return {rec >= 0.5 && sm.train_seconds <= 1800.0 + 60.0 && cases.size() == 200,
          fmt("reconstruction accuracy %.3f (>= 0.5) on %zu held-out 1D systems, generalization accuracy %.3f "
              "(reported), BFGS refinement on, trained %zu steps in %.0f s (limit 1800 s, +60 s for the final step and checkpoint)%s, inference %.0f s",
              rec, cases.size(), gen, sm.steps, sm.train_seconds, sm.cached ? " [cached]" : "", s.seconds)};
}

// ---- 10 ----
Outcome rescaling() {
  Rng rng(1010);
  double worst_coef = 0.0, worst_time = 0.0;
  for (int i = 0; i < 100; ++i) {
    const double lambda = rng.uniform(-1.0, 1.0);
    const double t0 = rng.uniform(-5.0, 5.0);
    const double span = std::pow(10.0, rng.uniform(-1.0, 2.0));
    const double x0 = (rng.uniform() < 0.5 ? -1.0 : 1.0) * std::pow(10.0, rng.uniform(-3.0, 3.0));
    Trajectory obs;
    obs.times = linspace(t0, t0 + span, 64);
    for (double t : obs.times) {
      const double row[] = {x0 * std::exp(lambda * (t - t0))};
      obs.states.append_row(row);
    }
    const RescaledTrajectory r = rescale(obs);
    worst_time = std::max({worst_time, std::abs(r.trajectory.times.front() - 1.0),
                           std::abs(r.trajectory.times.back() - 10.0)});
    // what an ideal model would read off the rescaled data: x~ = exp(k (t~ - 1))
    const std::size_t last = obs.size() - 1;
    const double k = std::log(r.trajectory.states(last, 0) / r.trajectory.states(0, 0)) /
                     (r.trajectory.times[last] - r.trajectory.times[0]);
    const OdeSystem scaled({Expression::constant(k) * Expression::variable(0)});
    const OdeSystem back = unscale_system(scaled, r.transform);
    for (double x : {-2.0, 0.5, 3.0}) {
      const double in[] = {x};
      double out[1];
      back.evaluate(in, out);
      worst_coef = std::max(worst_coef, std::abs(out[0] - lambda * x) / std::max(std::abs(lambda * x), 1e-3));
    }
  }
  return {worst_coef <= 1e-9 && worst_time <= 1e-12,
          fmt("max rel error of recovered f %.2e (<= 1e-9), max time-endpoint error %.2e (<= 1e-12) over 100 triples",
              worst_coef, worst_time)};
}

// ---- 11 ----
Outcome odebench_integrity() {
  std::vector<BenchmarkEntry> entries;
  try {
    entries = load_corpus();
  } catch (const std::exception& e) {
    return {false, e.what()};
  }
  std::map<int, int> dims;
  int chaotic = 0, failed = 0;
  const IntegrationConfig cfg = corpus_integration_config();
  for (const auto& e : entries) {
    ++dims[e.dimension];
    chaotic += e.chaotic;
    for (const auto& ic : e.initial_conditions) failed += !integrate_on_grid(e.system, ic, 150, cfg).ok();
  }
  const bool pass = entries.size() == 63 && dims[1] == 23 && dims[2] == 28 && dims[3] == 10 && dims[4] == 2 &&
                    chaotic == 4 && failed == 0;
  return {pass, fmt("%zu entries, dimensions %d/%d/%d/%d, %d chaotic, %d of %zu initial conditions failed",
                    entries.size(), dims[1], dims[2], dims[3], dims[4], chaotic, failed, 2 * entries.size())};
}

// ---- 12 ----
Outcome refinement() {
  Trajectory obs;
  obs.times = linspace(1.0, 10.0, 100);
  for (double t : obs.times) {
    const double row[] = {0.01 * std::exp(2.0 * (t - 1.0))};
    obs.states.append_row(row);
  }
  const RefineResult r = refine_constants(parse_infix_system("1.8 * x0"), obs);
  const double c = r.system.constants().at(0);

  // corpus sweep: perturbed ground truth as the starting guess
  const auto entries = load_corpus();
  Rng rng(1212);
  int increased = 0, improved = 0;
  for (const auto& e : entries) {
    const auto res = integrate_on_grid(e.system, e.initial_conditions[0], 150, corpus_integration_config());
    if (!res.ok()) continue;
    auto consts = e.system.constants();
    for (double& v : consts) v *= 1.0 + 0.1 * rng.normal();
    const OdeSystem guess = e.system.with_constants(consts);
    RefineConfig cfg;
    cfg.bfgs.max_evaluations = 200;
    const RefineResult rr = refine_constants(guess, res.trajectory, cfg);
    const double after = refinement_objective(rr.system, res.trajectory, cfg.integration);
    const double before = refinement_objective(guess, res.trajectory, cfg.integration);
    increased += after > before;
    improved += after < before;
  }
  return {std::abs(c - 2.0) <= 0.01 && increased == 0,
          fmt("refined c = %.5f (2 +- 0.01) from 1.8; corpus sweep: objective increased on %d of %zu entries, "
              "improved on %d",
              c, increased, entries.size(), improved)};
}

// ---- 13 ----
Outcome metrics() {
  Rng rng(1313);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = static_cast<std::size_t>(rng.uniform_int(2, 300));
    const std::size_t d = static_cast<std::size_t>(rng.uniform_int(1, 4));
    Matrix y(n, d), p(n, d);
    for (std::size_t j = 0; j < d; ++j) {
      const double scale = std::pow(10.0, rng.uniform(-3, 3));
      for (std::size_t i = 0; i < n; ++i) {
        y(i, j) = scale * rng.normal();
        p(i, j) = y(i, j) + scale * rng.uniform(0, 2) * rng.normal();
      }
    }
    // direct formula: per-dimension R^2 weighted by the variance of y_true
    double num = 0.0, den = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      double mean = 0.0;
      for (std::size_t i = 0; i < n; ++i) mean += y(i, j);
      mean /= static_cast<double>(n);
      double res = 0.0, tot = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        res += (y(i, j) - p(i, j)) * (y(i, j) - p(i, j));
        tot += (y(i, j) - mean) * (y(i, j) - mean);
      }
      const double var = tot / static_cast<double>(n);
      num += var * (1.0 - res / tot);
      den += var;
    }
    const double oracle = num / den;
    worst = std::max(worst, std::abs(r2_score(y, p) - oracle) / std::max(1.0, std::abs(oracle)));
  }
  int monotone_violations = 0;
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<EvaluationResult> rows(static_cast<std::size_t>(rng.uniform_int(1, 100)));
    for (auto& r : rows)
      if (rng.uniform() > 0.1) r.r2 = 1.0 - std::pow(10.0, rng.uniform(-6, 1));
    double prev = 2.0;
    for (double th = -1.0; th <= 1.0; th += 0.01) {
      const double acc = accuracy_at_threshold(rows, th);
      monotone_violations += acc > prev;
      prev = acc;
    }
  }
  return {worst <= 1e-12 && monotone_violations == 0,
          fmt("max |r2_score - oracle| %.2e (<= 1e-12) over 200 random matrices, %d monotonicity violations",
              worst, monotone_violations)};
}

// ---- 14 ----
Outcome beam_study() {
  const ScaledRecipe recipe;
  const ScaledModel sm = scaled_model(recipe);
  const auto cases = heldout_set(recipe);
  std::string details;
  double prev = -1.0;
  bool nondecreasing = true;
  for (int beam : {1, 5, 25}) {
    const HeldOutScores s = score_heldout(sm.model, cases, beam, false);
    const double rec = mean_clipped_r2(s.reconstruction), gen = mean_clipped_r2(s.generalization);
    nondecreasing = nondecreasing && rec >= prev;
    prev = rec;
    details += fmt("beam %d: recon %.4f gen %.4f (acc %.3f/%.3f); ", beam, rec, gen,
                   accuracy_at_threshold(s.reconstruction),
                   s.generalization.empty() ? 0.0 : accuracy_at_threshold(s.generalization));
  }
  return {nondecreasing, details + (nondecreasing ? "mean reconstruction R^2 nondecreasing" : "NOT nondecreasing")};
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> run;
};

const std::vector<Criterion>& criteria() {
  static const std::vector<Criterion> all = {
      {1, "tokenizer round-trip", tokenizer_roundtrip},
      {2, "expression round-trip", expression_roundtrip},
      {3, "integrator oracle", integrator_oracle},
      {4, "generator statistics", generator_statistics},
      {5, "filters", filters},
      {6, "corruption", corruption},
      {7, "model gradients", model_gradients},
      {8, "overfit", overfit},
      {9, "end-to-end scaled experiment", end_to_end},
      {10, "rescaling algebra", rescaling},
      {11, "ODEBench integrity", odebench_integrity},
      {12, "constant refinement", refinement},
      {13, "metrics", metrics},
      {14, "beam-size study", beam_study},
  };
  return all;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::vector<int> only;
  std::string cache = "acceptance_cache";
  app.add_option("--only", only, "criterion numbers to run (default: all)");
  app.add_option("--cache", cache, "directory for trained checkpoints");
  CLI11_PARSE(app, argc, argv);
  cache_dir = cache;
  fs::create_directories(cache_dir);

  int failed = 0;
  for (const auto& c : criteria()) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("[%s] #%d %s: %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.details.c_str());
    std::fflush(stdout);
  }
  return failed ? 1 : 0;
}
