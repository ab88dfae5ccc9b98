#include "odesr/inference.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>

#include <json.hpp>

#include "odesr/kernels.hpp"
#include "odesr/metrics.hpp"

namespace odesr {

RescaleTransform RescaleTransform::identity(int dimension) {
  RescaleTransform tf;
  tf.anchors.assign(static_cast<std::size_t>(dimension), 1.0);
  return tf;
}

RescaledTrajectory rescale(const Trajectory& traj) {
  if (traj.size() < 2) throw std::invalid_argument("rescaling needs at least two observations");
  RescaleTransform tf;
  const double t1 = traj.times.front(), tn = traj.times.back();
  if (!(tn > t1)) throw std::invalid_argument("observation times must increase");
  tf.a = 9.0 / (tn - t1);
  tf.b = 1.0 - tf.a * t1;
  const std::size_t d = traj.states.cols();
  for (std::size_t j = 0; j < d; ++j) {
    double anchor = traj.states(0, j);
    if (anchor == 0.0) {
      double mx = 0.0;
      for (std::size_t i = 0; i < traj.size(); ++i) mx = std::max(mx, std::fabs(traj.states(i, j)));
      anchor = mx > 0.0 ? mx : 1.0;
      tf.replaced_anchors.push_back(static_cast<int>(j));
    }
    tf.anchors.push_back(anchor);
  }
  RescaledTrajectory out{apply_transform(traj, tf), tf};
  return out;
}

Trajectory apply_transform(const Trajectory& traj, const RescaleTransform& tf) {
  if (tf.anchors.size() != traj.states.cols()) throw std::invalid_argument("transform dimension mismatch");
  Trajectory out;
  out.times.reserve(traj.size());
  for (double t : traj.times) out.times.push_back(tf.a * t + tf.b);
  out.states = traj.states;
  for (std::size_t i = 0; i < out.states.rows(); ++i)
    for (std::size_t j = 0; j < out.states.cols(); ++j) out.states(i, j) /= tf.anchors[j];
  return out;
}

OdeSystem unscale_system(const OdeSystem& scaled, const RescaleTransform& tf) {
  const auto d = static_cast<std::size_t>(scaled.dimension());
  if (tf.anchors.size() != d) throw std::invalid_argument("transform dimension mismatch");
  std::vector<Expression> repl;
  for (std::size_t j = 0; j < d; ++j) {
    Expression x = Expression::variable(static_cast<int>(j));
    repl.push_back(tf.anchors[j] == 1.0 ? x : x * Expression::constant(1.0 / tf.anchors[j]));
  }
  std::vector<Expression> comps;
  for (std::size_t i = 0; i < d; ++i) {
    Expression f = substitute_variables(scaled[i], repl);
    const double factor = tf.a * tf.anchors[i];
    comps.push_back(factor == 1.0 ? f : Expression::constant(factor) * f);
  }
  return OdeSystem(std::move(comps));
}

// ---------------------------------------------------------------------------
// Decoding

void DecodeConfig::validate() const {
  if (beam_size < 1) throw std::invalid_argument("beam_size must be >= 1");
  if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be > 0");
  if (max_length < 0) throw std::invalid_argument("max_length must be >= 0");
}

namespace {

// Expansions this far below the row's best log-probability are never kept:
// a Gumbel gap of 30 nats has probability about e^-30.
constexpr double prune_log_prob = -30.0;

struct Hypothesis {
  DecoderCache cache;
  TokenSequence tokens;
  double score = 0.0;
};

struct Expansion {
  double key;
  double score;
  std::size_t parent;
  int token;
};

}  // namespace

std::vector<Candidate> beam_sample(const Model& model, const TokenGrid& grid, const DecodeConfig& cfg, Rng& rng) {
  cfg.validate();
  const Vocabulary& vocab = model.vocabulary();
  const int max_len =
      cfg.max_length > 0 ? std::min(cfg.max_length, model.config().max_target_length) : model.config().max_target_length;
  const Matrix memory = encode(model, grid);
  DecoderSession session(model, memory);
  const auto beam = static_cast<std::size_t>(cfg.beam_size);
  const double inv_t = 1.0 / cfg.temperature;
  const double threshold = std::exp(prune_log_prob);

  std::vector<Hypothesis> live(1);
  live[0].cache = session.empty_cache();
  live[0].tokens = {Vocabulary::bos};
  std::vector<std::pair<TokenSequence, double>> finished;

  std::vector<Expansion> pool;
  while (!live.empty() && finished.size() < beam) {
    // Sequences that can no longer close within max_len are abandoned.
    std::erase_if(live, [&](const Hypothesis& h) { return static_cast<int>(h.tokens.size()) >= max_len; });
    if (live.empty()) break;
    std::vector<DecoderCache*> caches;
    std::vector<int> feed;
    for (Hypothesis& h : live) {
      caches.push_back(&h.cache);
      feed.push_back(h.tokens.back());
    }
    Matrix logits = session.step(caches, feed);
    const std::size_t v = logits.cols();
    pool.clear();
    for (std::size_t r = 0; r < live.size(); ++r) {
      double* z = logits.data() + r * v;
      for (std::size_t j = 0; j < v; ++j) z[j] *= inv_t;
      z[Vocabulary::pad] = -std::numeric_limits<double>::infinity();
      z[Vocabulary::bos] = -std::numeric_limits<double>::infinity();
      const double sum = kernels::exp_shifted_sum(z, v, kernels::max_value(z, v));
      const double log_sum = std::log(sum);
      for (std::size_t j = 0; j < v; ++j) {
        if (!(z[j] > threshold * sum)) continue;
        const double score = live[r].score + std::log(z[j]) - log_sum;
        pool.push_back({score + rng.gumbel(), score, r, static_cast<int>(j)});
      }
    }
    const std::size_t slots = std::min(beam - finished.size(), pool.size());
    std::partial_sort(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(slots), pool.end(),
                      [](const Expansion& a, const Expansion& b) {
                        if (a.key != b.key) return a.key > b.key;
                        if (a.parent != b.parent) return a.parent < b.parent;
                        return a.token < b.token;
                      });
    pool.resize(slots);
    std::vector<std::size_t> children(live.size(), 0);
    for (const Expansion& e : pool)
      if (e.token != Vocabulary::eos) ++children[e.parent];
    std::vector<Hypothesis> next;
    for (const Expansion& e : pool) {
      Hypothesis& parent = live[e.parent];
      TokenSequence tokens = parent.tokens;
      tokens.push_back(e.token);
      if (e.token == Vocabulary::eos) {
        finished.emplace_back(std::move(tokens), e.score);
        continue;
      }
      Hypothesis h;
      // The last child may take the parent's cache instead of copying it.
      h.cache = --children[e.parent] == 0 ? std::move(parent.cache) : parent.cache;
      h.tokens = std::move(tokens);
      h.score = e.score;
      next.push_back(std::move(h));
    }
    live = std::move(next);
  }

  std::vector<Candidate> out;
  std::map<TokenSequence, std::size_t> seen;
  for (auto& [tokens, score] : finished) {
    if (auto it = seen.find(tokens); it != seen.end()) {
      out[it->second].log_prob = std::max(out[it->second].log_prob, score);
      continue;
    }
    try {
      OdeSystem sys = decode_expression(tokens, vocab);
      seen.emplace(tokens, out.size());
      out.push_back({std::move(sys), tokens, score});
    } catch (const MalformedSequence&) {
    } catch (const std::invalid_argument&) {
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Scoring, selection, refinement

IntegrationConfig scoring_integration_config() {
  IntegrationConfig cfg;
  cfg.rtol = 1e-6;
  cfg.atol = 1e-9;
  cfg.wall_timeout_seconds = 0.25;
  cfg.max_steps = 50'000;
  return cfg;
}

double reconstruction_score(const OdeSystem& sys, const Trajectory& observed, const IntegrationConfig& cfg) {
  constexpr double fail = -std::numeric_limits<double>::infinity();
  if (sys.dimension() != observed.dimension()) return fail;
  const IntegrationResult res = integrate(sys, observed.states.row(0), observed.times, cfg);
  if (!res.ok()) return fail;
  const double r2 = r2_score(observed.states, res.trajectory.states);
  return is_valid_score(r2) ? r2 : fail;
}

Selection select_best(std::span<const OdeSystem> candidates, const Trajectory& observed,
                      const IntegrationConfig& cfg) {
  if (candidates.empty()) throw NoValidCandidate("no candidates to select from");
  Selection sel;
  sel.scores.resize(candidates.size());
#pragma omp parallel for schedule(dynamic) num_threads(kernels::max_threads())
  for (long long i = 0; i < static_cast<long long>(candidates.size()); ++i)
    sel.scores[static_cast<std::size_t>(i)] = reconstruction_score(candidates[static_cast<std::size_t>(i)], observed, cfg);
  sel.score = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < candidates.size(); ++i)
    if (sel.scores[i] > sel.score) {
      sel.score = sel.scores[i];
      sel.index = i;
    }
  if (!std::isfinite(sel.score)) throw NoValidCandidate("no candidate integrates over the observed span");
  return sel;
}

RefineConfig::RefineConfig() {
  integration.rtol = 1e-8;
  integration.atol = 1e-10;
  integration.wall_timeout_seconds = 1.0;
  integration.max_steps = 200'000;
}

double refinement_objective(const OdeSystem& sys, const Trajectory& observed, const IntegrationConfig& cfg) {
  const double r2 = reconstruction_score(sys, observed, cfg);
  return std::isfinite(r2) ? -r2 : std::numeric_limits<double>::infinity();
}

RefineResult refine_constants(const OdeSystem& sys, const Trajectory& observed, const RefineConfig& cfg) {
  RefineResult out{sys, 0.0, 0.0, 0};
  const std::vector<double> c0 = sys.constants();
  auto objective = [&](std::span<const double> c) {
    return refinement_objective(sys.with_constants(c), observed, cfg.integration);
  };
  if (c0.empty()) {
    out.objective_before = out.objective_after = objective(c0);
    out.evaluations = 1;
    return out;
  }
  const BfgsResult res = minimize_bfgs(objective, c0, cfg.bfgs);
  out.evaluations = res.evaluations;
  out.objective_before = objective(c0);
  out.objective_after = out.objective_before;
  if (res.value < out.objective_before) {
    out.system = sys.with_constants(res.x);
    out.objective_after = res.value;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Pipeline

Prediction predict(const Model& model, const Trajectory& observed, const InferenceConfig& cfg, Rng& rng) {
  const auto start = std::chrono::steady_clock::now();
  Prediction p;
  try {
    observed.validate();
    if (observed.dimension() > model.config().max_dimension)
      throw std::invalid_argument("trajectory dimension exceeds the model's D_max");
    RescaledTrajectory rs = cfg.rescale ? rescale(observed)
                                        : RescaledTrajectory{observed, RescaleTransform::identity(observed.dimension())};
    p.transform = rs.transform;
    const TokenGrid grid = encode_trajectory(rs.trajectory, model.vocabulary());
    std::vector<Candidate> decoded = beam_sample(model, grid, cfg.decode, rng);
    std::vector<OdeSystem> systems;
    for (Candidate& c : decoded) {
      if (c.system.dimension() != observed.dimension()) continue;
      OdeSystem sys = unscale_system(c.system, rs.transform);
      systems.push_back(sys);
      p.candidates.push_back({std::move(c.system), std::move(sys), c.log_prob, 0.0});
    }
    if (systems.empty()) throw NoValidCandidate("no decodable candidate of matching dimension");
    const Selection sel = select_best(systems, observed, cfg.scoring);
    for (std::size_t i = 0; i < p.candidates.size(); ++i) p.candidates[i].score = sel.scores[i];
    p.system = p.candidates[sel.index].system;
    p.score = sel.score;
    std::stable_sort(p.candidates.begin(), p.candidates.end(),
                     [](const ScoredCandidate& a, const ScoredCandidate& b) { return a.score > b.score; });
    if (cfg.refine) {
      RefineResult rr = refine_constants(p.system, observed, cfg.refinement);
      const double refined = reconstruction_score(rr.system, observed, cfg.scoring);
      // Kept only when it also scores at least as well under the scoring tolerances.
      if (refined >= p.score) {
        p.system = rr.system;
        p.score = refined;
      }
      p.refinement = std::move(rr);
    }
    p.valid = true;
  } catch (const std::exception& e) {
    p.valid = false;
    p.error = e.what();
  }
  p.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return p;
}

namespace {

nlohmann::json score_json(double v) {
  if (std::isfinite(v)) return v;
  return nullptr;
}

}  // namespace

std::string prediction_json(const Prediction& p) {
  nlohmann::json j;
  j["valid"] = p.valid;
  if (!p.valid) j["error"] = p.error;
  j["seconds"] = p.seconds;
  j["transform"] = {{"a", p.transform.a},
                    {"b", p.transform.b},
                    {"anchors", p.transform.anchors},
                    {"replaced_anchors", p.transform.replaced_anchors}};
  if (p.valid) {
    j["infix"] = to_infix(p.system);
    j["prefix"] = to_prefix_text(p.system);
    j["score"] = score_json(p.score);
  }
  if (p.refinement)
    j["refinement"] = {{"objective_before", score_json(p.refinement->objective_before)},
                       {"objective_after", score_json(p.refinement->objective_after)},
                       {"evaluations", p.refinement->evaluations}};
  nlohmann::json cands = nlohmann::json::array();
  for (const ScoredCandidate& c : p.candidates)
    cands.push_back({{"infix", to_infix(c.system)}, {"log_prob", c.log_prob}, {"score", score_json(c.score)}});
  j["candidates"] = std::move(cands);
  return j.dump();
}

}  // namespace odesr
