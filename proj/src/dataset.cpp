#include "odesr/dataset.hpp"

#include <fstream>
#include <istream>
#include <ostream>

#include <json.hpp>


namespace odesr {

void CorruptionRanges::validate() const {
  if (!(sigma_max >= 0.0)) throw std::invalid_argument("sigma_max must be >= 0");
  if (!(rho_max >= 0.0 && rho_max < 1.0)) throw std::invalid_argument("rho_max must be in [0, 1)");
}

DatasetConfig::DatasetConfig() {
  // A step cap keeps accept/reject decisions independent of machine speed in
  // all but pathological cases; the wall clock remains a backstop.
  integration.max_steps = 20'000;
}

void DatasetConfig::validate() const {
  generator.validate();
  integration.validate();
  corruption.validate();
  if (workers < 1) throw std::invalid_argument("workers must be >= 1");
  if (!(min_acceptance >= 0.0 && min_acceptance <= 1.0)) throw std::invalid_argument("min_acceptance out of range");
}

OdeSystem DatasetRecord::system() const { return parse_prefix_text(prefix); }

std::optional<DatasetRecord> generate_attempt(const DatasetConfig& cfg, std::uint64_t attempt,
                                              GenerationStats& stats) {
  ++stats.attempts;
  const std::uint64_t seed = derive_seed(cfg.seed, attempt);
  Rng rng(seed);
  const OdeSystem sys = sample_system(cfg.generator, rng);
  const std::vector<double> x0 = sample_initial_condition(sys.dimension(), cfg.integration.ic_scale, rng);
  const auto n = static_cast<std::size_t>(rng.uniform_int(cfg.integration.min_points, cfg.integration.max_points));
  const IntegrationResult res = integrate_on_grid(sys, x0, n, cfg.integration);
  if (!res.ok()) {
    ++stats.integration_failed;
    return std::nullopt;
  }
  const FilterDecision f = passes_filters(res.trajectory, cfg.integration, rng);
  if (!f.keep) {
    if (f.reason == FilterReason::divergent)
      ++stats.divergent;
    else
      ++stats.converged;
    return std::nullopt;
  }
  DatasetRecord r;
  r.attempt = attempt;
  r.seed = seed;
  r.prefix = to_prefix_text(sys);
  r.infix = to_infix(sys);
  r.sigma = rng.uniform(0.0, cfg.corruption.sigma_max);
  r.rho = rng.uniform(0.0, cfg.corruption.rho_max);
  r.clean = r.sigma == 0.0 && r.rho == 0.0;
  r.trajectory = corrupt(res.trajectory, {r.sigma, r.rho}, rng);
  ++stats.accepted;
  return r;
}

std::vector<DatasetRecord> generate_dataset(std::size_t count, const DatasetConfig& cfg, GenerationStats* stats) {
  cfg.validate();
  GenerationStats total;
  std::vector<DatasetRecord> out;
  const auto workers = static_cast<std::size_t>(cfg.workers);
  const std::size_t chunk = workers == 1 ? 1 : 16 * workers;
  std::uint64_t next = 0;
  while (out.size() < count) {
    std::vector<std::optional<DatasetRecord>> slot(chunk);
    std::vector<GenerationStats> part(chunk);
#pragma omp parallel for schedule(dynamic) num_threads(cfg.workers) if (workers > 1)
    for (long long i = 0; i < static_cast<long long>(chunk); ++i) {
      const auto k = static_cast<std::size_t>(i);
      slot[k] = generate_attempt(cfg, next + k, part[k]);
    }
    // Consume in attempt order and stop at the attempt that completes the
    // count, so the statistics match a serial run.
    for (std::size_t k = 0; k < chunk && out.size() < count; ++k) {
      total.attempts += part[k].attempts;
      total.accepted += part[k].accepted;
      total.integration_failed += part[k].integration_failed;
      total.divergent += part[k].divergent;
      total.converged += part[k].converged;
      if (slot[k]) {
        slot[k]->index = out.size();
        out.push_back(std::move(*slot[k]));
      }
      if (total.attempts >= cfg.guard_attempts && total.acceptance_rate() < cfg.min_acceptance)
        throw ThroughputError("acceptance rate " + std::to_string(total.acceptance_rate()) + " after " +
                              std::to_string(total.attempts) + " attempts is below the guard");
    }
    next += chunk;
  }
  if (stats) *stats = total;
  return out;
}

// ---------------------------------------------------------------------------
// Serialization

std::string record_json(const DatasetRecord& r) {
  auto str = [](const std::string& s) { return nlohmann::json(s).dump(); };
  std::string out = "{\"index\":" + std::to_string(r.index) + ",\"attempt\":" + std::to_string(r.attempt) +
                    ",\"seed\":" + std::to_string(r.seed) + ",\"dimension\":" + std::to_string(r.dimension()) +
                    ",\"points\":" + std::to_string(r.points()) + ",\"prefix\":" + str(r.prefix) +
                    ",\"infix\":" + str(r.infix) + ",\"sigma\":" + format_double(r.sigma) +
                    ",\"rho\":" + format_double(r.rho) + ",\"clean\":" + (r.clean ? "true" : "false") +
                    ",\"times\":[";
  for (std::size_t i = 0; i < r.trajectory.times.size(); ++i) {
    if (i) out += ',';
    out += format_double(r.trajectory.times[i]);
  }
  out += "],\"states\":[";
  for (std::size_t i = 0; i < r.trajectory.states.rows(); ++i) {
    if (i) out += ',';
    out += '[';
    for (std::size_t j = 0; j < r.trajectory.states.cols(); ++j) {
      if (j) out += ',';
      out += format_double(r.trajectory.states(i, j));
    }
    out += ']';
  }
  out += "]}";
  return out;
}

DatasetRecord parse_record_json(std::string_view line, std::size_t lineno) {
  try {
    const nlohmann::json j = nlohmann::json::parse(line);
    DatasetRecord r;
    r.index = j.at("index").get<std::size_t>();
    r.attempt = j.at("attempt").get<std::uint64_t>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.prefix = j.at("prefix").get<std::string>();
    r.infix = j.at("infix").get<std::string>();
    r.sigma = j.at("sigma").get<double>();
    r.rho = j.at("rho").get<double>();
    r.clean = j.at("clean").get<bool>();
    r.trajectory.times = j.at("times").get<std::vector<double>>();
    const auto d = j.at("dimension").get<std::size_t>();
    const auto& states = j.at("states");
    r.trajectory.states.resize(0, 0);
    for (const auto& row : states) {
      const std::vector<double> v = row.get<std::vector<double>>();
      if (v.size() != d) throw std::invalid_argument("state row width differs from dimension");
      r.trajectory.states.append_row(v);
    }
    if (j.at("points").get<std::size_t>() != r.trajectory.size())
      throw std::invalid_argument("points field disagrees with the data");
    r.trajectory.validate();
    if (r.system().dimension() != static_cast<int>(d)) throw std::invalid_argument("system dimension mismatch");
    return r;
  } catch (const MalformedRecord&) {
    throw;
  } catch (const std::exception& e) {
    throw MalformedRecord(lineno, e.what());
  }
}

void write_records(std::ostream& out, std::span<const DatasetRecord> records) {
  for (const DatasetRecord& r : records) out << record_json(r) << '\n';
}

std::vector<DatasetRecord> read_records(std::istream& in) {
  std::vector<DatasetRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    out.push_back(parse_record_json(line, lineno));
  }
  return out;
}

void write_records(const std::filesystem::path& path, std::span<const DatasetRecord> records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_records(out, records);
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::vector<DatasetRecord> read_records(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return read_records(in);
}

std::string manifest_json(const DatasetConfig& cfg, std::size_t count, const GenerationStats& stats) {
  nlohmann::json unary = nlohmann::json::array();
  for (UnaryOp op : cfg.generator.unary_pool) unary.push_back(std::string(name(op)));
  nlohmann::json j;
  j["count"] = count;
  j["seed"] = cfg.seed;
  j["workers"] = cfg.workers;
  j["generator"] = {{"max_dimension", cfg.generator.max_dimension}, {"max_binary", cfg.generator.max_binary},
                    {"max_unary", cfg.generator.max_unary},         {"c_min", cfg.generator.c_min},
                    {"c_max", cfg.generator.c_max},                 {"p_add", cfg.generator.p_add},
                    {"unary_pool", unary}};
  j["integration"] = {{"rtol", cfg.integration.rtol},
                      {"atol", cfg.integration.atol},
                      {"t_start", cfg.integration.t_start},
                      {"t_end", cfg.integration.t_end},
                      {"min_points", cfg.integration.min_points},
                      {"max_points", cfg.integration.max_points},
                      {"max_steps", cfg.integration.max_steps},
                      {"wall_timeout_seconds", cfg.integration.wall_timeout_seconds},
                      {"divergence_threshold", cfg.integration.divergence_threshold},
                      {"oscillation_threshold", cfg.integration.oscillation_threshold},
                      {"converged_keep_probability", cfg.integration.converged_keep_probability}};
  j["corruption"] = {{"sigma_max", cfg.corruption.sigma_max}, {"rho_max", cfg.corruption.rho_max}};
  j["stats"] = {{"attempts", stats.attempts},
                {"accepted", stats.accepted},
                {"integration_failed", stats.integration_failed},
                {"divergent", stats.divergent},
                {"converged", stats.converged},
                {"acceptance_rate", stats.acceptance_rate()}};
  return j.dump(2);
}

TrainingExample to_training_example(const DatasetRecord& r, const Vocabulary& vocab) {
  return {encode_trajectory(r.trajectory, vocab), encode_expression(r.system(), vocab)};
}

}  // namespace odesr
