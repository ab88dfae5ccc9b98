#include "odesr/odebench.hpp"

#include <sstream>

namespace odesr {

namespace detail {
extern const std::string_view odebench_source_text;
}

const std::uint64_t pinned_corpus_hash = 0xb23a4df2f54d59cbULL;

std::string_view corpus_source() noexcept { return detail::odebench_source_text; }

std::uint64_t corpus_hash() noexcept { return fnv1a64(corpus_source()); }

BenchmarkCase BenchmarkEntry::to_case() const {
  return {id, name, system, {initial_conditions[0], initial_conditions[1]}};
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

// Comma separated numbers; each item may be a constant expression such as 8/3.
std::vector<double> parse_numbers(std::string_view s) {
  std::vector<double> out;
  s = trim(s);
  if (s.empty()) return out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = s.find(',', start);
    const std::string_view item = trim(s.substr(start, comma == std::string_view::npos ? comma : comma - start));
    const Expression e = parse_infix(item);
    if (max_variable_index(e) >= 0) throw MalformedSequence("number list contains a variable");
    out.push_back(evaluate(e, {}));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

struct RawRecord {
  std::size_t line = 0;
  std::vector<std::pair<std::string, std::string>> fields;
};

BenchmarkEntry build(const RawRecord& rec) {
  BenchmarkEntry e;
  std::vector<std::string> ics;
  bool have_id = false, have_dim = false, have_params = false, have_chaotic = false;
  for (const auto& [key, value] : rec.fields) {
    if (key == "id") {
      e.id = std::stoi(value);
      have_id = true;
    } else if (key == "name") {
      e.name = value;
    } else if (key == "dim") {
      e.dimension = std::stoi(value);
      have_dim = true;
    } else if (key == "f") {
      e.equations.push_back(value);
    } else if (key == "params") {
      e.params = parse_numbers(value);
      have_params = true;
    } else if (key == "ic") {
      ics.push_back(value);
    } else if (key == "chaotic") {
      if (value != "0" && value != "1") throw CorpusIntegrityError("chaotic must be 0 or 1");
      e.chaotic = value == "1";
      have_chaotic = true;
    } else {
      throw CorpusIntegrityError("unknown field '" + key + "'");
    }
  }
  if (!have_id || !have_dim || !have_params || !have_chaotic || e.name.empty())
    throw CorpusIntegrityError("missing field");
  if (static_cast<int>(e.equations.size()) != e.dimension) throw CorpusIntegrityError("component count != dim");
  if (ics.size() != 2) throw CorpusIntegrityError("expected exactly two initial conditions");
  std::vector<Expression> comps;
  for (const std::string& f : e.equations) comps.push_back(parse_infix(f, e.params));
  e.system = OdeSystem(std::move(comps));
  for (std::size_t k = 0; k < 2; ++k) {
    e.initial_conditions[k] = parse_numbers(ics[k]);
    if (static_cast<int>(e.initial_conditions[k].size()) != e.dimension)
      throw CorpusIntegrityError("initial condition length != dim");
  }
  return e;
}

}  // namespace

std::vector<BenchmarkEntry> parse_corpus(std::string_view text) {
  std::vector<RawRecord> records;
  RawRecord current;
  std::size_t lineno = 0;
  std::istringstream in{std::string(text)};
  std::string raw;
  auto flush = [&] {
    if (!current.fields.empty()) records.push_back(std::move(current));
    current = RawRecord{};
  };
  while (std::getline(in, raw)) {
    ++lineno;
    const std::string_view line = trim(raw);
    if (line.empty()) {
      flush();
      continue;
    }
    if (line.front() == '#') continue;
    const std::size_t colon = line.find(':');
    if (colon == std::string_view::npos)
      throw CorpusIntegrityError("corpus line " + std::to_string(lineno) + ": expected 'key: value'");
    if (current.fields.empty()) current.line = lineno;
    current.fields.emplace_back(std::string(trim(line.substr(0, colon))), std::string(trim(line.substr(colon + 1))));
  }
  flush();
  std::vector<BenchmarkEntry> out;
  for (const RawRecord& rec : records) {
    try {
      out.push_back(build(rec));
    } catch (const CorpusIntegrityError& e) {
      throw CorpusIntegrityError("corpus record at line " + std::to_string(rec.line) + ": " + e.what());
    } catch (const std::exception& e) {
      throw CorpusIntegrityError("corpus record at line " + std::to_string(rec.line) + ": " + e.what());
    }
  }
  return out;
}

std::vector<BenchmarkEntry> load_corpus() {
  if (corpus_hash() != pinned_corpus_hash) throw CorpusIntegrityError("embedded corpus does not match its pinned hash");
  return parse_corpus(corpus_source());
}

std::vector<BenchmarkCase> corpus_cases(const std::vector<BenchmarkEntry>& entries) {
  std::vector<BenchmarkCase> out;
  for (const BenchmarkEntry& e : entries) out.push_back(e.to_case());
  return out;
}

IntegrationConfig corpus_integration_config() {
  IntegrationConfig cfg;
  cfg.rtol = 1e-3;
  cfg.atol = 1e-6;
  cfg.wall_timeout_seconds = 5.0;
  return cfg;
}

EntryTrajectories generate_entry_trajectories(const BenchmarkEntry& entry, std::size_t points,
                                              const CorruptionConfig& corruption, Rng& rng) {
  const IntegrationConfig cfg = corpus_integration_config();
  const std::vector<double> times = linspace(1.0, 10.0, points);
  Trajectory out[2];
  for (std::size_t k = 0; k < 2; ++k) {
    const IntegrationResult res = integrate(entry.system, entry.initial_conditions[k], times, cfg);
    if (!res.ok())
      throw std::runtime_error("entry " + std::to_string(entry.id) + " initial condition " + std::to_string(k + 1) +
                               ": " + std::string(to_string(res.status)));
    out[k] = corrupt(res.trajectory, corruption, rng);
  }
  return {std::move(out[0]), std::move(out[1])};
}

StrogatzNote load_strogatz_note() {
  StrogatzNote n;
  n.name = "Strogatz ODE collection (PMLB)";
  n.unique_systems = 7;
  n.deprecated = true;
  n.ships_trajectories = false;
  n.reason = "seven unique two-dimensional systems with four initial conditions each, integrated at low "
             "precision and annotated as chaotic although none is; not shipped";
  return n;
}

}  // namespace odesr
