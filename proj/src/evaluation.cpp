#include "odesr/evaluation.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "odesr/corruption.hpp"

namespace odesr {

double r2_score(const Matrix& y_true, const Matrix& y_pred) {
  if (y_true.rows() != y_pred.rows() || y_true.cols() != y_pred.cols())
    throw std::invalid_argument("r2_score: shape mismatch");
  if (y_true.rows() == 0) throw std::invalid_argument("r2_score: empty input");
  for (double v : y_pred.storage())
    if (!std::isfinite(v)) return std::numeric_limits<double>::quiet_NaN();
  const std::size_t n = y_true.rows(), d = y_true.cols();
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += y_true(i, j);
    mean /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double r = y_true(i, j) - y_pred(i, j);
      const double c = y_true(i, j) - mean;
      ss_res += r * r;
      ss_tot += c * c;
    }
  }
  if (!(ss_tot > 0.0)) throw std::invalid_argument("r2_score: y_true has no variance");
  return 1.0 - ss_res / ss_tot;
}

std::string_view to_string(Task t) noexcept {
  return t == Task::reconstruction ? "reconstruction" : "generalization";
}

EvaluationGrid::EvaluationGrid() {
  integration.rtol = 1e-6;
  integration.atol = 1e-9;
  integration.wall_timeout_seconds = 2.0;
}

EvaluationResult score_against_truth(const std::optional<OdeSystem>& pred, const OdeSystem& truth,
                                     std::span<const double> ic, const EvaluationGrid& grid, double threshold) {
  const std::vector<double> times = linspace(grid.t_start, grid.t_end, grid.dense_points);
  const IntegrationResult ref = integrate(truth, ic, times, grid.integration);
  if (!ref.ok())
    throw std::runtime_error("ground truth failed to integrate: " + std::string(to_string(ref.status)));
  EvaluationResult r;
  if (!pred) return r;
  r.predicted = to_infix(*pred);
  r.complexity = system_complexity(*pred);
  if (pred->dimension() != truth.dimension()) return r;
  const IntegrationResult got = integrate(*pred, ic, times, grid.integration);
  if (!got.ok()) return r;
  r.r2 = r2_score(ref.trajectory.states, got.trajectory.states);
  r.accurate = r.valid() && r.r2 > threshold;
  return r;
}

EvaluationResult reconstruction_eval(const std::optional<OdeSystem>& pred, const OdeSystem& truth,
                                     std::span<const double> ic, const EvaluationGrid& grid, double threshold) {
  EvaluationResult r = score_against_truth(pred, truth, ic, grid, threshold);
  r.task = Task::reconstruction;
  return r;
}

EvaluationResult generalization_eval(const std::optional<OdeSystem>& pred, const OdeSystem& truth,
                                     std::span<const double> new_ic, const EvaluationGrid& grid,
                                     double threshold) {
  EvaluationResult r = score_against_truth(pred, truth, new_ic, grid, threshold);
  r.task = Task::generalization;
  return r;
}

double accuracy_at_threshold(std::span<const EvaluationResult> results, double threshold) {
  if (results.empty()) throw std::invalid_argument("accuracy over an empty result set");
  std::size_t hits = 0;
  for (const EvaluationResult& r : results)
    if (r.valid() && r.r2 > threshold) ++hits;
  return static_cast<double>(hits) / static_cast<double>(results.size());
}

PredictionSource model_predictor(const Model& model, const InferenceConfig& cfg) {
  return [&model, cfg](const Trajectory& observed, Rng& rng) {
    Prediction p = predict(model, observed, cfg, rng);
    PredictionOutcome out;
    out.seconds = p.seconds;
    if (p.valid) out.system = std::move(p.system);
    return out;
  };
}

Trajectory observe_case(const BenchmarkCase& c, const BenchmarkConfig& cfg, double sigma, double rho, Rng& rng) {
  if (c.initial_conditions.empty()) throw std::invalid_argument("case has no initial condition");
  const std::vector<double> times = linspace(cfg.grid.t_start, cfg.grid.t_end, cfg.observed_points);
  const IntegrationResult res = integrate(c.system, c.initial_conditions[0], times, cfg.grid.integration);
  if (!res.ok()) throw std::runtime_error("case " + std::to_string(c.id) + " failed to integrate");
  return corrupt(res.trajectory, {sigma, rho}, rng);
}

BenchmarkTable run_benchmark(const PredictionSource& source, std::span<const BenchmarkCase> cases,
                             const BenchmarkConfig& cfg) {
  BenchmarkTable table;
  std::uint64_t cell = 0;
  for (const BenchmarkCase& c : cases)
    for (double sigma : cfg.noise_levels)
      for (double rho : cfg.subsample_levels) {
        Rng rng = Rng::for_stream(cfg.seed, cell++);
        PredictionOutcome pred;
        try {
          const Trajectory observed = observe_case(c, cfg, sigma, rho, rng);
          pred = source(observed, rng);
        } catch (const std::exception&) {
          pred = PredictionOutcome{};
        }
        for (Task task : cfg.tasks) {
          EvaluationResult r;
          try {
            const std::size_t ic = task == Task::reconstruction ? 0 : 1;
            if (ic >= c.initial_conditions.size()) throw std::invalid_argument("missing initial condition");
            r = score_against_truth(pred.system, c.system, c.initial_conditions[ic], cfg.grid, cfg.threshold);
          } catch (const std::exception&) {
            r = EvaluationResult{};
            if (pred.system) r.predicted = to_infix(*pred.system);
          }
          r.case_id = c.id;
          r.task = task;
          r.sigma = sigma;
          r.rho = rho;
          r.inference_seconds = pred.seconds;
          table.rows.push_back(std::move(r));
        }
      }
  return table;
}

std::vector<BenchmarkTable::Aggregate> BenchmarkTable::aggregates() const {
  std::map<std::tuple<int, double, double>, std::vector<const EvaluationResult*>> groups;
  for (const EvaluationResult& r : rows) groups[{static_cast<int>(r.task), r.sigma, r.rho}].push_back(&r);
  std::vector<Aggregate> out;
  for (const auto& [key, members] : groups) {
    Aggregate a{static_cast<Task>(std::get<0>(key)), std::get<1>(key), std::get<2>(key)};
    a.count = members.size();
    std::vector<double> valid;
    std::size_t hits = 0;
    for (const EvaluationResult* r : members) {
      if (!r->valid()) {
        ++a.invalid;
        continue;
      }
      valid.push_back(r->r2);
      if (r->accurate) ++hits;
    }
    a.accuracy = static_cast<double>(hits) / static_cast<double>(a.count);
    if (!valid.empty()) {
      double sum = 0.0;
      for (double v : valid) sum += v;
      a.mean_r2 = sum / static_cast<double>(valid.size());
      std::sort(valid.begin(), valid.end());
      const std::size_t m = valid.size() / 2;
      a.median_r2 = valid.size() % 2 ? valid[m] : 0.5 * (valid[m - 1] + valid[m]);
    }
    out.push_back(a);
  }
  return out;
}

namespace {

constexpr std::string_view csv_header = "case_id,task,sigma,rho,r2,accurate,complexity,inference_seconds,predicted";

std::string quote(std::string_view s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        fields.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        fields.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.emplace_back();
    } else {
      fields.back() += c;
    }
  }
  return fields;
}

double parse_double(const std::string& s, std::size_t line) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw std::runtime_error("results line " + std::to_string(line) + ": bad number '" + s + "'");
  return v;
}

}  // namespace

void write_results_csv(std::ostream& out, const BenchmarkTable& table) {
  out << csv_header << '\n';
  for (const EvaluationResult& r : table.rows) {
    out << r.case_id << ',' << to_string(r.task) << ',' << format_double(r.sigma) << ',' << format_double(r.rho)
        << ',' << (r.valid() ? format_double(r.r2) : std::string("invalid")) << ',' << (r.accurate ? 1 : 0) << ','
        << r.complexity << ',' << format_double(r.inference_seconds) << ',' << quote(r.predicted) << '\n';
  }
}

BenchmarkTable read_results_csv(std::istream& in) {
  BenchmarkTable table;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1) {
      if (line != csv_header) throw std::runtime_error("results file: unexpected header");
      continue;
    }
    if (line.empty()) continue;
    const std::vector<std::string> f = split_csv(line);
    if (f.size() != 9) throw std::runtime_error("results line " + std::to_string(lineno) + ": expected 9 fields");
    EvaluationResult r;
    r.case_id = static_cast<int>(parse_double(f[0], lineno));
    if (f[1] == "reconstruction")
      r.task = Task::reconstruction;
    else if (f[1] == "generalization")
      r.task = Task::generalization;
    else
      throw std::runtime_error("results line " + std::to_string(lineno) + ": unknown task");
    r.sigma = parse_double(f[2], lineno);
    r.rho = parse_double(f[3], lineno);
    r.r2 = f[4] == "invalid" ? std::numeric_limits<double>::quiet_NaN() : parse_double(f[4], lineno);
    r.accurate = f[5] == "1";
    r.complexity = static_cast<std::size_t>(parse_double(f[6], lineno));
    r.inference_seconds = parse_double(f[7], lineno);
    r.predicted = f[8];
    table.rows.push_back(std::move(r));
  }
  return table;
}

std::string summary_json(const BenchmarkTable& table) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& a : table.aggregates())
    cells.push_back({{"task", to_string(a.task)},
                     {"sigma", a.sigma},
                     {"rho", a.rho},
                     {"count", a.count},
                     {"invalid", a.invalid},
                     {"accuracy", a.accuracy},
                     {"mean_r2", a.mean_r2},
                     {"median_r2", a.median_r2}});
  nlohmann::json j;
  j["rows"] = table.rows.size();
  j["threshold"] = accuracy_threshold;
  j["cells"] = std::move(cells);
  return j.dump(2);
}

}  // namespace odesr
