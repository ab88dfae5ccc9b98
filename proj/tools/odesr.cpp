// Command-line driver: generate, train, infer, evaluate, bench, plot.
// Exit codes: 0 success, 1 usage error, 2 runtime failure.

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "kernel_bench.hpp"
#include "odesr/checkpoint.hpp"
#include "odesr/dataset.hpp"
#include "odesr/evaluation.hpp"
#include "odesr/inference.hpp"
#include "odesr/kernels.hpp"
#include "odesr/odebench.hpp"
#include "odesr/plot.hpp"
#include "odesr/training.hpp"

namespace fs = std::filesystem;
using namespace odesr;

namespace {

struct Globals {
  std::uint64_t seed = 0;
  int workers = 1;
};

struct GenerateArgs {
  std::size_t count = 0;
  std::string out;
  int dmax = 6;
  int bmax = 5;
  int umax = 3;
  double sigma_max = 0.1;
  double rho_max = 0.5;
  int min_points = 50;
  int max_points = 200;
};

struct ModelArgs {
  std::string config_file;
  int d_model = 64;
  int heads = 4;
  int enc_layers = 2;
  int dec_layers = 4;
  int ffn = 4;
  int dmax = 6;
  int max_target_length = 256;
};

struct TrainArgs {
  std::string data;
  std::string out;
  std::string resume;
  std::string log;
  std::size_t steps = 1000;
  double lr = 2e-4;
  double lr_floor = 1e-7;
  std::size_t warmup = 100;
  std::size_t cycle_steps = 0;
  std::size_t tokens_per_batch = 4000;
  double stop_accuracy = 0.0;
  std::size_t eval_every = 50;
  double time_limit = 0.0;
  ModelArgs model;
};

struct DecodeArgs {
  int beam = 50;
  double temperature = 0.1;
  bool opt = false;
  bool no_rescale = false;
};

struct InferArgs {
  std::string model;
  std::string input;
  std::string out;
  DecodeArgs decode;
};

struct EvaluateArgs {
  std::string model;
  std::string corpus = "odebench";
  std::string entries;
  std::vector<double> noise{0.0, 0.01, 0.02, 0.03, 0.04, 0.05};
  std::vector<double> subsample{0.0, 0.5};
  std::size_t points = 150;
  std::string out_dir = "results";
  DecodeArgs decode;
};

struct BenchArgs {
  bool quick = false;
  int repeats = 3;
};

struct PlotArgs {
  std::string results;
  std::string out_dir = "figures";
};

class RuntimeFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeFailure("cannot write " + path.string());
  out << text;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RuntimeFailure("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string option_value(const CLI::Option* opt) {
  std::vector<std::string> values = opt->count() > 0 ? opt->reduced_results() : std::vector<std::string>{};
  if (values.empty()) {
    if (opt->get_expected() == 0) return opt->count() > 0 ? "true" : "false";
    std::string d = opt->get_default_str();
    if (d.size() >= 2 && d.front() == '[' && d.back() == ']') return d;
    values = {d};
  }
  auto quote = [](const std::string& v) {
    if (v == "true" || v == "false") return v;
    char* end = nullptr;
    std::strtod(v.c_str(), &end);
    if (!v.empty() && end && *end == '\0') return v;
    return '"' + v + '"';
  };
  if (values.size() == 1 && opt->get_items_expected_max() <= 1) return quote(values[0]);
  std::string out = "[";
  for (std::size_t i = 0; i < values.size(); ++i) out += (i ? "," : "") + quote(values[i]);
  return out + "]";
}

// Manifest: the global options and the chosen subcommand's options with
// their effective values. `odesr --config <manifest> <subcommand>` replays it.
void write_manifest(const CLI::App& app, const CLI::App& sub, const fs::path& path) {
  std::ostringstream out;
  auto emit = [&](const CLI::App& a, const std::string& prefix) {
    for (const CLI::Option* opt : a.get_options()) {
      if (opt->get_lnames().empty()) continue;
      const std::string& name = opt->get_lnames().front();
      if (name == "help" || name == "config") continue;
      out << prefix << name << '=' << option_value(opt) << '\n';
    }
  };
  emit(app, "");
  emit(sub, sub.get_name() + ".");
  write_text(path, out.str());
}

void add_decode_options(CLI::App* sub, DecodeArgs& d) {
  sub->add_option("--beam", d.beam, "beam size (default 50)")->check(CLI::PositiveNumber);
  sub->add_option("--temperature", d.temperature, "sampling temperature (default 0.1)")
      ->check(CLI::PositiveNumber);
  sub->add_flag("--opt", d.opt, "refine constants with BFGS after selection");
  sub->add_flag("--no-rescale", d.no_rescale, "feed observations without the time/amplitude rescaling");
}

InferenceConfig inference_config(const DecodeArgs& d) {
  InferenceConfig cfg;
  cfg.decode.beam_size = d.beam;
  cfg.decode.temperature = d.temperature;
  cfg.refine = d.opt;
  cfg.rescale = !d.no_rescale;
  return cfg;
}

ModelConfig model_config(const ModelArgs& m, std::uint64_t seed) {
  ModelConfig cfg;
  cfg.d_model = m.d_model;
  cfg.n_heads = m.heads;
  cfg.enc_layers = m.enc_layers;
  cfg.dec_layers = m.dec_layers;
  cfg.ffn_multiplier = m.ffn;
  cfg.max_dimension = m.dmax;
  cfg.max_target_length = m.max_target_length;
  cfg.seed = seed;
  if (!m.config_file.empty()) {
    const nlohmann::json j = nlohmann::json::parse(read_text(m.config_file));
    for (const auto& [key, value] : j.items()) {
      if (key == "d_model") cfg.d_model = value.get<int>();
      else if (key == "n_heads") cfg.n_heads = value.get<int>();
      else if (key == "enc_layers") cfg.enc_layers = value.get<int>();
      else if (key == "dec_layers") cfg.dec_layers = value.get<int>();
      else if (key == "ffn_multiplier") cfg.ffn_multiplier = value.get<int>();
      else if (key == "max_dimension") cfg.max_dimension = value.get<int>();
      else if (key == "max_target_length") cfg.max_target_length = value.get<int>();
      else if (key == "seed") cfg.seed = value.get<std::uint64_t>();
      else throw CLI::ValidationError("--model-config", "unknown key '" + key + "'");
    }
  }
  cfg.validate();
  return cfg;
}

// CSV with header t,x0,...: one observation per row.
Trajectory read_trajectory_csv(const fs::path& path) {
  std::istringstream in(read_text(path));
  std::string line;
  if (!std::getline(in, line)) throw RuntimeFailure(path.string() + ": empty file");
  Trajectory traj;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<double> values;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        values.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw RuntimeFailure(path.string() + ":" + std::to_string(lineno) + ": bad number '" + cell + "'");
      }
    }
    if (values.size() < 2) throw RuntimeFailure(path.string() + ":" + std::to_string(lineno) + ": need t and x0");
    traj.times.push_back(values[0]);
    traj.states.append_row(std::span<const double>(values).subspan(1));
  }
  traj.validate();
  return traj;
}

// "1-23,40,56" -> ids
std::vector<int> parse_id_list(const std::string& text) {
  std::vector<int> ids;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const std::size_t dash = item.find('-');
    if (dash == std::string::npos) {
      ids.push_back(std::stoi(item));
    } else {
      const int lo = std::stoi(item.substr(0, dash)), hi = std::stoi(item.substr(dash + 1));
      for (int i = lo; i <= hi; ++i) ids.push_back(i);
    }
  }
  return ids;
}

int cmd_generate(const CLI::App& app, const CLI::App& sub, const Globals& g, const GenerateArgs& a) {
  DatasetConfig cfg;
  cfg.generator.max_dimension = a.dmax;
  cfg.generator.max_binary = a.bmax;
  cfg.generator.max_unary = a.umax;
  cfg.corruption.sigma_max = a.sigma_max;
  cfg.corruption.rho_max = a.rho_max;
  cfg.integration.min_points = a.min_points;
  cfg.integration.max_points = a.max_points;
  cfg.seed = g.seed;
  cfg.workers = g.workers;
  GenerationStats stats;
  const auto records = generate_dataset(a.count, cfg, &stats);
  write_records(fs::path(a.out), records);
  write_text(a.out + ".manifest.json", manifest_json(cfg, records.size(), stats));
  write_manifest(app, sub, a.out + ".manifest.toml");
  std::printf("wrote %zu records to %s (acceptance rate %.4f over %zu attempts)\n", records.size(), a.out.c_str(),
              stats.acceptance_rate(), stats.attempts);
  return 0;
}

int cmd_train(const CLI::App& app, const CLI::App& sub, const Globals& g, const TrainArgs& a) {
  std::optional<Model> model;
  TrainConfig tcfg;
  std::optional<Trainer> trainer;
  std::optional<Checkpoint> resumed;
  if (!a.resume.empty()) {
    resumed = load_checkpoint(a.resume);
    model.emplace(model_from_checkpoint(*resumed));
    tcfg = resumed->train_config;
    tcfg.total_steps = std::max(tcfg.total_steps, resumed->step + a.steps);
  } else {
    model.emplace(model_config(a.model, g.seed));
    tcfg.lr_peak = a.lr;
    tcfg.lr_floor = a.lr_floor;
    tcfg.warmup_steps = a.warmup;
    tcfg.cycle_steps = a.cycle_steps;
    tcfg.tokens_per_batch = a.tokens_per_batch;
    tcfg.total_steps = std::max<std::size_t>(a.steps, a.warmup + 1);
    tcfg.seed = g.seed;
  }
  tcfg.validate();
  if (resumed && resumed->adam)
    trainer.emplace(*model, tcfg, *resumed->adam, resumed->step);
  else
    trainer.emplace(*model, tcfg);

  if (a.steps > 0) {
    if (a.data.empty()) throw CLI::ValidationError("--data", "required when --steps > 0");
    const auto records = read_records(fs::path(a.data));
    std::vector<TrainingExample> examples;
    for (const DatasetRecord& r : records) {
      if (r.dimension() > model->config().max_dimension) continue;
      TrainingExample ex = to_training_example(r, model->vocabulary());
      if (static_cast<int>(ex.target.size()) > model->config().max_target_length + 1) continue;
      examples.push_back(std::move(ex));
    }
    if (examples.empty()) throw RuntimeFailure("no usable training examples in " + a.data);
    const std::string log_path = a.log.empty() ? a.out + ".log.csv" : a.log;
    TrainingLog log(log_path);
    TrainingRun run;
    run.steps = a.steps;
    run.stop_accuracy = a.stop_accuracy;
    run.eval_every = a.eval_every;
    run.time_limit_seconds = a.time_limit;
    run.log = &log;
    run.on_step = [](std::size_t step, double lr, const LossStats& s) {
      if (step % 50 == 0)
        std::printf("step %zu lr %.3e loss %.4f acc %.3f\n", step, lr, s.loss,
                    s.tokens ? static_cast<double>(s.correct) / static_cast<double>(s.tokens) : 0.0);
      std::fflush(stdout);
    };
    Rng rng = Rng::for_stream(g.seed, trainer->step_count());
    const TrainingOutcome o = run_training(*trainer, examples, run, rng);
    std::printf("trained %zu steps in %.1f s", o.steps_run, o.seconds);
    if (o.accuracy >= 0) std::printf(", token accuracy %.4f", o.accuracy);
    std::printf("\n");
  }
  save_checkpoint(a.out, make_checkpoint(*model, trainer->config(), trainer->step_count(), &trainer->adam()));
  write_manifest(app, sub, a.out + ".manifest.toml");
  std::printf("saved checkpoint %s at step %zu\n", a.out.c_str(), trainer->step_count());
  return 0;
}

int cmd_infer(const CLI::App& app, const CLI::App& sub, const Globals& g, const InferArgs& a) {
  const Checkpoint ckpt = load_checkpoint(a.model);
  const Model model = model_from_checkpoint(ckpt);
  const InferenceConfig cfg = inference_config(a.decode);
  std::vector<Trajectory> inputs;
  if (fs::path(a.input).extension() == ".jsonl") {
    for (const DatasetRecord& r : read_records(fs::path(a.input))) inputs.push_back(r.trajectory);
  } else {
    inputs.push_back(read_trajectory_csv(a.input));
  }
  std::ostringstream lines;
  bool any_valid = false;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    Rng rng = Rng::for_stream(g.seed, i);
    const Prediction p = predict(model, inputs[i], cfg, rng);
    any_valid = any_valid || p.valid;
    lines << prediction_json(p) << '\n';
    if (p.valid)
      std::printf("[%zu] %s  (R2 %.4f, %.2f s)\n", i, to_infix(p.system).c_str(), p.score, p.seconds);
    else
      std::printf("[%zu] invalid: %s\n", i, p.error.c_str());
  }
  if (!a.out.empty()) {
    write_text(a.out, lines.str());
    write_manifest(app, sub, a.out + ".manifest.toml");
  }
  return any_valid ? 0 : 2;
}

int cmd_evaluate(const CLI::App& app, const CLI::App& sub, const Globals& g, const EvaluateArgs& a) {
  if (a.corpus != "odebench") throw CLI::ValidationError("--corpus", "only 'odebench' is available");
  const Checkpoint ckpt = load_checkpoint(a.model);
  const Model model = model_from_checkpoint(ckpt);
  std::vector<BenchmarkEntry> entries = load_corpus();
  if (!a.entries.empty()) {
    const std::vector<int> ids = parse_id_list(a.entries);
    std::erase_if(entries, [&](const BenchmarkEntry& e) { return std::find(ids.begin(), ids.end(), e.id) == ids.end(); });
  }
  std::erase_if(entries, [&](const BenchmarkEntry& e) { return e.dimension > model.config().max_dimension; });
  BenchmarkConfig cfg;
  cfg.noise_levels = a.noise;
  cfg.subsample_levels = a.subsample;
  cfg.observed_points = a.points;
  cfg.seed = g.seed;
  const std::vector<BenchmarkCase> cases = corpus_cases(entries);
  const BenchmarkTable table = run_benchmark(model_predictor(model, inference_config(a.decode)), cases, cfg);
  fs::create_directories(a.out_dir);
  {
    std::ofstream out(fs::path(a.out_dir) / "results.csv");
    if (!out) throw RuntimeFailure("cannot write results.csv");
    write_results_csv(out, table);
  }
  write_text(fs::path(a.out_dir) / "summary.json", summary_json(table));
  write_manifest(app, sub, fs::path(a.out_dir) / "manifest.toml");
  for (const auto& agg : table.aggregates())
    std::printf("%-15s sigma %-5g rho %-4g accuracy %.3f  mean R2 %.3f  invalid %zu/%zu\n",
                std::string(to_string(agg.task)).c_str(), agg.sigma, agg.rho, agg.accuracy, agg.mean_r2, agg.invalid,
                agg.count);
  return 0;
}

int cmd_bench(const Globals& g, const BenchArgs& a) {
  bench::KernelBenchOptions opts;
  opts.quick = a.quick;
  opts.repeats = a.repeats;
  opts.threads = g.workers;
  return bench::run_kernel_benchmark(std::cout, opts) ? 0 : 2;
}

int cmd_plot(const PlotArgs& a) {
  std::ifstream in(a.results);
  if (!in) throw RuntimeFailure("cannot read " + a.results);
  const BenchmarkTable table = read_results_csv(in);
  const auto files = write_figures(table, a.out_dir);
  if (files.empty()) {
    std::fprintf(stderr, "warning: %s has no result rows; no figures written\n", a.results.c_str());
    return 0;
  }
  for (const auto& f : files) std::printf("wrote %s\n", f.string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"odesr: symbolic regression of ODE systems from trajectories"};
  app.set_config("--config", "", "key = value file; command-line flags override it");
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();
  Globals g;
  app.add_option("--seed", g.seed, "base seed");
  app.add_option("--workers", g.workers, "thread cap for parallel sections")->check(CLI::PositiveNumber);

  GenerateArgs gen;
  auto* generate = app.add_subcommand("generate", "sample, integrate, filter and corrupt a synthetic dataset");
  generate->add_option("--count", gen.count, "records to emit")->required();
  generate->add_option("--out", gen.out, "output JSONL path")->required();
  generate->add_option("--dmax", gen.dmax, "maximum dimension (default 6)")->check(CLI::Range(1, 6));
  generate->add_option("--bmax", gen.bmax, "maximum binary operators per component (default 5)")
      ->check(CLI::NonNegativeNumber);
  generate->add_option("--umax", gen.umax, "maximum unary operators per component (default 3)")
      ->check(CLI::NonNegativeNumber);
  generate->add_option("--sigma-max", gen.sigma_max, "noise level drawn from [0, sigma-max] (default 0.1)");
  generate->add_option("--rho-max", gen.rho_max, "subsampling ratio drawn from [0, rho-max] (default 0.5)");
  generate->add_option("--min-points", gen.min_points, "smallest grid size (default 50)");
  generate->add_option("--max-points", gen.max_points, "largest grid size (default 200)");

  TrainArgs tr;
  auto* train = app.add_subcommand("train", "train or resume a model on a JSONL dataset");
  train->add_option("--data", tr.data, "training JSONL");
  train->add_option("--out", tr.out, "checkpoint path")->required();
  train->add_option("--resume", tr.resume, "continue from this checkpoint");
  train->add_option("--log", tr.log, "loss CSV (default <out>.log.csv)");
  train->add_option("--steps", tr.steps, "optimizer steps (0 saves the initialized model)");
  train->add_option("--lr", tr.lr, "peak learning rate (default 2e-4)");
  train->add_option("--lr-floor", tr.lr_floor, "warmup start and decay floor (default 1e-7)");
  train->add_option("--warmup", tr.warmup, "warmup steps (default 100)");
  train->add_option("--cycle-steps", tr.cycle_steps, "first cosine cycle length, 0 = whole run");
  train->add_option("--tokens-per-batch", tr.tokens_per_batch, "token budget per batch (default 4000)");
  train->add_option("--stop-accuracy", tr.stop_accuracy, "stop once training-set token accuracy reaches this");
  train->add_option("--eval-every", tr.eval_every, "steps between accuracy checks (default 50)");
  train->add_option("--time-limit", tr.time_limit, "wall-clock limit in seconds, 0 = none");
  train->add_option("--model-config", tr.model.config_file, "JSON file with model config keys");
  train->add_option("--d-model", tr.model.d_model, "embedding width (default 64)");
  train->add_option("--heads", tr.model.heads, "attention heads (default 4)");
  train->add_option("--enc-layers", tr.model.enc_layers, "encoder layers (default 2)");
  train->add_option("--dec-layers", tr.model.dec_layers, "decoder layers (default 4)");
  train->add_option("--ffn", tr.model.ffn, "feed-forward width multiplier (default 4)");
  train->add_option("--dmax", tr.model.dmax, "largest input dimension (default 6)");
  train->add_option("--max-target-length", tr.model.max_target_length, "decoder positions (default 256)");

  InferArgs inf;
  auto* infer = app.add_subcommand("infer", "predict an ODE system for observed trajectories");
  infer->add_option("--model", inf.model, "checkpoint")->required();
  infer->add_option("--input", inf.input, "CSV (t,x0,...) or dataset JSONL")->required();
  infer->add_option("--out", inf.out, "prediction JSONL");
  add_decode_options(infer, inf.decode);

  EvaluateArgs ev;
  auto* evaluate = app.add_subcommand("evaluate", "reconstruction and generalization sweep over the benchmark");
  evaluate->add_option("--model", ev.model, "checkpoint")->required();
  evaluate->add_option("--corpus", ev.corpus, "benchmark corpus (odebench)");
  evaluate->add_option("--entries", ev.entries, "subset of entry ids, e.g. 1-23,56");
  evaluate->add_option("--noise", ev.noise, "noise levels sigma")->delimiter(',');
  evaluate->add_option("--subsample", ev.subsample, "subsampling ratios rho")->delimiter(',');
  evaluate->add_option("--points", ev.points, "observed grid size before subsampling (default 150)");
  evaluate->add_option("--out-dir", ev.out_dir, "directory for results.csv and summary.json");
  add_decode_options(evaluate, ev.decode);

  BenchArgs bn;
  auto* benchmark = app.add_subcommand("bench", "time serial reference kernels against the OpenMP kernels");
  benchmark->add_flag("--quick", bn.quick, "smaller shapes");
  benchmark->add_option("--repeats", bn.repeats, "timing repeats (best is reported)");

  PlotArgs pl;
  auto* plot = app.add_subcommand("plot", "accuracy bars and R^2 histograms from results.csv");
  plot->add_option("--results", pl.results, "results CSV from evaluate")->required();
  plot->add_option("--out-dir", pl.out_dir, "directory for SVG figures");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  kernels::set_max_threads(g.workers);
  try {
    if (generate->parsed()) return cmd_generate(app, *generate, g, gen);
    if (train->parsed()) return cmd_train(app, *train, g, tr);
    if (infer->parsed()) return cmd_infer(app, *infer, g, inf);
    if (evaluate->parsed()) return cmd_evaluate(app, *evaluate, g, ev);
    if (benchmark->parsed()) return cmd_bench(g, bn);
    if (plot->parsed()) return cmd_plot(pl);
  } catch (const CLI::ValidationError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 1;
}
