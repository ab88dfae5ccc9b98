#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "odesr/corruption.hpp"
#include "odesr/expr.hpp"
#include "odesr/generator.hpp"
#include "odesr/integrator.hpp"
#include "odesr/model.hpp"

namespace odesr {

/// Per-record corruption levels are drawn uniformly from [0, max].
struct CorruptionRanges {
  double sigma_max = 0.1;
  double rho_max = 0.5;

  void validate() const;
};

struct DatasetConfig {
  GeneratorConfig generator;
  IntegrationConfig integration;
  CorruptionRanges corruption;
  std::uint64_t seed = 0;
  int workers = 1;
  /// Throughput guard: after this many attempts the acceptance rate must stay
  /// at or above min_acceptance.
  std::size_t guard_attempts = 100'000;
  double min_acceptance = 0.001;

  DatasetConfig();
  void validate() const;
};

struct DatasetRecord {
  std::size_t index = 0;
  std::uint64_t attempt = 0;
  std::uint64_t seed = 0;  // seed of the attempt's stream
  std::string prefix;      // components joined by " | ", symbols by spaces
  std::string infix;
  Trajectory trajectory;   // after corruption
  double sigma = 0.0;
  double rho = 0.0;
  bool clean = false;  // sigma == 0 and rho == 0

  int dimension() const noexcept { return trajectory.dimension(); }
  std::size_t points() const noexcept { return trajectory.size(); }
  OdeSystem system() const;  // parsed from prefix
};

struct GenerationStats {
  std::size_t attempts = 0;
  std::size_t accepted = 0;
  std::size_t integration_failed = 0;
  std::size_t divergent = 0;
  std::size_t converged = 0;

  double acceptance_rate() const noexcept {
    return attempts ? static_cast<double>(accepted) / static_cast<double>(attempts) : 0.0;
  }
};

class ThroughputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class MalformedRecord : public std::runtime_error {
 public:
  MalformedRecord(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Outcome of one attempt; nullopt when it was discarded (stats say why).
std::optional<DatasetRecord> generate_attempt(const DatasetConfig& cfg, std::uint64_t attempt,
                                              GenerationStats& stats);

/// Sample -> integrate -> filter -> corrupt until `count` records exist.
/// Attempt k draws from derive_seed(cfg.seed, k), and records are emitted in
/// attempt order, so the output does not depend on cfg.workers. Throws
/// ThroughputError when the acceptance rate falls below the guard.
std::vector<DatasetRecord> generate_dataset(std::size_t count, const DatasetConfig& cfg,
                                            GenerationStats* stats = nullptr);

/// One JSON object per line, reals printed with 17 significant digits.
std::string record_json(const DatasetRecord& r);
DatasetRecord parse_record_json(std::string_view line, std::size_t lineno = 0);
void write_records(std::ostream& out, std::span<const DatasetRecord> records);
std::vector<DatasetRecord> read_records(std::istream& in);
void write_records(const std::filesystem::path& path, std::span<const DatasetRecord> records);
std::vector<DatasetRecord> read_records(const std::filesystem::path& path);

std::string manifest_json(const DatasetConfig& cfg, std::size_t count, const GenerationStats& stats);

/// Token grid of the trajectory and token sequence of the system.
TrainingExample to_training_example(const DatasetRecord& r, const Vocabulary& vocab);

}  // namespace odesr
