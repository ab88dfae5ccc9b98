#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "odesr/corruption.hpp"
#include "odesr/evaluation.hpp"
#include "odesr/expr.hpp"
#include "odesr/integrator.hpp"

namespace odesr {

struct BenchmarkEntry {
  int id = 0;
  std::string name;
  int dimension = 0;
  std::vector<std::string> equations;  // infix per component, parameters as c<i>
  std::vector<double> params;
  OdeSystem system;  // parameters bound
  std::array<std::vector<double>, 2> initial_conditions;
  bool chaotic = false;

  BenchmarkCase to_case() const;
};

class CorpusIntegrityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The corpus text compiled into the library.
std::string_view corpus_source() noexcept;
/// FNV-1a of corpus_source().
std::uint64_t corpus_hash() noexcept;
extern const std::uint64_t pinned_corpus_hash;

/// Parses corpus text. Throws CorpusIntegrityError with the record number on
/// malformed records, dimension mismatches, or bad initial conditions.
std::vector<BenchmarkEntry> parse_corpus(std::string_view text);

/// The 63 shipped entries. Throws CorpusIntegrityError when the embedded text
/// no longer matches the pinned hash.
std::vector<BenchmarkEntry> load_corpus();

std::vector<BenchmarkCase> corpus_cases(const std::vector<BenchmarkEntry>& entries);

/// Integrator settings the corpus is guaranteed to integrate under.
IntegrationConfig corpus_integration_config();

struct EntryTrajectories {
  Trajectory reconstruction;  // first initial condition
  Trajectory generalization;  // second initial condition
};

/// Integrates both initial conditions on linspace(1, 10, points) and applies
/// the corruption to each. Throws std::runtime_error on integration failure.
EntryTrajectories generate_entry_trajectories(const BenchmarkEntry& entry, std::size_t points,
                                              const CorruptionConfig& corruption, Rng& rng);

/// The older seven-system Strogatz collection is not shipped; this record only
/// points at it.
struct StrogatzNote {
  std::string name;
  std::size_t unique_systems = 0;
  bool deprecated = true;
  bool ships_trajectories = false;
  std::string reason;
};
StrogatzNote load_strogatz_note();

}  // namespace odesr
