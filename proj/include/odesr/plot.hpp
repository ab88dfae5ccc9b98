#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "odesr/evaluation.hpp"

namespace odesr {

/// Per-equation R^2 histogram: separate "invalid" and "<0" buckets, then
/// `bins` equal-width buckets over [0, 1].
struct R2Histogram {
  std::size_t invalid = 0;
  std::size_t negative = 0;
  std::vector<std::size_t> bins;
  double mean = 0.0;    // over valid results
  double median = 0.0;  // over valid results
  std::size_t valid = 0;

  std::size_t total() const noexcept;
};

R2Histogram r2_histogram(std::span<const EvaluationResult> rows, std::size_t bins = 10);

std::string histogram_svg(const R2Histogram& h, const std::string& title);

/// Accuracy (R^2 > threshold) per noise level for one task and subsampling level.
std::string accuracy_bars_svg(const BenchmarkTable& table, Task task, double rho, const std::string& title);

/// One accuracy figure per (task, rho) and one histogram per (task, sigma, rho).
/// Returns the written paths; an empty table writes nothing.
std::vector<std::filesystem::path> write_figures(const BenchmarkTable& table, const std::filesystem::path& out_dir);

}  // namespace odesr
