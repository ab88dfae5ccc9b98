#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "odesr/plot.hpp"

using namespace odesr;

namespace {

BenchmarkTable sample_table() {
  BenchmarkTable t;
  const double r2s[] = {std::nan(""), -3.0, 0.2, 0.95, 0.999, 1.0};
  int id = 0;
  for (double r2 : r2s) {
    for (Task task : {Task::reconstruction, Task::generalization}) {
      EvaluationResult r;
      r.case_id = ++id;
      r.task = task;
      r.r2 = r2;
      r.accurate = is_valid_score(r2) && r2 > 0.9;
      t.rows.push_back(r);
    }
  }
  return t;
}

}  // namespace

TEST_SUITE("plot") {
  TEST_CASE("histogram buckets sum to the entry count") {
    const BenchmarkTable t = sample_table();
    const R2Histogram h = r2_histogram(t.rows, 10);
    CHECK(h.total() == t.rows.size());
    CHECK(h.invalid == 2);
    CHECK(h.negative == 2);
    CHECK(h.bins.size() == 10);
    CHECK(h.bins[9] == 6);
  }

  TEST_CASE("mean marker matches the aggregate") {
    const BenchmarkTable t = sample_table();
    std::vector<EvaluationResult> rec;
    for (const auto& r : t.rows)
      if (r.task == Task::reconstruction) rec.push_back(r);
    const R2Histogram h = r2_histogram(rec);
    for (const auto& a : t.aggregates())
      if (a.task == Task::reconstruction) {
        CHECK(h.mean == doctest::Approx(a.mean_r2));
        CHECK(h.median == doctest::Approx(a.median_r2));
      }
    const std::string svg = histogram_svg(h, "test");
    CHECK(svg.find("<svg") == 0);
    CHECK(svg.find("invalid") != std::string::npos);
    CHECK(svg.find("&lt;0") != std::string::npos);
  }

  TEST_CASE("figures are written per task") {
    const auto dir = std::filesystem::temp_directory_path() / "odesr_plot_test";
    std::filesystem::remove_all(dir);
    const auto files = write_figures(sample_table(), dir);
    CHECK(files.size() == 4);
    for (const auto& f : files) CHECK(std::filesystem::file_size(f) > 100);
    CHECK(write_figures(BenchmarkTable{}, dir / "empty").empty());
    std::filesystem::remove_all(dir);
  }
}
