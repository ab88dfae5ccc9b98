#include "odesr/plot.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>

namespace odesr {

std::size_t R2Histogram::total() const noexcept {
  std::size_t n = invalid + negative;
  for (std::size_t b : bins) n += b;
  return n;
}

R2Histogram r2_histogram(std::span<const EvaluationResult> rows, std::size_t bins) {
  R2Histogram h;
  h.bins.assign(bins, 0);
  std::vector<double> valid;
  for (const EvaluationResult& r : rows) {
    if (!r.valid()) {
      ++h.invalid;
      continue;
    }
    valid.push_back(r.r2);
    if (r.r2 < 0.0) {
      ++h.negative;
      continue;
    }
    auto b = static_cast<std::size_t>(r.r2 * static_cast<double>(bins));
    h.bins[std::min(b, bins - 1)] += 1;
  }
  h.valid = valid.size();
  if (!valid.empty()) {
    double sum = 0.0;
    for (double v : valid) sum += v;
    h.mean = sum / static_cast<double>(valid.size());
    std::sort(valid.begin(), valid.end());
    const std::size_t m = valid.size() / 2;
    h.median = valid.size() % 2 ? valid[m] : 0.5 * (valid[m - 1] + valid[m]);
  }
  return h;
}

namespace {

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<')
      out += "&lt;";
    else if (c == '>')
      out += "&gt;";
    else if (c == '&')
      out += "&amp;";
    else
      out += c;
  }
  return out;
}

constexpr double W = 520, H = 300, left = 50, right = 20, top = 40, bottom = 50;

std::string header(const std::string& title) {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt("%.0f", W) + "\" height=\"" + fmt("%.0f", H) +
         "\" font-family=\"sans-serif\" font-size=\"11\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
         "<text x=\"" + fmt("%.0f", W / 2) + "\" y=\"20\" text-anchor=\"middle\" font-size=\"13\">" + escape(title) +
         "</text>\n";
}

std::string line(double x1, double y1, double x2, double y2, const char* stroke, const char* extra = "") {
  return "<line x1=\"" + fmt("%.1f", x1) + "\" y1=\"" + fmt("%.1f", y1) + "\" x2=\"" + fmt("%.1f", x2) + "\" y2=\"" +
         fmt("%.1f", y2) + "\" stroke=\"" + stroke + "\" " + extra + "/>\n";
}

std::string text(double x, double y, const std::string& s, const char* anchor = "middle") {
  return "<text x=\"" + fmt("%.1f", x) + "\" y=\"" + fmt("%.1f", y) + "\" text-anchor=\"" + anchor + "\">" +
         escape(s) + "</text>\n";
}

std::string rect(double x, double y, double w, double h, const char* fill) {
  return "<rect x=\"" + fmt("%.1f", x) + "\" y=\"" + fmt("%.1f", y) + "\" width=\"" + fmt("%.1f", w) +
         "\" height=\"" + fmt("%.1f", h) + "\" fill=\"" + fill + "\"/>\n";
}

}  // namespace

std::string histogram_svg(const R2Histogram& h, const std::string& title) {
  std::vector<std::pair<std::string, std::size_t>> buckets{{"invalid", h.invalid}, {"<0", h.negative}};
  const std::size_t nb = h.bins.size();
  for (std::size_t i = 0; i < nb; ++i)
    buckets.emplace_back(fmt("%.1f", static_cast<double>(i) / static_cast<double>(nb)), h.bins[i]);
  std::size_t peak = 1;
  for (const auto& b : buckets) peak = std::max(peak, b.second);
  const double pw = W - left - right, ph = H - top - bottom;
  const double bw = pw / static_cast<double>(buckets.size());
  std::string s = header(title);
  s += line(left, top + ph, left + pw, top + ph, "black");
  s += line(left, top, left, top + ph, "black");
  for (std::size_t i = 0; i < buckets.size(); ++i) {
    const double x = left + bw * static_cast<double>(i);
    const double bh = ph * static_cast<double>(buckets[i].second) / static_cast<double>(peak);
    s += rect(x + 2, top + ph - bh, bw - 4, bh, i < 2 ? "#999999" : "#4c72b0");
    s += text(x + bw / 2, top + ph + 14, buckets[i].first);
    if (buckets[i].second) s += text(x + bw / 2, top + ph - bh - 3, std::to_string(buckets[i].second));
  }
  s += text(W / 2, H - 12, "R^2 (counts per bucket)");
  // Markers live on the [0, 1] axis; negative values sit in the "<0" bucket.
  auto marker_x = [&](double v) {
    if (v < 0.0) return left + bw * 1.5;
    return left + 2 * bw + std::min(v, 1.0) * bw * static_cast<double>(nb);
  };
  if (h.valid) {
    s += line(marker_x(h.mean), top, marker_x(h.mean), top + ph, "red", "stroke-dasharray=\"4,3\"");
    s += line(marker_x(h.median), top, marker_x(h.median), top + ph, "black", "stroke-dasharray=\"4,3\"");
    s += text(left + pw, top - 6, "mean " + fmt("%.3f", h.mean) + "  median " + fmt("%.3f", h.median), "end");
  }
  return s + "</svg>\n";
}

std::string accuracy_bars_svg(const BenchmarkTable& table, Task task, double rho, const std::string& title) {
  std::vector<std::pair<double, double>> bars;  // sigma, accuracy
  for (const auto& a : table.aggregates())
    if (a.task == task && a.rho == rho) bars.emplace_back(a.sigma, a.accuracy);
  const double pw = W - left - right, ph = H - top - bottom;
  std::string s = header(title);
  s += line(left, top + ph, left + pw, top + ph, "black");
  s += line(left, top, left, top + ph, "black");
  for (int k = 0; k <= 4; ++k) {
    const double y = top + ph - ph * k / 4.0;
    s += text(left - 6, y + 4, fmt("%.2f", k / 4.0), "end");
  }
  const double bw = bars.empty() ? pw : pw / static_cast<double>(bars.size());
  for (std::size_t i = 0; i < bars.size(); ++i) {
    const double x = left + bw * static_cast<double>(i);
    const double bh = ph * bars[i].second;
    s += rect(x + bw * 0.15, top + ph - bh, bw * 0.7, bh, "#4c72b0");
    s += text(x + bw / 2, top + ph + 14, "sigma " + fmt("%g", bars[i].first));
    s += text(x + bw / 2, top + ph - bh - 3, fmt("%.2f", bars[i].second));
  }
  s += text(W / 2, H - 12, "accuracy (R^2 > " + fmt("%g", accuracy_threshold) + ")");
  return s + "</svg>\n";
}

std::vector<std::filesystem::path> write_figures(const BenchmarkTable& table, const std::filesystem::path& out_dir) {
  std::vector<std::filesystem::path> written;
  if (table.rows.empty()) return written;
  std::filesystem::create_directories(out_dir);
  auto save = [&](const std::string& name, const std::string& svg) {
    const std::filesystem::path p = out_dir / name;
    std::ofstream out(p);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    out << svg;
    written.push_back(p);
  };
  std::set<std::pair<int, double>> task_rho;
  std::map<std::tuple<int, double, double>, std::vector<EvaluationResult>> cells;
  for (const EvaluationResult& r : table.rows) {
    task_rho.emplace(static_cast<int>(r.task), r.rho);
    cells[{static_cast<int>(r.task), r.sigma, r.rho}].push_back(r);
  }
  for (const auto& [t, rho] : task_rho) {
    const auto task = static_cast<Task>(t);
    const std::string tag = std::string(to_string(task)) + "_rho" + fmt("%g", rho);
    save("accuracy_" + tag + ".svg",
         accuracy_bars_svg(table, task, rho, std::string(to_string(task)) + " accuracy, rho = " + fmt("%g", rho)));
  }
  for (const auto& [key, rows] : cells) {
    const auto task = static_cast<Task>(std::get<0>(key));
    const double sigma = std::get<1>(key), rho = std::get<2>(key);
    const std::string tag =
        std::string(to_string(task)) + "_sigma" + fmt("%g", sigma) + "_rho" + fmt("%g", rho);
    save("hist_" + tag + ".svg",
         histogram_svg(r2_histogram(rows),
                       std::string(to_string(task)) + " R^2, sigma = " + fmt("%g", sigma) + ", rho = " + fmt("%g", rho)));
  }
  return written;
}

}  // namespace odesr
