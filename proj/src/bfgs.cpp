#include "odesr/bfgs.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace odesr {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

BfgsResult minimize_bfgs(const std::function<double(std::span<const double>)>& f, std::vector<double> x0,
                         const BfgsOptions& opts) {
  const std::size_t n = x0.size();
  BfgsResult res;
  res.x = x0;
  auto eval = [&](std::span<const double> x) {
    ++res.evaluations;
    const double v = f(x);
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
  };
  res.value = eval(res.x);
  if (n == 0 || !std::isfinite(res.value)) return res;

  std::vector<double> x = res.x, g(n), probe(n);
  double fx = res.value;
  // Returns false when a probe fails; the gradient is then unusable.
  auto gradient = [&](std::vector<double>& out) {
    probe = x;
    for (std::size_t i = 0; i < n; ++i) {
      const double h = opts.gradient_step * std::max(1.0, std::fabs(x[i]));
      probe[i] = x[i] + h;
      const double fp = eval(probe);
      probe[i] = x[i] - h;
      const double fm = eval(probe);
      probe[i] = x[i];
      if (!std::isfinite(fp) || !std::isfinite(fm)) return false;
      out[i] = (fp - fm) / (2.0 * h);
    }
    return true;
  };
  if (!gradient(g)) return res;

  std::vector<double> H(n * n, 0.0);  // inverse Hessian estimate
  for (std::size_t i = 0; i < n; ++i) H[i * n + i] = 1.0;
  bool scaled = false;
  std::vector<double> p(n), xn(n), gn(n), s(n), y(n), Hy(n);

  for (res.iterations = 0; res.iterations < opts.max_iterations; ++res.iterations) {
    double gmax = 0.0;
    for (double v : g) gmax = std::max(gmax, std::fabs(v));
    if (gmax < opts.gradient_tolerance) {
      res.converged = true;
      break;
    }
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc -= H[i * n + j] * g[j];
      p[i] = acc;
    }
    double slope = dot(p, g);
    if (!(slope < 0.0)) {  // lost descent: restart from steepest descent
      for (std::size_t i = 0; i < n; ++i) p[i] = -g[i];
      std::fill(H.begin(), H.end(), 0.0);
      for (std::size_t i = 0; i < n; ++i) H[i * n + i] = 1.0;
      scaled = false;
      slope = dot(p, g);
    }
    double alpha = 1.0, fn = std::numeric_limits<double>::infinity();
    bool accepted = false;
    for (int ls = 0; ls < 30 && res.evaluations < opts.max_evaluations; ++ls) {
      for (std::size_t i = 0; i < n; ++i) xn[i] = x[i] + alpha * p[i];
      fn = eval(xn);
      if (fn <= fx + 1e-4 * alpha * slope) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) break;
    const double gain = fx - fn;
    for (std::size_t i = 0; i < n; ++i) s[i] = xn[i] - x[i];
    x = xn;
    fx = fn;
    res.x = x;
    res.value = fx;
    if (gain < opts.value_tolerance * std::max(1.0, std::fabs(fx))) {
      res.converged = true;
      break;
    }
    if (res.evaluations + 2 * static_cast<int>(n) > opts.max_evaluations || !gradient(gn)) break;
    for (std::size_t i = 0; i < n; ++i) y[i] = gn[i] - g[i];
    g = gn;
    const double sy = dot(s, y);
    if (sy <= 1e-12 * std::sqrt(dot(s, s) * dot(y, y))) continue;
    if (!scaled) {
      const double gamma = sy / dot(y, y);
      for (double& v : H) v *= gamma;
      scaled = true;
    }
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += H[i * n + j] * y[j];
      Hy[i] = acc;
    }
    const double yHy = dot(y, Hy);
    const double rho = 1.0 / sy;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        H[i * n + j] += rho * ((1.0 + rho * yHy) * s[i] * s[j] - Hy[i] * s[j] - s[i] * Hy[j]);
  }
  return res;
}

}  // namespace odesr
