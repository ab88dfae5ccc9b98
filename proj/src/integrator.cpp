#include "odesr/integrator.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace odesr {

void Trajectory::validate() const {
  if (times.size() < 2) throw std::invalid_argument("trajectory needs at least 2 points");
  if (states.rows() != times.size()) throw std::invalid_argument("trajectory times/states row mismatch");
  if (states.cols() < 1) throw std::invalid_argument("trajectory has no state dimensions");
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (!std::isfinite(times[i])) throw std::invalid_argument("non-finite time");
    if (i && !(times[i] > times[i - 1])) throw std::invalid_argument("times must strictly increase");
  }
  for (double v : states.storage())
    if (!std::isfinite(v)) throw std::invalid_argument("non-finite state");
}

void IntegrationConfig::validate() const {
  if (!(rtol > 0.0) || !(atol > 0.0)) throw std::invalid_argument("tolerances must be positive");
  if (!(t_end > t_start)) throw std::invalid_argument("t_end must exceed t_start");
  if (min_points < 2 || max_points < min_points) throw std::invalid_argument("bad grid size range");
  if (!(oscillation_window > 0.0 && oscillation_window <= 1.0)) throw std::invalid_argument("bad oscillation window");
}

std::string_view to_string(IntegrationStatus s) noexcept {
  switch (s) {
    case IntegrationStatus::ok: return "ok";
    case IntegrationStatus::non_finite: return "non_finite";
    case IntegrationStatus::step_underflow: return "step_underflow";
    case IntegrationStatus::timeout: return "timeout";
    case IntegrationStatus::step_limit: return "step_limit";
  }
  return "?";
}

std::string_view to_string(FilterReason r) noexcept {
  switch (r) {
    case FilterReason::kept: return "kept";
    case FilterReason::divergent: return "divergent";
    case FilterReason::converged: return "converged";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Compiled evaluation

namespace {

void compile_into(const Expression& e, std::vector<std::uint8_t>& codes, std::vector<std::uint8_t>& ops,
                  std::vector<int>& idx, std::vector<double>& vals) {
  switch (e.kind()) {
    case Expression::Kind::constant:
      codes.push_back(0), ops.push_back(0), idx.push_back(0), vals.push_back(e.value());
      return;
    case Expression::Kind::variable:
      codes.push_back(1), ops.push_back(0), idx.push_back(e.variable_index()), vals.push_back(0.0);
      return;
    case Expression::Kind::unary:
      compile_into(e.child(), codes, ops, idx, vals);
      codes.push_back(2), ops.push_back(static_cast<std::uint8_t>(e.unary_op())), idx.push_back(0),
          vals.push_back(0.0);
      return;
    case Expression::Kind::binary:
      compile_into(e.lhs(), codes, ops, idx, vals);
      compile_into(e.rhs(), codes, ops, idx, vals);
      codes.push_back(3), ops.push_back(static_cast<std::uint8_t>(e.binary_op())), idx.push_back(0),
          vals.push_back(0.0);
      return;
  }
}

}  // namespace

CompiledSystem::CompiledSystem(const OdeSystem& sys) : dimension_(sys.dimension()) {
  for (const Expression& comp : sys.components()) {
    std::vector<std::uint8_t> codes, ops;
    std::vector<int> idx;
    std::vector<double> vals;
    compile_into(comp, codes, ops, idx, vals);
    std::size_t height = 0;
    for (std::size_t i = 0; i < codes.size(); ++i) {
      program_.push_back({codes[i], ops[i], idx[i], vals[i]});
      if (codes[i] <= 1) max_stack_ = std::max(max_stack_, ++height);
      else if (codes[i] == 3) --height;
    }
    ends_.push_back(program_.size());
  }
}

void CompiledSystem::operator()(const double* x, double* dxdt) const noexcept {
  constexpr std::size_t small = 64;
  std::array<double, small> local;
  std::vector<double> heap;
  double* stack = local.data();
  if (max_stack_ > small) {
    heap.resize(max_stack_);
    stack = heap.data();
  }
  std::size_t pc = 0;
  for (int c = 0; c < dimension_; ++c) {
    std::size_t sp = 0;
    const std::size_t end = ends_[static_cast<std::size_t>(c)];
    for (; pc < end; ++pc) {
      const Instr& in = program_[pc];
      switch (in.code) {
        case 0: stack[sp++] = in.value; break;
        case 1: stack[sp++] = x[in.index]; break;
        case 2: stack[sp - 1] = apply(static_cast<UnaryOp>(in.op), stack[sp - 1]); break;
        default:
          --sp;
          stack[sp - 1] = apply(static_cast<BinaryOp>(in.op), stack[sp - 1], stack[sp]);
          break;
      }
    }
    dxdt[c] = stack[0];
  }
}

std::vector<double> linspace(double start, double stop, std::size_t n) {
  std::vector<double> out(n);
  if (n == 0) return out;
  if (n == 1) {
    out[0] = start;
    return out;
  }
  const double step = (stop - start) / static_cast<double>(n - 1);
  for (std::size_t i = 0; i < n; ++i) out[i] = start + static_cast<double>(i) * step;
  out[n - 1] = stop;
  return out;
}

// ---------------------------------------------------------------------------
// Dormand-Prince 5(4)

namespace {

namespace dp {
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                 a65 = -5103.0 / 18656;
constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192, a75 = -2187.0 / 6784, a76 = 11.0 / 84;
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                 e6 = 22.0 / 525, e7 = -1.0 / 40;
constexpr double d1 = -12715105075.0 / 11282082432.0, d3 = 87487479700.0 / 32700410799.0,
                 d4 = -10690763975.0 / 1880347072.0, d5 = 701980252875.0 / 199316789632.0,
                 d6 = -1453857185.0 / 822651844.0, d7 = 69997945.0 / 29380423.0;
}  // namespace dp

bool all_finite(const std::vector<double>& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

struct Stepper {
  const CompiledSystem& f;
  std::size_t n;
  std::vector<double> y, y1, k1, k2, k3, k4, k5, k6, k7, tmp, err;

  explicit Stepper(const CompiledSystem& fn)
      : f(fn), n(static_cast<std::size_t>(fn.dimension())), y(n), y1(n), k1(n), k2(n), k3(n), k4(n), k5(n),
        k6(n), k7(n), tmp(n), err(n) {}

  // Trial step from (y, k1); fills y1, k2..k7. Returns false on non-finite stages.
  bool trial(double h) {
    using namespace dp;
    for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + h * a21 * k1[i];
    f(tmp.data(), k2.data());
    for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + h * (a31 * k1[i] + a32 * k2[i]);
    f(tmp.data(), k3.data());
    for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + h * (a41 * k1[i] + a42 * k2[i] + a43 * k3[i]);
    f(tmp.data(), k4.data());
    for (std::size_t i = 0; i < n; ++i)
      tmp[i] = y[i] + h * (a51 * k1[i] + a52 * k2[i] + a53 * k3[i] + a54 * k4[i]);
    f(tmp.data(), k5.data());
    for (std::size_t i = 0; i < n; ++i)
      tmp[i] = y[i] + h * (a61 * k1[i] + a62 * k2[i] + a63 * k3[i] + a64 * k4[i] + a65 * k5[i]);
    f(tmp.data(), k6.data());
    for (std::size_t i = 0; i < n; ++i)
      y1[i] = y[i] + h * (a71 * k1[i] + a73 * k3[i] + a74 * k4[i] + a75 * k5[i] + a76 * k6[i]);
    f(y1.data(), k7.data());
    for (std::size_t i = 0; i < n; ++i)
      err[i] = h * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] + e7 * k7[i]);
    return all_finite(y1) && all_finite(k7) && all_finite(err);
  }

  double error_norm(double rtol, double atol) const {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double sc = atol + rtol * std::max(std::fabs(y[i]), std::fabs(y1[i]));
      const double r = err[i] / sc;
      acc += r * r;
    }
    return std::sqrt(acc / static_cast<double>(n));
  }

  // Fourth-order continuous extension over the accepted step [t, t + h].
  void dense(double h, double theta, double* out) const {
    using namespace dp;
    const double theta1 = 1.0 - theta;
    for (std::size_t i = 0; i < n; ++i) {
      const double ydiff = y1[i] - y[i];
      const double bspl = h * k1[i] - ydiff;
      const double r4 = ydiff - h * k7[i] - bspl;
      const double r5 = h * (d1 * k1[i] + d3 * k3[i] + d4 * k4[i] + d5 * k5[i] + d6 * k6[i] + d7 * k7[i]);
      out[i] = y[i] + theta * (ydiff + theta1 * (bspl + theta * (r4 + theta1 * r5)));
    }
  }
};

double initial_step(Stepper& s, double span, double rtol, double atol) {
  double d0 = 0.0, d1 = 0.0;
  for (std::size_t i = 0; i < s.n; ++i) {
    const double sc = atol + rtol * std::fabs(s.y[i]);
    d0 += (s.y[i] / sc) * (s.y[i] / sc);
    d1 += (s.k1[i] / sc) * (s.k1[i] / sc);
  }
  d0 = std::sqrt(d0 / static_cast<double>(s.n));
  d1 = std::sqrt(d1 / static_cast<double>(s.n));
  double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
  h0 = std::min(h0, span);
  for (std::size_t i = 0; i < s.n; ++i) s.tmp[i] = s.y[i] + h0 * s.k1[i];
  s.f(s.tmp.data(), s.k2.data());
  double d2 = 0.0;
  for (std::size_t i = 0; i < s.n; ++i) {
    const double sc = atol + rtol * std::fabs(s.y[i]);
    const double r = (s.k2[i] - s.k1[i]) / sc;
    d2 += r * r;
  }
  d2 = std::sqrt(d2 / static_cast<double>(s.n)) / h0;
  double h1;
  if (!std::isfinite(d2)) h1 = h0 * 1e-3;
  else if (std::max(d1, d2) <= 1e-15) h1 = std::max(1e-6, h0 * 1e-3);
  else h1 = std::pow(0.01 / std::max(d1, d2), 1.0 / 5.0);
  return std::min({100.0 * h0, h1, span});
}

}  // namespace

IntegrationResult integrate(const OdeSystem& sys, std::span<const double> x0, std::span<const double> times,
                            const IntegrationConfig& cfg) {
  const auto dim = static_cast<std::size_t>(sys.dimension());
  if (x0.size() != dim) throw std::invalid_argument("initial condition length does not match dimension");
  if (times.size() < 2) throw std::invalid_argument("need at least two output times");
  for (std::size_t i = 1; i < times.size(); ++i)
    if (!(times[i] > times[i - 1])) throw std::invalid_argument("output times must strictly increase");

  IntegrationResult result;
  result.trajectory.times.assign(times.begin(), times.end());
  result.trajectory.states.resize(times.size(), dim);
  for (double v : x0)
    if (!std::isfinite(v)) {
      result.status = IntegrationStatus::non_finite;
      return result;
    }

  const CompiledSystem f(sys);
  Stepper s(f);
  std::copy(x0.begin(), x0.end(), s.y.begin());
  f(s.y.data(), s.k1.data());
  if (!all_finite(s.k1)) {
    result.status = IntegrationStatus::non_finite;
    return result;
  }

  double t = times.front();
  const double t_final = times.back();
  const double span = t_final - t;
  const double h_min = 1e-12 * span;
  std::copy(x0.begin(), x0.end(), result.trajectory.states.row(0).begin());
  std::size_t next_out = 1;

  double h = initial_step(s, span, cfg.rtol, cfg.atol);
  bool last_rejected = false;
  bool last_non_finite = false;
  const auto started = std::chrono::steady_clock::now();
  std::size_t iterations = 0;

  while (next_out < times.size()) {
    if (++iterations % 64 == 0) {
      const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - started;
      if (elapsed.count() > cfg.wall_timeout_seconds) {
        result.status = IntegrationStatus::timeout;
        return result;
      }
    }
    if (result.accepted_steps + result.rejected_steps >= cfg.max_steps) {
      result.status = IntegrationStatus::step_limit;
      return result;
    }
    if (h < h_min) {
      result.status = last_non_finite ? IntegrationStatus::non_finite : IntegrationStatus::step_underflow;
      return result;
    }
    const bool final_step = t + h >= t_final;
    if (final_step) h = t_final - t;

    const bool finite = s.trial(h);
    const double err = finite ? s.error_norm(cfg.rtol, cfg.atol) : std::numeric_limits<double>::infinity();
    last_non_finite = !finite;
    if (!(err <= 1.0)) {
      ++result.rejected_steps;
      const double factor = finite ? std::max(0.2, 0.9 * std::pow(err, -0.2)) : 0.2;
      h *= std::min(1.0, factor);
      last_rejected = true;
      continue;
    }

    ++result.accepted_steps;
    const double t_new = final_step ? t_final : t + h;
    while (next_out < times.size() && times[next_out] <= t_new) {
      double* out = result.trajectory.states.row(next_out).data();
      if (times[next_out] == t_new) std::copy(s.y1.begin(), s.y1.end(), out);
      else s.dense(h, (times[next_out] - t) / h, out);
      for (std::size_t i = 0; i < dim; ++i)
        if (!std::isfinite(out[i])) {
          result.status = IntegrationStatus::non_finite;
          return result;
        }
      ++next_out;
    }
    t = t_new;
    std::swap(s.y, s.y1);
    std::swap(s.k1, s.k7);

    double factor = err == 0.0 ? 10.0 : std::clamp(0.9 * std::pow(err, -0.2), 0.2, 10.0);
    if (last_rejected) factor = std::min(1.0, factor);
    last_rejected = false;
    h *= factor;
  }
  return result;
}

IntegrationResult integrate_on_grid(const OdeSystem& sys, std::span<const double> x0, std::size_t n_points,
                                    const IntegrationConfig& cfg) {
  const std::vector<double> grid = linspace(cfg.t_start, cfg.t_end, n_points);
  return integrate(sys, x0, grid, cfg);
}

std::vector<double> integrate_fixed_step(const OdeSystem& sys, std::span<const double> x0, double t0, double t1,
                                         std::size_t steps) {
  if (steps == 0) throw std::invalid_argument("steps must be positive");
  const CompiledSystem f(sys);
  Stepper s(f);
  std::copy(x0.begin(), x0.end(), s.y.begin());
  const double h = (t1 - t0) / static_cast<double>(steps);
  f(s.y.data(), s.k1.data());
  for (std::size_t k = 0; k < steps; ++k) {
    s.trial(h);
    std::swap(s.y, s.y1);
    std::swap(s.k1, s.k7);
  }
  return s.y;
}

std::vector<double> sample_initial_condition(int dimension, double gamma, Rng& rng) {
  if (dimension < 1) throw std::invalid_argument("dimension must be >= 1");
  if (!(gamma > 0.0)) throw std::invalid_argument("gamma must be positive");
  const double sd = std::sqrt(gamma);
  std::vector<double> x(static_cast<std::size_t>(dimension));
  for (double& v : x) v = sd * rng.normal();
  return x;
}

std::vector<double> oscillation(const Trajectory& traj, double window_fraction) {
  if (!(window_fraction > 0.0 && window_fraction <= 1.0)) throw std::invalid_argument("bad window fraction");
  const std::size_t n = traj.size();
  const auto d = static_cast<std::size_t>(traj.dimension());
  std::vector<double> out(d, 0.0);
  if (n == 0) return out;
  const auto start = static_cast<std::size_t>(std::floor((1.0 - window_fraction) * static_cast<double>(n - 1)));
  for (std::size_t j = 0; j < d; ++j) {
    double lo = traj.states(start, j), hi = lo;
    for (std::size_t i = start + 1; i < n; ++i) {
      lo = std::min(lo, traj.states(i, j));
      hi = std::max(hi, traj.states(i, j));
    }
    out[j] = hi - lo;
  }
  return out;
}

FilterDecision passes_filters(const Trajectory& traj, const IntegrationConfig& cfg, Rng& rng) {
  for (double v : traj.states.storage())
    if (!(std::fabs(v) <= cfg.divergence_threshold)) return {false, FilterReason::divergent};
  const std::vector<double> osc = oscillation(traj, cfg.oscillation_window);
  const bool converged =
      std::all_of(osc.begin(), osc.end(), [&](double o) { return o < cfg.oscillation_threshold; });
  if (converged && !rng.bernoulli(cfg.converged_keep_probability)) return {false, FilterReason::converged};
  return {true, FilterReason::kept};
}

}  // namespace odesr
