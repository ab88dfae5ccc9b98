#pragma once

#include <functional>
#include <span>
#include <vector>

namespace odesr {

struct BfgsOptions {
  int max_iterations = 50;
  int max_evaluations = 600;
  /// Central-difference step, relative: h_i = gradient_step * max(1, |x_i|).
  double gradient_step = 1e-5;
  double gradient_tolerance = 1e-7;  // stop when max |g_i| falls below
  double value_tolerance = 1e-12;    // stop when an accepted step gains less
};

struct BfgsResult {
  std::vector<double> x;
  double value = 0.0;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
};

/// Quasi-Newton minimization with finite-difference gradients and an Armijo
/// backtracking line search. Non-finite objective values count as failed
/// trials. The returned point is the best one evaluated (never worse than x0).
BfgsResult minimize_bfgs(const std::function<double(std::span<const double>)>& f, std::vector<double> x0,
                         const BfgsOptions& opts = {});

}  // namespace odesr
