#pragma once

#include <cmath>

#include "odesr/matrix.hpp"

namespace odesr {

/// Variance-weighted coefficient of determination over N x D matrices.
/// Per-dimension scores are weighted by the variance of y_true, which reduces
/// to 1 - sum(SS_res) / sum(SS_tot). Returns NaN (the invalid marker) when
/// y_pred holds a non-finite entry. Throws std::invalid_argument on shape
/// mismatch or when y_true is constant in every dimension.
double r2_score(const Matrix& y_true, const Matrix& y_pred);

inline bool is_valid_score(double r2) noexcept { return !std::isnan(r2); }

}  // namespace odesr
