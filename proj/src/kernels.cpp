#include "odesr/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace odesr::kernels {

namespace {

int g_max_threads = 0;

int thread_count() noexcept { return g_max_threads > 0 ? g_max_threads : omp_get_max_threads(); }

constexpr std::size_t MR = 6;
constexpr std::size_t NR = 16;
constexpr std::size_t KC = 256;
// Below this many multiply-adds a parallel region costs more than it saves.
constexpr std::size_t parallel_work = 1u << 16;

using v8 = double __attribute__((vector_size(64)));

inline v8 load8(const double* p) noexcept {
  v8 v;
  __builtin_memcpy(&v, p, sizeof v);
  return v;
}
inline void store8(double* p, v8 v) noexcept { __builtin_memcpy(p, &v, sizeof v); }

// Full MR x NR tile over the whole k range, accumulators held in registers.
template <std::size_t R>
inline void micro_full(std::size_t k, const double* __restrict a, std::size_t lda, const double* __restrict b,
                       std::size_t ldb, double* __restrict c, std::size_t ldc, bool accumulate) {
  v8 lo[R], hi[R];
  for (std::size_t r = 0; r < R; ++r) {
    if (accumulate) {
      lo[r] = load8(c + r * ldc);
      hi[r] = load8(c + r * ldc + 8);
    } else {
      lo[r] = v8{};
      hi[r] = v8{};
    }
  }
  for (std::size_t p = 0; p < k; ++p) {
    const v8 b0 = load8(b + p * ldb);
    const v8 b1 = load8(b + p * ldb + 8);
#pragma GCC unroll 8
    for (std::size_t r = 0; r < R; ++r) {
      const double av = a[r * lda + p];
      lo[r] += av * b0;
      hi[r] += av * b1;
    }
  }
  for (std::size_t r = 0; r < R; ++r) {
    store8(c + r * ldc, lo[r]);
    store8(c + r * ldc + 8, hi[r]);
  }
}

inline void micro_edge(std::size_t rows, std::size_t cols, std::size_t k, const double* a, std::size_t lda,
                       const double* b, std::size_t ldb, double* c, std::size_t ldc, bool accumulate) {
  double acc[MR][NR] = {};
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < cols; ++j) acc[r][j] = accumulate ? c[r * ldc + j] : 0.0;
  for (std::size_t p = 0; p < k; ++p) {
    const double* bp = b + p * ldb;
    for (std::size_t r = 0; r < rows; ++r) {
      const double av = a[r * lda + p];
      for (std::size_t j = 0; j < cols; ++j) acc[r][j] += av * bp[j];
    }
  }
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < cols; ++j) c[r * ldc + j] = acc[r][j];
}

inline void tile(std::size_t i0, std::size_t j0, std::size_t m, std::size_t n, std::size_t k, const double* a,
                 std::size_t lda, const double* b, std::size_t ldb, double* c, std::size_t ldc, bool accumulate) {
  const std::size_t rows = std::min(MR, m - i0);
  const std::size_t cols = std::min(NR, n - j0);
  const double* ap = a + i0 * lda;
  const double* bp = b + j0;
  double* cp = c + i0 * ldc + j0;
  if (cols == NR) {
    switch (rows) {
      case 6: return micro_full<6>(k, ap, lda, bp, ldb, cp, ldc, accumulate);
      case 5: return micro_full<5>(k, ap, lda, bp, ldb, cp, ldc, accumulate);
      case 4: return micro_full<4>(k, ap, lda, bp, ldb, cp, ldc, accumulate);
      case 3: return micro_full<3>(k, ap, lda, bp, ldb, cp, ldc, accumulate);
      case 2: return micro_full<2>(k, ap, lda, bp, ldb, cp, ldc, accumulate);
      default: return micro_full<1>(k, ap, lda, bp, ldb, cp, ldc, accumulate);
    }
  }
  micro_edge(rows, cols, k, ap, lda, bp, ldb, cp, ldc, accumulate);
}

void zero_or_keep(std::size_t m, std::size_t n, double* c, std::size_t ldc, bool accumulate) {
  if (accumulate) return;
  for (std::size_t i = 0; i < m; ++i) std::fill(c + i * ldc, c + i * ldc + n, 0.0);
}

// dst[cols x rows] = src[rows x cols]^T
void transpose(std::size_t rows, std::size_t cols, const double* src, std::size_t ld, std::vector<double>& dst) {
  dst.resize(rows * cols);
  constexpr std::size_t blk = 32;
  for (std::size_t i0 = 0; i0 < rows; i0 += blk)
    for (std::size_t j0 = 0; j0 < cols; j0 += blk)
      for (std::size_t i = i0; i < std::min(rows, i0 + blk); ++i)
        for (std::size_t j = j0; j < std::min(cols, j0 + blk); ++j) dst[j * rows + i] = src[i * ld + j];
}

using v8i = long long __attribute__((vector_size(64)));

// exp for eight lanes: Cody-Waite reduction by ln 2, degree-12 Taylor
// polynomial on |r| <= ln2/2, scaling through the exponent bits. Inputs below
// -708 (including -inf) give 0; relative error about 3e-16 elsewhere.
inline v8 exp8(v8 x) noexcept {
  const v8 lo = v8{} - 708.0;
  const v8 shifter = v8{} + 6755399441055744.0;  // 1.5 * 2^52
  const v8 xc = x < lo ? lo : x;
  const v8 k = xc * 1.4426950408889634074 + shifter;
  const v8 n = k - shifter;
  const v8 r = (xc - n * 6.93147180369123816490e-01) - n * 1.90821492927058770002e-10;
  v8 p = v8{} + 1.0 / 479001600.0;
  p = p * r + 1.0 / 39916800.0;
  p = p * r + 1.0 / 3628800.0;
  p = p * r + 1.0 / 362880.0;
  p = p * r + 1.0 / 40320.0;
  p = p * r + 1.0 / 5040.0;
  p = p * r + 1.0 / 720.0;
  p = p * r + 1.0 / 120.0;
  p = p * r + 1.0 / 24.0;
  p = p * r + 1.0 / 6.0;
  p = p * r + 0.5;
  p = p * r + 1.0;
  p = p * r + 1.0;
  // vector casts of equal size reinterpret the bits
  const v8i bits = (((v8i)k - (v8i)shifter) + 1023) << 52;
  const v8 scale = (v8)bits;
  return x < lo ? v8{} : p * scale;
}

std::vector<double>& scratch(int slot) {
  thread_local std::vector<double> buffers[2];
  return buffers[slot];
}

}  // namespace

double exp_shifted_sum(double* z, std::size_t n, double shift) noexcept {
  v8 acc{};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const v8 e = exp8(load8(z + i) - shift);
    store8(z + i, e);
    acc += e;
  }
  if (i < n) {
    double tail[8];
    std::fill(tail, tail + 8, -std::numeric_limits<double>::infinity());
    std::copy(z + i, z + n, tail);
    const v8 e = exp8(load8(tail) - shift);
    store8(tail, e);
    std::copy(tail, tail + (n - i), z + i);
    acc += e;
  }
  double sum = 0.0;
  for (int j = 0; j < 8; ++j) sum += acc[j];
  return sum;
}

double max_value(const double* z, std::size_t n) noexcept {
  double m = -std::numeric_limits<double>::infinity();
  std::size_t i = 0;
  if (n >= 8) {
    v8 acc = load8(z);
    for (i = 8; i + 8 <= n; i += 8) {
      const v8 x = load8(z + i);
      acc = x > acc ? x : acc;
    }
    for (int j = 0; j < 8; ++j) m = std::max(m, acc[j]);
  }
  for (; i < n; ++i) m = std::max(m, z[i]);
  return m;
}

void set_max_threads(int threads) noexcept { g_max_threads = threads; }
int max_threads() noexcept { return thread_count(); }

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda, const double* b,
             std::size_t ldb, double* c, std::size_t ldc, bool accumulate) {
  if (m == 0 || n == 0) return;
  if (k == 0) return zero_or_keep(m, n, c, ldc, accumulate);
  const std::size_t row_tiles = (m + MR - 1) / MR;
  const std::size_t col_tiles = (n + NR - 1) / NR;
  const auto tiles = static_cast<long long>(row_tiles * col_tiles);
  const bool parallel = m * n * k >= parallel_work && thread_count() > 1;
  // k is split into KC-deep slices so the KC x NR panel of B and the MR x KC
  // block of A stay in cache; column tiles outermost within a slice.
  for (std::size_t p0 = 0; p0 < k; p0 += KC) {
    const std::size_t kc = std::min(KC, k - p0);
    const bool acc = accumulate || p0 > 0;
    const double* ak = a + p0;
    const double* bk = b + p0 * ldb;
#pragma omp parallel for schedule(static) num_threads(thread_count()) if (parallel)
    for (long long t = 0; t < tiles; ++t) {
      const std::size_t jt = static_cast<std::size_t>(t) / row_tiles;
      const std::size_t it = static_cast<std::size_t>(t) % row_tiles;
      tile(it * MR, jt * NR, m, n, kc, ak, lda, bk, ldb, c, ldc, acc);
    }
  }
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda, const double* b,
             std::size_t ldb, double* c, std::size_t ldc, bool accumulate) {
  if (m == 0 || n == 0) return;
  std::vector<double>& bt = scratch(0);
  transpose(n, k, b, ldb, bt);
  gemm_nn(m, n, k, a, lda, bt.data(), n, c, ldc, accumulate);
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda, const double* b,
             std::size_t ldb, double* c, std::size_t ldc, bool accumulate) {
  if (m == 0 || n == 0) return;
  std::vector<double>& at = scratch(1);
  transpose(k, m, a, lda, at);
  gemm_nn(m, n, k, at.data(), k, b, ldb, c, ldc, accumulate);
}

void softmax_rows(std::size_t rows, std::size_t cols, double* x, std::size_t ld) {
  const bool parallel = rows * cols >= parallel_work && thread_count() > 1;
#pragma omp parallel for schedule(static) num_threads(thread_count()) if (parallel)
  for (long long i = 0; i < static_cast<long long>(rows); ++i) {
    double* r = x + static_cast<std::size_t>(i) * ld;
    const double sum = exp_shifted_sum(r, cols, max_value(r, cols));
    const double inv = 1.0 / sum;
    for (std::size_t j = 0; j < cols; ++j) r[j] *= inv;
  }
}

namespace reference {

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda, const double* b,
             std::size_t ldb, double* c, std::size_t ldc, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = accumulate ? c[i * ldc + j] : 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[i * lda + p] * b[p * ldb + j];
      c[i * ldc + j] = s;
    }
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda, const double* b,
             std::size_t ldb, double* c, std::size_t ldc, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = accumulate ? c[i * ldc + j] : 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[i * lda + p] * b[j * ldb + p];
      c[i * ldc + j] = s;
    }
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda, const double* b,
             std::size_t ldb, double* c, std::size_t ldc, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = accumulate ? c[i * ldc + j] : 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[p * lda + i] * b[p * ldb + j];
      c[i * ldc + j] = s;
    }
}

void softmax_rows(std::size_t rows, std::size_t cols, double* x, std::size_t ld) {
  for (std::size_t i = 0; i < rows; ++i) {
    double* r = x + i * ld;
    double mx = r[0];
    for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, r[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < cols; ++j) sum += std::exp(r[j] - mx);
    const double lse = mx + std::log(sum);
    for (std::size_t j = 0; j < cols; ++j) r[j] = std::exp(r[j] - lse);
  }
}

}  // namespace reference

}  // namespace odesr::kernels
