#pragma once

#include <cstddef>

namespace odesr::kernels {

// Row-major GEMM variants. Leading dimensions are row strides. When
// `accumulate` is false C is overwritten, otherwise C += product.
//   nn: C[m x n] = A[m x k] * B[k x n]
//   nt: C[m x n] = A[m x k] * B[n x k]^T
//   tn: C[m x n] = A[k x m]^T * B[k x n]
//
// The default entry points are register-blocked and OpenMP-parallel over
// output tiles. Each output element is owned by one thread and summed in a
// fixed order, so results do not depend on the thread count.
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda, const double* b,
             std::size_t ldb, double* c, std::size_t ldc, bool accumulate);
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda, const double* b,
             std::size_t ldb, double* c, std::size_t ldc, bool accumulate);
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda, const double* b,
             std::size_t ldb, double* c, std::size_t ldc, bool accumulate);

/// Row-wise softmax in place over `cols` entries of each of `rows` rows.
void softmax_rows(std::size_t rows, std::size_t cols, double* x, std::size_t ld);

/// z[i] <- exp(z[i] - shift); returns the sum. Vectorized, fixed summation
/// order. Entries with z[i] - shift < -708 (including -inf) become 0.
double exp_shifted_sum(double* z, std::size_t n, double shift) noexcept;
double max_value(const double* z, std::size_t n) noexcept;

/// Cap on OpenMP threads used by the parallel kernels (0 = runtime default).
void set_max_threads(int threads) noexcept;
int max_threads() noexcept;

namespace reference {
// Plain triple loops, serial. Kept as the oracle for the tuned versions.
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda, const double* b,
             std::size_t ldb, double* c, std::size_t ldc, bool accumulate);
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda, const double* b,
             std::size_t ldb, double* c, std::size_t ldc, bool accumulate);
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda, const double* b,
             std::size_t ldb, double* c, std::size_t ldc, bool accumulate);
void softmax_rows(std::size_t rows, std::size_t cols, double* x, std::size_t ld);
}  // namespace reference

}  // namespace odesr::kernels
