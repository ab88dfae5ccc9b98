#pragma once

#include <cstddef>
#include <vector>

#include "odesr/matrix.hpp"
#include "odesr/random.hpp"

namespace odesr::nn {

/// y = x W + b with W: in x out, b: 1 x out.
struct Linear {
  Matrix w;
  Matrix b;

  Linear() = default;
  Linear(std::size_t in, std::size_t out) : w(in, out), b(1, out) {}
  void init(Rng& rng, double scale = 1.0);
};

void linear_forward(const Linear& p, const Matrix& x, Matrix& y);
/// Accumulates parameter gradients into `grad`; writes dx when non-null.
void linear_backward(const Linear& p, const Matrix& x, const Matrix& dy, Matrix* dx, Linear& grad);

struct LayerNorm {
  Matrix g;
  Matrix b;

  LayerNorm() = default;
  explicit LayerNorm(std::size_t width) : g(1, width, 1.0), b(1, width) {}
};

struct LayerNormCache {
  Matrix xhat;
  std::vector<double> rstd;
};

inline constexpr double layer_norm_eps = 1e-5;

void layernorm_forward(const LayerNorm& p, const Matrix& x, Matrix& y, LayerNormCache& cache);
void layernorm_backward(const LayerNorm& p, const LayerNormCache& cache, const Matrix& dy, Matrix& dx,
                        LayerNorm& grad);

void silu_forward(const Matrix& x, Matrix& y);
void silu_backward(const Matrix& x, const Matrix& dy, Matrix& dx);
void gelu_forward(const Matrix& x, Matrix& y);
void gelu_backward(const Matrix& x, const Matrix& dy, Matrix& dx);

/// Query rows [q_begin, q_begin + q_len) attend to key rows [k_begin, k_begin + k_len).
struct Segment {
  std::size_t q_begin, q_len, k_begin, k_len;
};

struct Attention {
  Linear q, k, v, o;

  Attention() = default;
  explicit Attention(std::size_t width) : q(width, width), k(width, width), v(width, width), o(width, width) {}
};

struct AttentionCache {
  Matrix q, k, v, context;
  std::vector<double> probs;              // softmax weights, all segments and heads
  std::vector<std::size_t> prob_offsets;  // per segment
};

/// Multi-head scaled dot-product attention. With `causal`, query i of a
/// segment sees keys 0..i of the same segment (requires q_len == k_len).
void attention_forward(const Attention& p, const Matrix& xq, const Matrix& xkv, const std::vector<Segment>& segs,
                       int heads, bool causal, Matrix& out, AttentionCache& cache);
/// Writes dxq and dxkv (both overwritten) and accumulates into `grad`.
void attention_backward(const Attention& p, const Matrix& xq, const Matrix& xkv, const std::vector<Segment>& segs,
                        int heads, bool causal, const AttentionCache& cache, const Matrix& dout, Matrix& dxq,
                        Matrix& dxkv, Attention& grad);

void add_inplace(Matrix& y, const Matrix& x);

}  // namespace odesr::nn
