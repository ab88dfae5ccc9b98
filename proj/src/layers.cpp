#include "odesr/layers.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "odesr/kernels.hpp"

namespace odesr::nn {

namespace k = odesr::kernels;

void Linear::init(Rng& rng, double scale) {
  const double sd = scale / std::sqrt(static_cast<double>(w.rows()));
  for (double& x : w.storage()) x = sd * rng.normal();
  b.fill(0.0);
}

void linear_forward(const Linear& p, const Matrix& x, Matrix& y) {
  const std::size_t rows = x.rows(), in = p.w.rows(), out = p.w.cols();
  if (x.cols() != in) throw std::invalid_argument("linear: input width mismatch");
  y.resize(rows, out);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < out; ++j) y(i, j) = p.b(0, j);
  k::gemm_nn(rows, out, in, x.data(), in, p.w.data(), out, y.data(), out, true);
}

void linear_backward(const Linear& p, const Matrix& x, const Matrix& dy, Matrix* dx, Linear& grad) {
  const std::size_t rows = x.rows(), in = p.w.rows(), out = p.w.cols();
  k::gemm_tn(in, out, rows, x.data(), in, dy.data(), out, grad.w.data(), out, true);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < out; ++j) grad.b(0, j) += dy(i, j);
  if (dx) {
    dx->resize(rows, in);
    k::gemm_nt(rows, in, out, dy.data(), out, p.w.data(), out, dx->data(), in, false);
  }
}

void layernorm_forward(const LayerNorm& p, const Matrix& x, Matrix& y, LayerNormCache& cache) {
  const std::size_t rows = x.rows(), n = x.cols();
  y.resize(rows, n);
  cache.xhat.resize(rows, n);
  cache.rstd.assign(rows, 0.0);
  for (std::size_t i = 0; i < rows; ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < n; ++j) mean += x(i, j);
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (x(i, j) - mean) * (x(i, j) - mean);
    var /= static_cast<double>(n);
    const double rstd = 1.0 / std::sqrt(var + layer_norm_eps);
    cache.rstd[i] = rstd;
    for (std::size_t j = 0; j < n; ++j) {
      const double h = (x(i, j) - mean) * rstd;
      cache.xhat(i, j) = h;
      y(i, j) = h * p.g(0, j) + p.b(0, j);
    }
  }
}

void layernorm_backward(const LayerNorm& p, const LayerNormCache& cache, const Matrix& dy, Matrix& dx,
                        LayerNorm& grad) {
  const std::size_t rows = dy.rows(), n = dy.cols();
  dx.resize(rows, n);
  std::vector<double> dh(n);
  for (std::size_t i = 0; i < rows; ++i) {
    double mean_dh = 0.0, mean_dh_h = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double h = cache.xhat(i, j);
      grad.g(0, j) += dy(i, j) * h;
      grad.b(0, j) += dy(i, j);
      dh[j] = dy(i, j) * p.g(0, j);
      mean_dh += dh[j];
      mean_dh_h += dh[j] * h;
    }
    mean_dh /= static_cast<double>(n);
    mean_dh_h /= static_cast<double>(n);
    for (std::size_t j = 0; j < n; ++j) dx(i, j) = cache.rstd[i] * (dh[j] - mean_dh - cache.xhat(i, j) * mean_dh_h);
  }
}

void silu_forward(const Matrix& x, Matrix& y) {
  y.resize(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = x.data()[i];
    y.data()[i] = v / (1.0 + std::exp(-v));
  }
}

void silu_backward(const Matrix& x, const Matrix& dy, Matrix& dx) {
  dx.resize(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = x.data()[i];
    const double s = 1.0 / (1.0 + std::exp(-v));
    dx.data()[i] = dy.data()[i] * s * (1.0 + v * (1.0 - s));
  }
}

namespace {
constexpr double inv_sqrt2 = 0.70710678118654752440;
constexpr double inv_sqrt2pi = 0.39894228040143267794;
}  // namespace

void gelu_forward(const Matrix& x, Matrix& y) {
  y.resize(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = x.data()[i];
    y.data()[i] = 0.5 * v * (1.0 + std::erf(v * inv_sqrt2));
  }
}

void gelu_backward(const Matrix& x, const Matrix& dy, Matrix& dx) {
  dx.resize(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = x.data()[i];
    const double cdf = 0.5 * (1.0 + std::erf(v * inv_sqrt2));
    const double pdf = inv_sqrt2pi * std::exp(-0.5 * v * v);
    dx.data()[i] = dy.data()[i] * (cdf + v * pdf);
  }
}

void add_inplace(Matrix& y, const Matrix& x) {
  for (std::size_t i = 0; i < y.size(); ++i) y.data()[i] += x.data()[i];
}

void attention_forward(const Attention& p, const Matrix& xq, const Matrix& xkv, const std::vector<Segment>& segs,
                       int heads, bool causal, Matrix& out, AttentionCache& cache) {
  const std::size_t d = p.q.w.cols();
  const auto h = static_cast<std::size_t>(heads);
  const std::size_t dh = d / h;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  linear_forward(p.q, xq, cache.q);
  linear_forward(p.k, xkv, cache.k);
  linear_forward(p.v, xkv, cache.v);
  cache.context.resize(xq.rows(), d);

  std::size_t total = 0;
  cache.prob_offsets.clear();
  for (const Segment& s : segs) {
    if (causal && s.q_len != s.k_len) throw std::invalid_argument("causal attention needs square segments");
    cache.prob_offsets.push_back(total);
    total += s.q_len * s.k_len * h;
  }
  cache.probs.assign(total, 0.0);

  for (std::size_t si = 0; si < segs.size(); ++si) {
    const Segment& s = segs[si];
    if (s.q_len == 0) continue;
    for (std::size_t hh = 0; hh < h; ++hh) {
      double* pr = cache.probs.data() + cache.prob_offsets[si] + hh * s.q_len * s.k_len;
      const double* q = cache.q.data() + s.q_begin * d + hh * dh;
      const double* kk = cache.k.data() + s.k_begin * d + hh * dh;
      const double* v = cache.v.data() + s.k_begin * d + hh * dh;
      kernels::gemm_nt(s.q_len, s.k_len, dh, q, d, kk, d, pr, s.k_len, false);
      for (std::size_t i = 0; i < s.q_len; ++i)
        for (std::size_t j = 0; j < s.k_len; ++j)
          pr[i * s.k_len + j] = causal && j > i ? -std::numeric_limits<double>::infinity() : pr[i * s.k_len + j] * scale;
      kernels::softmax_rows(s.q_len, s.k_len, pr, s.k_len);
      kernels::gemm_nn(s.q_len, dh, s.k_len, pr, s.k_len, v, d, cache.context.data() + s.q_begin * d + hh * dh, d,
                       false);
    }
  }
  linear_forward(p.o, cache.context, out);
}

void attention_backward(const Attention& p, const Matrix& xq, const Matrix& xkv, const std::vector<Segment>& segs,
                        int heads, bool causal, const AttentionCache& cache, const Matrix& dout, Matrix& dxq,
                        Matrix& dxkv, Attention& grad) {
  const std::size_t d = p.q.w.cols();
  const auto h = static_cast<std::size_t>(heads);
  const std::size_t dh = d / h;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Matrix dcontext;
  linear_backward(p.o, cache.context, dout, &dcontext, grad.o);

  Matrix dq(xq.rows(), d), dk(xkv.rows(), d), dv(xkv.rows(), d);
  std::vector<double> dp;
  for (std::size_t si = 0; si < segs.size(); ++si) {
    const Segment& s = segs[si];
    if (s.q_len == 0) continue;
    dp.resize(s.q_len * s.k_len);
    for (std::size_t hh = 0; hh < h; ++hh) {
      const double* pr = cache.probs.data() + cache.prob_offsets[si] + hh * s.q_len * s.k_len;
      const std::size_t qo = s.q_begin * d + hh * dh;
      const std::size_t ko = s.k_begin * d + hh * dh;
      // dP = dC V^T ; dV += P^T dC
      kernels::gemm_nt(s.q_len, s.k_len, dh, dcontext.data() + qo, d, cache.v.data() + ko, d, dp.data(), s.k_len,
                       false);
      kernels::gemm_tn(s.k_len, dh, s.q_len, pr, s.k_len, dcontext.data() + qo, d, dv.data() + ko, d, true);
      // dS = P * (dP - rowsum(dP * P)), folded with the score scale.
      for (std::size_t i = 0; i < s.q_len; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < s.k_len; ++j) dot += dp[i * s.k_len + j] * pr[i * s.k_len + j];
        for (std::size_t j = 0; j < s.k_len; ++j)
          dp[i * s.k_len + j] = pr[i * s.k_len + j] * (dp[i * s.k_len + j] - dot) * scale;
      }
      (void)causal;  // masked entries have zero probability, hence zero dS
      kernels::gemm_nn(s.q_len, dh, s.k_len, dp.data(), s.k_len, cache.k.data() + ko, d, dq.data() + qo, d, true);
      kernels::gemm_tn(s.k_len, dh, s.q_len, dp.data(), s.k_len, cache.q.data() + qo, d, dk.data() + ko, d, true);
    }
  }
  linear_backward(p.q, xq, dq, &dxq, grad.q);
  Matrix tmp;
  linear_backward(p.k, xkv, dk, &dxkv, grad.k);
  linear_backward(p.v, xkv, dv, &tmp, grad.v);
  add_inplace(dxkv, tmp);
}

}  // namespace odesr::nn
