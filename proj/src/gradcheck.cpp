#include "odesr/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace odesr {

ModelConfig tiny_model_config(std::uint64_t seed) {
  ModelConfig c;
  c.d_model = 16;
  c.n_heads = 2;
  c.enc_layers = 1;
  c.dec_layers = 1;
  c.ffn_multiplier = 2;
  c.max_dimension = 2;
  c.max_target_length = 32;
  c.seed = seed;
  return c;
}

std::vector<TrainingExample> random_training_batch(const Vocabulary& vocab, int max_dimension, std::size_t count,
                                                   Rng& rng) {
  std::vector<TrainingExample> out;
  for (std::size_t b = 0; b < count; ++b) {
    TrainingExample ex;
    ex.grid.dimension = static_cast<int>(rng.uniform_int(1, max_dimension));
    ex.grid.points = static_cast<std::size_t>(rng.uniform_int(3, 7));
    for (std::size_t i = 0; i < ex.grid.points * ex.grid.point_width(); i += 3) {
      ex.grid.tokens.push_back(rng.bernoulli(0.5) ? Vocabulary::plus : Vocabulary::minus);
      ex.grid.tokens.push_back(Vocabulary::mantissa_id(static_cast<int>(rng.uniform_int(1000, 9999))));
      ex.grid.tokens.push_back(Vocabulary::exponent_id(static_cast<int>(rng.uniform_int(-5, 5))));
    }
    const auto len = static_cast<std::size_t>(rng.uniform_int(3, 9));
    ex.target.push_back(Vocabulary::bos);
    for (std::size_t t = 0; t < len; ++t)
      ex.target.push_back(static_cast<int>(rng.uniform_int(Vocabulary::separator, vocab.size() - 1)));
    ex.target.push_back(Vocabulary::eos);
    out.push_back(std::move(ex));
  }
  return out;
}

namespace {

// Below this a central difference at h ~ 1e-5 is roundoff.
constexpr double zero_gradient = 1e-9;

}  // namespace

double relative_error(double analytic, double numeric, double floor) noexcept {
  return std::fabs(analytic - numeric) / std::max({std::fabs(analytic), std::fabs(numeric), floor});
}

GradCheckReport gradient_check(const Model& model, std::span<const TrainingExample> batch, double h,
                               int samples_per_block, Rng& rng) {
  ModelParams grads = model.params().zeros_like();
  batch_loss(model, batch, &grads);

  Model probe = model;
  std::vector<std::pair<std::string, Matrix*>> tensors;
  probe.params().visit([&](const std::string& name, Matrix& m) { tensors.emplace_back(name, &m); });
  std::vector<const Matrix*> grad_tensors;
  grads.visit([&](const std::string&, const Matrix& m) { grad_tensors.push_back(&m); });

  GradCheckReport report;
  for (std::size_t t = 0; t < tensors.size(); ++t) {
    Matrix& w = *tensors[t].second;
    const Matrix& gw = *grad_tensors[t];
    std::vector<std::size_t> nonzero;
    for (std::size_t i = 0; i < gw.size(); ++i)
      if (std::fabs(gw.data()[i]) > zero_gradient) nonzero.push_back(i);
    std::vector<std::size_t> picks;
    const auto want = static_cast<std::size_t>(samples_per_block);
    if (nonzero.empty()) {
      for (std::size_t s = 0; s < want && w.size(); ++s)
        picks.push_back(static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(w.size()) - 1)));
    } else {
      std::vector<std::size_t> pool;
      for (std::size_t s = 0; s < 4 * want; ++s)
        pool.push_back(nonzero[static_cast<std::size_t>(
            rng.uniform_int(0, static_cast<std::int64_t>(nonzero.size()) - 1))]);
      std::sort(pool.begin(), pool.end());
      pool.erase(std::unique(pool.begin(), pool.end()), pool.end());
      std::stable_sort(pool.begin(), pool.end(), [&](std::size_t a, std::size_t b) {
        return std::fabs(gw.data()[a]) > std::fabs(gw.data()[b]);
      });
      pool.resize(std::min(pool.size(), want));
      picks = pool;
    }
    for (std::size_t idx : picks) {
      const double saved = w.data()[idx];
      w.data()[idx] = saved + h;
      const double up = batch_loss(probe, batch, nullptr).loss;
      w.data()[idx] = saved - h;
      const double down = batch_loss(probe, batch, nullptr).loss;
      w.data()[idx] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = gw.data()[idx];
      // both at roundoff level (e.g. key biases, whose gradient is exactly
      // zero because softmax ignores per-query shifts)
      const bool both_zero = std::max(std::fabs(analytic), std::fabs(numeric)) < zero_gradient;
      const double rel = both_zero ? 0.0 : relative_error(analytic, numeric);
      report.entries.push_back({tensors[t].first, idx, analytic, numeric, rel});
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_block = tensors[t].first;
      }
    }
    ++report.blocks_checked;
  }
  return report;
}

double linear_head_gradient_check(Rng& rng, double h) {
  const std::size_t rows = 5, in = 7, out = 4;
  nn::Linear layer(in, out);
  layer.init(rng);
  for (double& b : layer.b.storage()) b = rng.normal();
  Matrix x(rows, in), coeff(rows, out);
  for (double& v : x.storage()) v = rng.normal();
  for (double& v : coeff.storage()) v = rng.normal();

  auto loss = [&](const nn::Linear& l) {
    Matrix y;
    nn::linear_forward(l, x, y);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += coeff.data()[i] * y.data()[i];
    return s;
  };
  nn::Linear grad(in, out);
  nn::linear_backward(layer, x, coeff, nullptr, grad);

  double worst = 0.0;
  auto check = [&](Matrix& param, const Matrix& g) {
    for (std::size_t i = 0; i < param.size(); ++i) {
      const double saved = param.data()[i];
      param.data()[i] = saved + h;
      const double up = loss(layer);
      param.data()[i] = saved - h;
      const double down = loss(layer);
      param.data()[i] = saved;
      worst = std::max(worst, relative_error(g.data()[i], (up - down) / (2.0 * h)));
    }
  };
  check(layer.w, grad.w);
  check(layer.b, grad.b);
  return worst;
}

}  // namespace odesr
