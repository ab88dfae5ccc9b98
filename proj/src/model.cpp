#include "odesr/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "odesr/kernels.hpp"

namespace odesr {

void ModelConfig::validate() const {
  if (d_model < 1 || n_heads < 1 || d_model % n_heads != 0)
    throw std::invalid_argument("d_model must be a positive multiple of n_heads");
  if (enc_layers < 0 || dec_layers < 0) throw std::invalid_argument("layer counts must be >= 0");
  if (ffn_multiplier < 1) throw std::invalid_argument("ffn_multiplier must be >= 1");
  if (max_dimension < 1) throw std::invalid_argument("max_dimension must be >= 1");
  if (max_target_length < 2) throw std::invalid_argument("max_target_length must be >= 2");
}

// ---------------------------------------------------------------------------
// Parameter enumeration

namespace {

template <class Params, class F>
void visit_impl(Params& p, F& f) {
  auto linear = [&](const std::string& name, auto& l) {
    f(name + ".w", l.w);
    f(name + ".b", l.b);
  };
  auto norm = [&](const std::string& name, auto& n) {
    f(name + ".g", n.g);
    f(name + ".b", n.b);
  };
  auto attention = [&](const std::string& name, auto& a) {
    linear(name + ".q", a.q);
    linear(name + ".k", a.k);
    linear(name + ".v", a.v);
    linear(name + ".o", a.o);
  };
  f(std::string("enc_embedding"), p.enc_embedding);
  linear("embed1", p.embed1);
  linear("embed2", p.embed2);
  for (std::size_t i = 0; i < p.encoder.size(); ++i) {
    const std::string base = "encoder." + std::to_string(i);
    auto& l = p.encoder[i];
    norm(base + ".ln1", l.ln1);
    attention(base + ".attn", l.attn);
    norm(base + ".ln2", l.ln2);
    linear(base + ".ff1", l.ff1);
    linear(base + ".ff2", l.ff2);
  }
  norm("enc_norm", p.enc_norm);
  f(std::string("dec_embedding"), p.dec_embedding);
  f(std::string("dec_position"), p.dec_position);
  for (std::size_t i = 0; i < p.decoder.size(); ++i) {
    const std::string base = "decoder." + std::to_string(i);
    auto& l = p.decoder[i];
    norm(base + ".ln1", l.ln1);
    attention(base + ".self_attn", l.self_attn);
    norm(base + ".ln2", l.ln2);
    attention(base + ".cross_attn", l.cross_attn);
    norm(base + ".ln3", l.ln3);
    linear(base + ".ff1", l.ff1);
    linear(base + ".ff2", l.ff2);
  }
  norm("dec_norm", p.dec_norm);
  linear("output", p.output);
}

}  // namespace

void ModelParams::visit(const std::function<void(const std::string&, Matrix&)>& f) { visit_impl(*this, f); }

void ModelParams::visit(const std::function<void(const std::string&, const Matrix&)>& f) const {
  visit_impl(*this, f);
}

ModelParams ModelParams::zeros_like() const {
  ModelParams z = *this;
  z.set_zero();
  return z;
}

void ModelParams::set_zero() {
  visit([](const std::string&, Matrix& m) { m.fill(0.0); });
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  visit([&](const std::string&, const Matrix& m) { n += m.size(); });
  return n;
}

namespace {

ModelParams allocate(const ModelConfig& cfg, std::size_t vocab) {
  const auto d = static_cast<std::size_t>(cfg.d_model);
  const std::size_t ff = d * static_cast<std::size_t>(cfg.ffn_multiplier);
  const std::size_t slots = 3 * static_cast<std::size_t>(cfg.max_dimension + 1);
  ModelParams p;
  p.enc_embedding.resize(vocab, d);
  p.embed1 = nn::Linear(slots * d, d);
  p.embed2 = nn::Linear(d, d);
  for (int i = 0; i < cfg.enc_layers; ++i)
    p.encoder.push_back({nn::LayerNorm(d), nn::Attention(d), nn::LayerNorm(d), nn::Linear(d, ff), nn::Linear(ff, d)});
  p.enc_norm = nn::LayerNorm(d);
  p.dec_embedding.resize(vocab, d);
  p.dec_position.resize(static_cast<std::size_t>(cfg.max_target_length), d);
  for (int i = 0; i < cfg.dec_layers; ++i)
    p.decoder.push_back({nn::LayerNorm(d), nn::Attention(d), nn::LayerNorm(d), nn::Attention(d), nn::LayerNorm(d),
                         nn::Linear(d, ff), nn::Linear(ff, d)});
  p.dec_norm = nn::LayerNorm(d);
  p.output = nn::Linear(d, vocab);
  return p;
}

void initialize(ModelParams& p, Rng& rng) {
  for (double& x : p.enc_embedding.storage()) x = rng.normal();
  p.embed1.init(rng);
  p.embed2.init(rng);
  auto attention = [&](nn::Attention& a) {
    a.q.init(rng);
    a.k.init(rng);
    a.v.init(rng);
    a.o.init(rng);
  };
  for (EncoderLayer& l : p.encoder) {
    attention(l.attn);
    l.ff1.init(rng);
    l.ff2.init(rng);
  }
  for (double& x : p.dec_embedding.storage()) x = rng.normal();
  for (double& x : p.dec_position.storage()) x = rng.normal();
  for (DecoderLayer& l : p.decoder) {
    attention(l.self_attn);
    attention(l.cross_attn);
    l.ff1.init(rng);
    l.ff2.init(rng);
  }
  p.output.init(rng);
}

}  // namespace

Model::Model(const ModelConfig& cfg) : cfg_(cfg), vocab_(cfg.max_dimension) {
  cfg_.validate();
  params_ = allocate(cfg_, static_cast<std::size_t>(vocab_.size()));
  Rng rng(cfg_.seed);
  initialize(params_, rng);
}

Model::Model(const ModelConfig& cfg, ModelParams params) : cfg_(cfg), vocab_(cfg.max_dimension) {
  cfg_.validate();
  ModelParams shape = allocate(cfg_, static_cast<std::size_t>(vocab_.size()));
  std::vector<std::pair<std::size_t, std::size_t>> want, got;
  shape.visit([&](const std::string&, const Matrix& m) { want.emplace_back(m.rows(), m.cols()); });
  params.visit([&](const std::string&, const Matrix& m) { got.emplace_back(m.rows(), m.cols()); });
  if (want != got) throw std::invalid_argument("parameter shapes do not match the model config");
  params_ = std::move(params);
}

// ---------------------------------------------------------------------------
// Forward / backward over packed batches

std::vector<int> padded_point_tokens(const TokenGrid& grid, int max_dimension) {
  if (grid.dimension > max_dimension) throw std::invalid_argument("trajectory dimension exceeds D_max");
  const std::size_t slots = 3 * static_cast<std::size_t>(max_dimension + 1);
  std::vector<int> out(grid.points * slots, Vocabulary::pad);
  for (std::size_t i = 0; i < grid.points; ++i)
    std::copy(grid.point(i), grid.point(i) + grid.point_width(), out.begin() + static_cast<std::ptrdiff_t>(i * slots));
  return out;
}

namespace {

struct EncoderLayerCache {
  Matrix n1, attn_out, n2, f1, g;
  nn::LayerNormCache ln1, ln2;
  nn::AttentionCache attn;
};

struct DecoderLayerCache {
  Matrix n1, n2, n3, f1, g;
  nn::LayerNormCache ln1, ln2, ln3;
  nn::AttentionCache self_attn, cross_attn;
};

struct Forward {
  // encoder side
  std::vector<int> enc_tokens;  // rows x slots, vacant entries already PAD
  std::vector<nn::Segment> enc_segs;
  Matrix x0, h1, a1;
  std::vector<EncoderLayerCache> enc;
  nn::LayerNormCache enc_norm;
  Matrix memory;
  // decoder side
  std::vector<int> dec_tokens, dec_positions;
  std::vector<nn::Segment> dec_segs, cross_segs;
  std::vector<DecoderLayerCache> dec;
  nn::LayerNormCache dec_norm;
  Matrix dec_out, logits;
};

struct DecoderInput {
  const TokenGrid* grid;
  std::span<const int> tokens;
};

void embed_rows(const Model& model, Forward& fw) {
  const ModelParams& p = model.params();
  const auto d = static_cast<std::size_t>(model.config().d_model);
  const std::size_t slots = 3 * static_cast<std::size_t>(model.config().max_dimension + 1);
  const std::size_t rows = fw.enc_tokens.size() / slots;
  fw.x0.resize(rows, slots * d);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t s = 0; s < slots; ++s) {
      const auto tok = static_cast<std::size_t>(fw.enc_tokens[r * slots + s]);
      std::copy_n(p.enc_embedding.data() + tok * d, d, fw.x0.data() + r * slots * d + s * d);
    }
  nn::linear_forward(p.embed1, fw.x0, fw.h1);
  nn::silu_forward(fw.h1, fw.a1);
}

Matrix run_encoder(const Model& model, Forward& fw) {
  const ModelParams& p = model.params();
  const int heads = model.config().n_heads;
  embed_rows(model, fw);
  Matrix x;
  nn::linear_forward(p.embed2, fw.a1, x);
  fw.enc.resize(p.encoder.size());
  for (std::size_t l = 0; l < p.encoder.size(); ++l) {
    const EncoderLayer& L = p.encoder[l];
    EncoderLayerCache& c = fw.enc[l];
    nn::layernorm_forward(L.ln1, x, c.n1, c.ln1);
    nn::attention_forward(L.attn, c.n1, c.n1, fw.enc_segs, heads, false, c.attn_out, c.attn);
    nn::add_inplace(x, c.attn_out);
    nn::layernorm_forward(L.ln2, x, c.n2, c.ln2);
    nn::linear_forward(L.ff1, c.n2, c.f1);
    nn::gelu_forward(c.f1, c.g);
    Matrix f2;
    nn::linear_forward(L.ff2, c.g, f2);
    nn::add_inplace(x, f2);
  }
  Matrix memory;
  nn::layernorm_forward(p.enc_norm, x, memory, fw.enc_norm);
  return memory;
}

void run_decoder(const Model& model, Forward& fw) {
  const ModelParams& p = model.params();
  const int heads = model.config().n_heads;
  const auto d = static_cast<std::size_t>(model.config().d_model);
  const std::size_t rows = fw.dec_tokens.size();
  Matrix y(rows, d);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto tok = static_cast<std::size_t>(fw.dec_tokens[r]);
    const auto pos = static_cast<std::size_t>(fw.dec_positions[r]);
    for (std::size_t j = 0; j < d; ++j) y(r, j) = p.dec_embedding(tok, j) + p.dec_position(pos, j);
  }
  fw.dec.resize(p.decoder.size());
  for (std::size_t l = 0; l < p.decoder.size(); ++l) {
    const DecoderLayer& L = p.decoder[l];
    DecoderLayerCache& c = fw.dec[l];
    Matrix tmp;
    nn::layernorm_forward(L.ln1, y, c.n1, c.ln1);
    nn::attention_forward(L.self_attn, c.n1, c.n1, fw.dec_segs, heads, true, tmp, c.self_attn);
    nn::add_inplace(y, tmp);
    nn::layernorm_forward(L.ln2, y, c.n2, c.ln2);
    nn::attention_forward(L.cross_attn, c.n2, fw.memory, fw.cross_segs, heads, false, tmp, c.cross_attn);
    nn::add_inplace(y, tmp);
    nn::layernorm_forward(L.ln3, y, c.n3, c.ln3);
    nn::linear_forward(L.ff1, c.n3, c.f1);
    nn::gelu_forward(c.f1, c.g);
    nn::linear_forward(L.ff2, c.g, tmp);
    nn::add_inplace(y, tmp);
  }
  nn::layernorm_forward(p.dec_norm, y, fw.dec_out, fw.dec_norm);
  nn::linear_forward(p.output, fw.dec_out, fw.logits);
}

void forward(const Model& model, std::span<const DecoderInput> inputs, Forward& fw) {
  const ModelConfig& cfg = model.config();
  const std::size_t slots = 3 * static_cast<std::size_t>(cfg.max_dimension + 1);
  fw.enc_tokens.clear();
  fw.enc_segs.clear();
  fw.dec_tokens.clear();
  fw.dec_positions.clear();
  fw.dec_segs.clear();
  fw.cross_segs.clear();
  std::size_t enc_rows = 0, dec_rows = 0;
  for (const DecoderInput& in : inputs) {
    const std::vector<int> toks = padded_point_tokens(*in.grid, cfg.max_dimension);
    if (in.grid->points == 0) throw std::invalid_argument("empty trajectory");
    if (in.tokens.size() > static_cast<std::size_t>(cfg.max_target_length))
      throw std::length_error("target longer than max_target_length");
    fw.enc_tokens.insert(fw.enc_tokens.end(), toks.begin(), toks.end());
    fw.enc_segs.push_back({enc_rows, in.grid->points, enc_rows, in.grid->points});
    for (std::size_t t = 0; t < in.tokens.size(); ++t) {
      const int tok = in.tokens[t];
      if (tok < 0 || tok >= model.vocab_size()) throw std::out_of_range("decoder token outside vocabulary");
      fw.dec_tokens.push_back(tok);
      fw.dec_positions.push_back(static_cast<int>(t));
    }
    fw.dec_segs.push_back({dec_rows, in.tokens.size(), dec_rows, in.tokens.size()});
    fw.cross_segs.push_back({dec_rows, in.tokens.size(), enc_rows, in.grid->points});
    enc_rows += in.grid->points;
    dec_rows += in.tokens.size();
  }
  (void)slots;
  fw.memory = run_encoder(model, fw);
  run_decoder(model, fw);
}

void backward(const Model& model, Forward& fw, const Matrix& dlogits, ModelParams& g) {
  const ModelParams& p = model.params();
  const ModelConfig& cfg = model.config();
  const int heads = cfg.n_heads;
  const auto d = static_cast<std::size_t>(cfg.d_model);

  Matrix dy, tmp, tmp2, dn;
  nn::linear_backward(p.output, fw.dec_out, dlogits, &dn, g.output);
  nn::layernorm_backward(p.dec_norm, fw.dec_norm, dn, dy, g.dec_norm);
  Matrix dmemory(fw.memory.rows(), d);

  for (std::size_t li = p.decoder.size(); li-- > 0;) {
    const DecoderLayer& L = p.decoder[li];
    DecoderLayer& G = g.decoder[li];
    DecoderLayerCache& c = fw.dec[li];
    // feed-forward
    nn::linear_backward(L.ff2, c.g, dy, &tmp, G.ff2);
    nn::gelu_backward(c.f1, tmp, tmp2);
    nn::linear_backward(L.ff1, c.n3, tmp2, &tmp, G.ff1);
    nn::layernorm_backward(L.ln3, c.ln3, tmp, dn, G.ln3);
    nn::add_inplace(dy, dn);
    // cross attention
    Matrix dq, dkv;
    nn::attention_backward(L.cross_attn, c.n2, fw.memory, fw.cross_segs, heads, false, c.cross_attn, dy, dq, dkv,
                           G.cross_attn);
    nn::add_inplace(dmemory, dkv);
    nn::layernorm_backward(L.ln2, c.ln2, dq, dn, G.ln2);
    nn::add_inplace(dy, dn);
    // causal self attention
    nn::attention_backward(L.self_attn, c.n1, c.n1, fw.dec_segs, heads, true, c.self_attn, dy, dq, dkv,
                           G.self_attn);
    nn::add_inplace(dq, dkv);
    nn::layernorm_backward(L.ln1, c.ln1, dq, dn, G.ln1);
    nn::add_inplace(dy, dn);
  }
  for (std::size_t r = 0; r < fw.dec_tokens.size(); ++r) {
    const auto tok = static_cast<std::size_t>(fw.dec_tokens[r]);
    const auto pos = static_cast<std::size_t>(fw.dec_positions[r]);
    for (std::size_t j = 0; j < d; ++j) {
      g.dec_embedding(tok, j) += dy(r, j);
      g.dec_position(pos, j) += dy(r, j);
    }
  }

  Matrix dx;
  nn::layernorm_backward(p.enc_norm, fw.enc_norm, dmemory, dx, g.enc_norm);
  for (std::size_t li = p.encoder.size(); li-- > 0;) {
    const EncoderLayer& L = p.encoder[li];
    EncoderLayer& G = g.encoder[li];
    EncoderLayerCache& c = fw.enc[li];
    nn::linear_backward(L.ff2, c.g, dx, &tmp, G.ff2);
    nn::gelu_backward(c.f1, tmp, tmp2);
    nn::linear_backward(L.ff1, c.n2, tmp2, &tmp, G.ff1);
    nn::layernorm_backward(L.ln2, c.ln2, tmp, dn, G.ln2);
    nn::add_inplace(dx, dn);
    Matrix dq, dkv;
    nn::attention_backward(L.attn, c.n1, c.n1, fw.enc_segs, heads, false, c.attn, dx, dq, dkv, G.attn);
    nn::add_inplace(dq, dkv);
    nn::layernorm_backward(L.ln1, c.ln1, dq, dn, G.ln1);
    nn::add_inplace(dx, dn);
  }
  nn::linear_backward(p.embed2, fw.a1, dx, &tmp, g.embed2);
  nn::silu_backward(fw.h1, tmp, tmp2);
  Matrix dx0;
  nn::linear_backward(p.embed1, fw.x0, tmp2, &dx0, g.embed1);
  const std::size_t slots = 3 * static_cast<std::size_t>(cfg.max_dimension + 1);
  for (std::size_t r = 0; r < dx0.rows(); ++r)
    for (std::size_t s = 0; s < slots; ++s) {
      const auto tok = static_cast<std::size_t>(fw.enc_tokens[r * slots + s]);
      const double* src = dx0.data() + r * slots * d + s * d;
      double* dst = g.enc_embedding.data() + tok * d;
      for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
    }
}

}  // namespace

Matrix embed_points(const Model& model, std::span<const int> tokens, std::size_t points, int dimension) {
  const ModelConfig& cfg = model.config();
  if (dimension < 1 || dimension > cfg.max_dimension) throw std::invalid_argument("trajectory dimension exceeds D_max");
  const std::size_t slots = 3 * static_cast<std::size_t>(cfg.max_dimension + 1);
  if (tokens.size() != points * slots) throw std::invalid_argument("token block has the wrong shape");
  const std::size_t used = 3 * static_cast<std::size_t>(dimension + 1);
  Forward fw;
  fw.enc_tokens.assign(tokens.begin(), tokens.end());
  for (std::size_t r = 0; r < points; ++r)
    for (std::size_t s = used; s < slots; ++s) fw.enc_tokens[r * slots + s] = Vocabulary::pad;
  embed_rows(model, fw);
  Matrix out;
  nn::linear_forward(model.params().embed2, fw.a1, out);
  return out;
}

Matrix embed_trajectory(const Model& model, const TokenGrid& grid) {
  return embed_points(model, padded_point_tokens(grid, model.config().max_dimension), grid.points, grid.dimension);
}

Matrix encode(const Model& model, const TokenGrid& grid) {
  Forward fw;
  fw.enc_tokens = padded_point_tokens(grid, model.config().max_dimension);
  fw.enc_segs.push_back({0, grid.points, 0, grid.points});
  return run_encoder(model, fw);
}

Matrix teacher_forced_logits(const Model& model, const TokenGrid& grid, std::span<const int> decoder_input) {
  Forward fw;
  const DecoderInput in{&grid, decoder_input};
  forward(model, std::span<const DecoderInput>(&in, 1), fw);
  return std::move(fw.logits);
}

double cross_entropy(const Matrix& logits, std::span<const int> targets) {
  if (logits.rows() != targets.size()) throw std::invalid_argument("logits/targets length mismatch");
  const std::size_t v = logits.cols();
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    if (targets[r] == Vocabulary::pad) continue;
    const double* z = logits.data() + r * v;
    const double mx = *std::max_element(z, z + v);
    double sum = 0.0;
    for (std::size_t j = 0; j < v; ++j) sum += std::exp(z[j] - mx);
    total += mx + std::log(sum) - z[targets[r]];
    ++count;
  }
  return count ? total / static_cast<double>(count) : 0.0;
}

LossStats batch_loss(const Model& model, std::span<const TrainingExample> batch, ModelParams* grads) {
  LossStats stats;
  if (batch.empty()) return stats;
  std::vector<DecoderInput> inputs;
  std::vector<int> targets;
  for (const TrainingExample& ex : batch) {
    if (ex.target.size() < 2) throw std::invalid_argument("target needs at least BOS and one more token");
    inputs.push_back({&ex.grid, std::span<const int>(ex.target).first(ex.target.size() - 1)});
    targets.insert(targets.end(), ex.target.begin() + 1, ex.target.end());
  }
  // Reused between calls so large buffers are not re-faulted every step.
  thread_local Forward fw;
  forward(model, inputs, fw);

  const std::size_t rows = fw.logits.rows(), v = fw.logits.cols();
  std::vector<double> row_loss(rows, 0.0);
  std::vector<char> row_hit(rows, 0);
  for (int t : targets)
    if (t != Vocabulary::pad) ++stats.tokens;
  const double inv_count = stats.tokens ? 1.0 / static_cast<double>(stats.tokens) : 0.0;
  // Logits become d(loss)/d(logits) in place.
#pragma omp parallel for schedule(static) num_threads(kernels::max_threads()) if (rows * v > (1u << 16))
  for (long long rr = 0; rr < static_cast<long long>(rows); ++rr) {
    const auto r = static_cast<std::size_t>(rr);
    double* z = fw.logits.data() + r * v;
    const int t = targets[r];
    if (t == Vocabulary::pad) {
      std::fill(z, z + v, 0.0);
      continue;
    }
    const double mx = kernels::max_value(z, v);
    const double zt = z[t];
    // Argmax hit: first index attaining the maximum is the target.
    row_hit[r] = zt == mx && std::find(z, z + v, mx) == z + t;
    const double sum = kernels::exp_shifted_sum(z, v, mx);
    row_loss[r] = mx + std::log(sum) - zt;
    const double scale = inv_count / sum;
    for (std::size_t j = 0; j < v; ++j) z[j] *= scale;
    z[t] -= inv_count;
  }
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    total += row_loss[r];
    stats.correct += static_cast<std::size_t>(row_hit[r]);
  }
  stats.loss = total * inv_count;
  if (grads) backward(model, fw, fw.logits, *grads);
  return stats;
}

// ---------------------------------------------------------------------------
// Incremental decoding

DecoderSession::DecoderSession(const Model& model, const Matrix& memory) : model_(model) {
  for (const DecoderLayer& L : model.params().decoder) {
    Matrix k, v;
    nn::linear_forward(L.cross_attn.k, memory, k);
    nn::linear_forward(L.cross_attn.v, memory, v);
    cross_k_.push_back(std::move(k));
    cross_v_.push_back(std::move(v));
  }
}

DecoderCache DecoderSession::empty_cache() const {
  DecoderCache c;
  c.keys.resize(cross_k_.size());
  c.values.resize(cross_k_.size());
  return c;
}

namespace {

// Single-query attention of `q` (1 x d row) over keys/values (len x d).
void attend_one(const double* q, const Matrix& keys, const Matrix& values, std::size_t heads, double* out,
                std::vector<double>& scores) {
  const std::size_t d = keys.cols(), len = keys.rows(), dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  scores.resize(len);
  for (std::size_t h = 0; h < heads; ++h) {
    kernels::gemm_nt(1, len, dh, q + h * dh, d, keys.data() + h * dh, d, scores.data(), len, false);
    for (double& s : scores) s *= scale;
    kernels::softmax_rows(1, len, scores.data(), len);
    kernels::gemm_nn(1, dh, len, scores.data(), len, values.data() + h * dh, d, out + h * dh, d, false);
  }
}

}  // namespace

Matrix DecoderSession::step(std::span<DecoderCache* const> caches, std::span<const int> tokens) const {
  const ModelParams& p = model_.params();
  const ModelConfig& cfg = model_.config();
  const auto d = static_cast<std::size_t>(cfg.d_model);
  const auto heads = static_cast<std::size_t>(cfg.n_heads);
  const std::size_t rows = caches.size();
  if (tokens.size() != rows) throw std::invalid_argument("one token per hypothesis expected");

  Matrix y(rows, d);
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t pos = caches[r]->length;
    if (pos >= static_cast<std::size_t>(cfg.max_target_length)) throw std::length_error("decode length exceeded");
    const auto tok = static_cast<std::size_t>(tokens[r]);
    for (std::size_t j = 0; j < d; ++j) y(r, j) = p.dec_embedding(tok, j) + p.dec_position(pos, j);
  }
  Matrix n, q, k, v, ctx(rows, d), tmp, f1, g;
  nn::LayerNormCache lc;
  std::vector<double> scores;
  for (std::size_t l = 0; l < p.decoder.size(); ++l) {
    const DecoderLayer& L = p.decoder[l];
    nn::layernorm_forward(L.ln1, y, n, lc);
    nn::linear_forward(L.self_attn.q, n, q);
    nn::linear_forward(L.self_attn.k, n, k);
    nn::linear_forward(L.self_attn.v, n, v);
    for (std::size_t r = 0; r < rows; ++r) {
      caches[r]->keys[l].append_row(k.row(r));
      caches[r]->values[l].append_row(v.row(r));
      attend_one(q.data() + r * d, caches[r]->keys[l], caches[r]->values[l], heads, ctx.data() + r * d, scores);
    }
    nn::linear_forward(L.self_attn.o, ctx, tmp);
    nn::add_inplace(y, tmp);

    nn::layernorm_forward(L.ln2, y, n, lc);
    nn::linear_forward(L.cross_attn.q, n, q);
    for (std::size_t r = 0; r < rows; ++r)
      attend_one(q.data() + r * d, cross_k_[l], cross_v_[l], heads, ctx.data() + r * d, scores);
    nn::linear_forward(L.cross_attn.o, ctx, tmp);
    nn::add_inplace(y, tmp);

    nn::layernorm_forward(L.ln3, y, n, lc);
    nn::linear_forward(L.ff1, n, f1);
    nn::gelu_forward(f1, g);
    nn::linear_forward(L.ff2, g, tmp);
    nn::add_inplace(y, tmp);
  }
  for (std::size_t r = 0; r < rows; ++r) ++caches[r]->length;
  nn::layernorm_forward(p.dec_norm, y, n, lc);
  Matrix logits;
  nn::linear_forward(p.output, n, logits);
  return logits;
}

}  // namespace odesr
