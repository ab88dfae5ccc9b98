#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "odesr/layers.hpp"
#include "odesr/matrix.hpp"
#include "odesr/tokenizer.hpp"

namespace odesr {

struct ModelConfig {
  int d_model = 64;
  int n_heads = 4;
  int enc_layers = 2;
  int dec_layers = 4;
  int ffn_multiplier = 4;
  int max_dimension = 6;
  int max_target_length = 256;
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument on inconsistent settings.
  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct EncoderLayer {
  nn::LayerNorm ln1;
  nn::Attention attn;
  nn::LayerNorm ln2;
  nn::Linear ff1, ff2;
};

struct DecoderLayer {
  nn::LayerNorm ln1;
  nn::Attention self_attn;
  nn::LayerNorm ln2;
  nn::Attention cross_attn;
  nn::LayerNorm ln3;
  nn::Linear ff1, ff2;
};

/// All learnable tensors. visit() enumerates them with stable names in a
/// fixed order; checkpoints and the optimizer rely on that order.
struct ModelParams {
  Matrix enc_embedding;  // vocab x d, used for trajectory tokens
  nn::Linear embed1;     // 3 (D_max + 1) d -> d
  nn::Linear embed2;     // d -> d
  std::vector<EncoderLayer> encoder;
  nn::LayerNorm enc_norm;
  Matrix dec_embedding;  // vocab x d
  Matrix dec_position;   // max_target_length x d
  std::vector<DecoderLayer> decoder;
  nn::LayerNorm dec_norm;
  nn::Linear output;  // d -> vocab

  void visit(const std::function<void(const std::string&, Matrix&)>& f);
  void visit(const std::function<void(const std::string&, const Matrix&)>& f) const;

  /// Same shapes, all zero.
  ModelParams zeros_like() const;
  void set_zero();
  std::size_t parameter_count() const;
};

class Model {
 public:
  /// Randomly initialized from cfg.seed.
  explicit Model(const ModelConfig& cfg);
  Model(const ModelConfig& cfg, ModelParams params);

  const ModelConfig& config() const noexcept { return cfg_; }
  const Vocabulary& vocabulary() const noexcept { return vocab_; }
  ModelParams& params() noexcept { return params_; }
  const ModelParams& params() const noexcept { return params_; }
  int vocab_size() const noexcept { return vocab_.size(); }

 private:
  ModelConfig cfg_;
  Vocabulary vocab_;
  ModelParams params_;
};

/// Encoder input tokens for one trajectory: N rows of 3 (D_max + 1) tokens,
/// time first, dimensions beyond D filled with PAD.
std::vector<int> padded_point_tokens(const TokenGrid& grid, int max_dimension);

/// Embedder output (before the encoder stack): one d-vector per point.
/// `tokens` holds N x 3 (D_max + 1) entries; everything past the first
/// 3 (D + 1) of a row is treated as PAD whatever it contains. Throws
/// std::invalid_argument when D > D_max.
Matrix embed_points(const Model& model, std::span<const int> tokens, std::size_t points, int dimension);
Matrix embed_trajectory(const Model& model, const TokenGrid& grid);

/// Encoder memory (after the final encoder norm), N x d.
Matrix encode(const Model& model, const TokenGrid& grid);

/// Teacher-forced logits, decoder_input.size() x vocab.
Matrix teacher_forced_logits(const Model& model, const TokenGrid& grid, std::span<const int> decoder_input);

/// Mean cross-entropy over rows whose target is not PAD.
double cross_entropy(const Matrix& logits, std::span<const int> targets);

struct TrainingExample {
  TokenGrid grid;
  TokenSequence target;  // BOS ... EOS

  std::size_t token_count() const noexcept { return grid.tokens.size() + target.size(); }
};

struct LossStats {
  double loss = 0.0;        // mean over predicted tokens
  std::size_t tokens = 0;   // predicted (non-PAD) target tokens
  std::size_t correct = 0;  // argmax hits among them
};

/// Teacher-forced loss over a batch. The decoder reads target[0..T-2] and
/// predicts target[1..T-1]; PAD targets are skipped. When `grads` is
/// non-null the gradient of the mean loss is accumulated into it.
LossStats batch_loss(const Model& model, std::span<const TrainingExample> batch, ModelParams* grads);

/// Key/value cache for incremental decoding of one hypothesis.
struct DecoderCache {
  std::vector<Matrix> keys;    // per layer, length x d
  std::vector<Matrix> values;  // per layer, length x d
  std::size_t length = 0;
};

/// Incremental decoder over a fixed encoder memory. Logits for a
/// hypothesis match teacher_forced_logits at the same position.
class DecoderSession {
 public:
  DecoderSession(const Model& model, const Matrix& memory);

  DecoderCache empty_cache() const;
  /// Feeds one token per hypothesis, appends to each cache, and returns
  /// logits (rows in the same order) for the next position.
  Matrix step(std::span<DecoderCache* const> caches, std::span<const int> tokens) const;

 private:
  const Model& model_;
  std::vector<Matrix> cross_k_, cross_v_;
};

}  // namespace odesr
