#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "odesr/model.hpp"
#include "odesr/training.hpp"

namespace odesr {

inline constexpr std::uint32_t checkpoint_version = 1;

struct Checkpoint {
  ModelConfig model_config;
  TrainConfig train_config;
  std::uint64_t vocab_hash = 0;
  std::size_t step = 0;
  ModelParams params;
  std::optional<AdamState> adam;
};

Checkpoint make_checkpoint(const Model& model, const TrainConfig& train_cfg, std::size_t step,
                           const AdamState* adam = nullptr);

/// Binary container: magic, version, config JSON, vocabulary hash, step,
/// named tensors (raw little-endian doubles), optional Adam moments.
std::string serialize_checkpoint(const Checkpoint& ckpt);
/// Throws std::runtime_error on bad magic, unsupported version, truncated
/// data, or tensor names/shapes that disagree with the stored config.
Checkpoint deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

/// Rebuilds the model; throws if the vocabulary hash does not match.
Model model_from_checkpoint(const Checkpoint& ckpt);

}  // namespace odesr
