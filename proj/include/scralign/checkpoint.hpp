#pragma once

// Checkpoint file: a magic line, a JSON manifest (one line), then a little-endian float32
// payload. Values are stored as float32 and upcast to double on load.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "scralign/decoder.hpp"
#include "scralign/engine.hpp"

namespace scr {

inline constexpr int kCheckpointVersion = 1;

struct CheckpointLatent {
  std::string pair_id;
  std::vector<double> z;
  // Overlap masks (adaptive training only; empty otherwise).
  std::vector<bool> source_mask;
  std::vector<bool> target_mask;
  int mask_epoch = -1;
};

struct Checkpoint {
  DecoderParams params;
  std::vector<CheckpointLatent> latents;
  int epochs_completed = 0;
  std::uint64_t seed = 0;
  LossKind loss_kind = LossKind::Chamfer;
  std::size_t batch_size = 128;
  double lr = 1e-3;
  double lr_decay_per_epoch = 0.995;
};

std::string serialize_checkpoint(const Checkpoint& ckpt);
/// Throws ParseError on a malformed or inconsistent file.
Checkpoint deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
/// Throws IoError when the file cannot be read.
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Snapshot of a training run (decoder, latents, masks, progress).
Checkpoint make_checkpoint(const TrainState& state, const std::vector<TrainingPair>& pairs, const TrainConfig& config);

/// Rebuilds a TrainState for resuming. Latent Adam moments restart from zero.
TrainState restore_train_state(const Checkpoint& ckpt, const std::vector<TrainingPair>& pairs);

}  // namespace scr
