#pragma once

// Per-pair latent (SCR) store and the two optimization phases: joint training of the decoder
// and all latents, and test-time optimization of a fresh latent against a frozen decoder.

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "scralign/autodiff.hpp"
#include "scralign/decoder.hpp"
#include "scralign/geometry.hpp"
#include "scralign/losses.hpp"

namespace scr {

enum class LossKind { Chamfer, AdaptiveChamfer };

std::string to_string(LossKind kind);
/// Accepts "chamfer", "adaptive-chamfer" and "adaptive_chamfer".
LossKind parse_loss_kind(const std::string& text);

inline constexpr double kLatentInitStd = 0.01;

struct ScrEntry {
  std::string pair_id;
  std::vector<double> z;
  ad::AdamState optimizer;
};

/// Fresh latent ~ N(0, 0.01^2) per component, deterministic in (pair_id, seed).
ScrEntry init_scr(const std::string& pair_id, std::uint64_t seed, std::size_t latent_dim = 256);

class ScrStore {
 public:
  ScrEntry& add(ScrEntry entry);
  const ScrEntry* find(const std::string& pair_id) const;
  ScrEntry* find(const std::string& pair_id);
  std::size_t size() const noexcept { return entries_.size(); }
  const std::vector<ScrEntry>& entries() const noexcept { return entries_; }
  std::vector<ScrEntry>& entries() noexcept { return entries_; }

 private:
  std::vector<ScrEntry> entries_;
};

struct TrainingPair {
  std::string pair_id;
  PointCloud source;
  PointCloud target;
};

struct TrainConfig {
  std::size_t batch_size = 128;
  double lr = 1e-3;
  double lr_decay_per_epoch = 0.995;
  int epochs = 100;
  LossKind loss_kind = LossKind::Chamfer;
  SigmaSchedule sigma_schedule;
  std::uint64_t seed = 0;
  unsigned threads = 1;

  void validate() const;
};

/// lr * decay^epoch.
double learning_rate_at(const TrainConfig& config, int epoch);

struct EpochLog {
  int epoch = 0;
  double mean_loss = 0.0;
  double lr = 0.0;
  double sigma = std::numeric_limits<double>::quiet_NaN();  // NaN unless adaptive
  std::size_t theta_updates = 0;
};

/// Everything needed to continue training: decoder, latents, overlap masks and progress.
struct TrainState {
  DecoderParams params;
  ScrStore latents;
  std::vector<OverlapState> overlaps;  // parallel to the training pairs, adaptive loss only
  int epochs_completed = 0;
};

/// Fresh decoder (seeded init) and one latent per pair.
TrainState initial_train_state(const std::vector<TrainingPair>& pairs, const DecoderConfig& decoder,
                               const TrainConfig& config);

struct TrainResult {
  TrainState state;
  std::vector<EpochLog> log;
};

using EpochCallback = std::function<void(const EpochLog&, const TrainState&)>;

/// Joint optimization of decoder parameters and every pair latent. Runs epochs
/// [state.epochs_completed, config.epochs). Throws NumericalError naming the pair on a
/// non-finite loss.
TrainResult train(const std::vector<TrainingPair>& pairs, const TrainConfig& config, TrainState state,
                  const EpochCallback& on_epoch = {});

TrainResult train(const std::vector<TrainingPair>& pairs, const TrainConfig& config, const DecoderConfig& decoder);

struct InferConfig {
  int max_steps = 1000;
  double lr = 1e-3;
  double convergence_tol = 1e-7;
  int window = 10;
  int restarts = 1;
  std::uint64_t seed = 0;
  LossKind loss_kind = LossKind::Chamfer;
  SigmaSchedule sigma_schedule;
  /// Optimizer steps per sigma-schedule epoch for the adaptive loss.
  int steps_per_sigma_epoch = 5;

  void validate() const;
};

struct InferResult {
  RigidTransform transform;
  double final_loss = 0.0;
  std::vector<double> step_log;  // loss at every evaluated step of the returned restart
  int steps = 0;                 // optimizer updates performed by the returned restart
  int restart = 0;
  std::vector<double> z;
  double wall_time = 0.0;
};

/// Optimizes a fresh latent with the decoder frozen (Eval mode). `params` is never modified.
InferResult infer_pair(const PointCloud& source, const PointCloud& target, const DecoderParams& params,
                       const InferConfig& config);

/// Steps the overlap masks on the adaptive schedule for step-based optimizers
/// (test-time inference and direct optimization).
class OverlapScheduler {
 public:
  OverlapScheduler(LossKind kind, SigmaSchedule schedule, int steps_per_epoch, std::size_t source_size,
                   std::size_t target_size);

  /// Updates masks when `step` starts a new schedule epoch. Returns the masks to use, or
  /// nullptr for the plain Chamfer loss.
  const OverlapState* before_step(int step, const PointCloud& transformed_source, const PointCloud& target);
  /// True once sigma has reached its final value (always true for plain Chamfer).
  bool schedule_complete(int step) const;
  const OverlapState* state() const { return kind_ == LossKind::Chamfer ? nullptr : &state_; }

 private:
  LossKind kind_;
  SigmaSchedule schedule_;
  int steps_per_epoch_;
  OverlapState state_;
};

struct EvalPair {
  std::string pair_id;
  std::string category;
  PointCloud source;
  PointCloud target;
  RigidTransform ground_truth;
};

struct MethodOutput {
  RigidTransform transform;
  double final_loss = 0.0;
};

struct AggregateMetrics {
  TransformErrors errors;
  std::size_t rotation_pairs = 0;
  std::size_t translation_pairs = 0;
};

struct EvaluationResult {
  std::vector<RegistrationReport> reports;  // parallel to the input pairs
  AggregateMetrics aggregate;
};

/// Pools per-angle and per-component errors over the set, then RMSE = sqrt(pooled MSE).
/// Pairs whose category is in `exclude_rotation` are left out of the rotation aggregates only.
AggregateMetrics aggregate_metrics(const std::vector<RegistrationReport>& reports,
                                   const std::vector<std::string>& categories,
                                   const std::set<std::string>& exclude_rotation = {});

using Registrar = std::function<MethodOutput(const EvalPair&)>;

/// Runs `method` on every pair (in parallel when threads > 1) and scores it.
EvaluationResult evaluate(const std::vector<EvalPair>& pairs, const Registrar& method,
                          const std::set<std::string>& exclude_rotation = {}, unsigned threads = 1);

/// evaluate() with test-time latent optimization as the method.
EvaluationResult evaluate(const std::vector<EvalPair>& pairs, const DecoderParams& params, const InferConfig& config,
                          const std::set<std::string>& exclude_rotation = {}, unsigned threads = 1);

/// Runs fn(i) for i in [0, count) on up to `threads` workers. Exceptions propagate (first one wins).
void parallel_for(std::size_t count, unsigned threads, const std::function<void(std::size_t)>& fn);

}  // namespace scr
