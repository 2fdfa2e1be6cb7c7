#include "scralign/engine.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <random>
#include <thread>

#include "scralign/errors.hpp"

namespace scr {

namespace {

std::uint64_t fnv1a(const std::string& text, std::uint64_t seed) {
  std::uint64_t h = 1469598103934665603ULL ^ (seed * 0x9E3779B97F4A7C15ULL);
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

bool finite(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

struct PairPass {
  double loss = 0.0;
  std::vector<std::vector<double>> theta_grads;
  std::vector<double> z_grad;
  std::vector<ad::BatchNormStats> observed;
};

PairPass run_pair(const DecoderParams& params, const TrainingPair& pair, const std::vector<double>& z,
                  const OverlapState* overlap) {
  ad::Tape tape;
  DecoderPass pass(params, true);
  const ad::Tensor zt = ad::Tensor::parameter({z.size()}, z);
  const auto out = pass.forward(tape, points_tensor(pair.source), zt, ad::Mode::Train);
  const ad::Tensor loss = chamfer_loss(tape, out.transformed, pair.target, overlap);
  PairPass result;
  result.loss = loss.item();
  if (!std::isfinite(result.loss)) return result;
  tape.backward(loss);
  result.theta_grads.reserve(pass.leaves().size());
  for (const auto& leaf : pass.leaves()) result.theta_grads.push_back(leaf.grad());
  result.z_grad = zt.grad();
  result.observed = pass.observed_stats();
  return result;
}

PointCloud transformed_source(const DecoderParams& params, const TrainingPair& pair, const std::vector<double>& z) {
  return forward(pair.source, z, params, ad::Mode::Train).second;
}

std::vector<std::size_t> tensor_sizes(const DecoderParams& params) {
  std::vector<std::size_t> sizes;
  for (const auto& t : params.tensors()) sizes.push_back(t.values.size());
  return sizes;
}

}  // namespace

std::string to_string(LossKind kind) { return kind == LossKind::Chamfer ? "chamfer" : "adaptive-chamfer"; }

LossKind parse_loss_kind(const std::string& text) {
  if (text == "chamfer") return LossKind::Chamfer;
  if (text == "adaptive-chamfer" || text == "adaptive_chamfer") return LossKind::AdaptiveChamfer;
  throw InvalidArgument("unknown loss kind '" + text + "' (expected chamfer or adaptive-chamfer)");
}

ScrEntry init_scr(const std::string& pair_id, std::uint64_t seed, std::size_t latent_dim) {
  std::mt19937_64 rng(fnv1a(pair_id, seed));
  std::normal_distribution<double> dist(0.0, kLatentInitStd);
  ScrEntry e;
  e.pair_id = pair_id;
  e.z.resize(latent_dim);
  for (auto& v : e.z) v = dist(rng);
  const std::size_t sizes[1] = {latent_dim};
  e.optimizer = ad::AdamState(sizes);
  return e;
}

ScrEntry& ScrStore::add(ScrEntry entry) {
  if (find(entry.pair_id)) throw InvalidArgument("duplicate latent for pair '" + entry.pair_id + "'");
  entries_.push_back(std::move(entry));
  return entries_.back();
}

const ScrEntry* ScrStore::find(const std::string& pair_id) const {
  for (const auto& e : entries_)
    if (e.pair_id == pair_id) return &e;
  return nullptr;
}

ScrEntry* ScrStore::find(const std::string& pair_id) {
  return const_cast<ScrEntry*>(std::as_const(*this).find(pair_id));
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw InvalidArgument("batch_size must be >= 1");
  if (!(lr > 0.0)) throw InvalidArgument("lr must be positive");
  if (!(lr_decay_per_epoch > 0.0 && lr_decay_per_epoch <= 1.0)) throw InvalidArgument("lr_decay_per_epoch must be in (0, 1]");
  if (epochs < 0) throw InvalidArgument("epochs must be non-negative");
  if (!(sigma_schedule.sigma_start > 0.0 && sigma_schedule.sigma_end > 0.0 && sigma_schedule.horizon_epochs > 0))
    throw InvalidArgument("sigma schedule must have positive endpoints and horizon");
}

double learning_rate_at(const TrainConfig& config, int epoch) {
  return config.lr * std::pow(config.lr_decay_per_epoch, static_cast<double>(epoch));
}

TrainState initial_train_state(const std::vector<TrainingPair>& pairs, const DecoderConfig& decoder,
                               const TrainConfig& config) {
  TrainState state;
  state.params = DecoderParams::initialize(decoder, config.seed);
  for (const auto& p : pairs) state.latents.add(init_scr(p.pair_id, config.seed, decoder.latent_dim));
  return state;
}

TrainResult train(const std::vector<TrainingPair>& pairs, const TrainConfig& config, const DecoderConfig& decoder) {
  return train(pairs, config, initial_train_state(pairs, decoder, config));
}

TrainResult train(const std::vector<TrainingPair>& pairs, const TrainConfig& config, TrainState state,
                  const EpochCallback& on_epoch) {
  config.validate();
  if (pairs.empty()) throw InvalidArgument("training set is empty");
  const bool adaptive = config.loss_kind == LossKind::AdaptiveChamfer;

  std::vector<ScrEntry*> latents;
  for (const auto& p : pairs) {
    ScrEntry* e = state.latents.find(p.pair_id);
    if (!e) e = &state.latents.add(init_scr(p.pair_id, config.seed, state.params.config().latent_dim));
    if (e->z.size() != state.params.config().latent_dim)
      throw ShapeError("latent for pair '" + p.pair_id + "' has the wrong dimension");
    latents.push_back(e);
  }
  if (adaptive && state.overlaps.size() != pairs.size()) {
    state.overlaps.clear();
    for (const auto& p : pairs) state.overlaps.push_back(OverlapState::full(p.source.size(), p.target.size()));
  }

  const auto sizes = tensor_sizes(state.params);
  ad::AdamState theta_opt(sizes);
  TrainResult result;

  for (int epoch = state.epochs_completed; epoch < config.epochs; ++epoch) {
    const double lr = learning_rate_at(config, epoch);
    EpochLog log;
    log.epoch = epoch;
    log.lr = lr;

    if (adaptive) {
      log.sigma = sigma_at(config.sigma_schedule, epoch);
      parallel_for(pairs.size(), config.threads, [&](std::size_t i) {
        const auto moved = transformed_source(state.params, pairs[i], latents[i]->z);
        state.overlaps[i] = update_overlap(state.overlaps[i], moved, pairs[i].target, log.sigma, epoch);
      });
    }

    std::vector<std::size_t> order(pairs.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(config.seed * 1000003ULL + static_cast<std::uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), rng);

    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t count = std::min(config.batch_size, order.size() - start);
      std::vector<PairPass> passes(count);
      parallel_for(count, config.threads, [&](std::size_t k) {
        const std::size_t i = order[start + k];
        passes[k] = run_pair(state.params, pairs[i], latents[i]->z, adaptive ? &state.overlaps[i] : nullptr);
      });

      std::vector<std::vector<double>> theta_grad(sizes.size());
      for (std::size_t t = 0; t < sizes.size(); ++t) theta_grad[t].assign(sizes[t], 0.0);
      for (std::size_t k = 0; k < count; ++k) {
        const std::size_t i = order[start + k];
        const PairPass& pass = passes[k];
        if (!std::isfinite(pass.loss) || !finite(pass.z_grad)) {
          throw NumericalError("non-finite loss in epoch " + std::to_string(epoch) + " for pair '" + pairs[i].pair_id + "'");
        }
        loss_sum += pass.loss;
        for (std::size_t t = 0; t < sizes.size(); ++t)
          for (std::size_t j = 0; j < sizes[t]; ++j) theta_grad[t][j] += pass.theta_grads[t][j];
        auto& entry = *latents[i];
        ad::adam_step(entry.z, pass.z_grad, entry.optimizer, lr);
        for (std::size_t l = 0; l < pass.observed.size(); ++l)
          ad::update_running_stats(state.params.running_stats()[l], pass.observed[l]);
      }
      const double inv = 1.0 / static_cast<double>(count);
      std::vector<std::span<double>> params;
      std::vector<std::span<const double>> grads;
      for (std::size_t t = 0; t < sizes.size(); ++t) {
        for (auto& g : theta_grad[t]) g *= inv;
        params.emplace_back(state.params.tensors()[t].values);
        grads.emplace_back(theta_grad[t]);
      }
      ad::adam_step(params, grads, theta_opt, lr);
      ++log.theta_updates;
    }

    log.mean_loss = loss_sum / static_cast<double>(pairs.size());
    state.epochs_completed = epoch + 1;
    result.log.push_back(log);
    if (on_epoch) on_epoch(log, state);
  }
  result.state = std::move(state);
  return result;
}

void InferConfig::validate() const {
  if (max_steps < 1) throw InvalidArgument("max_steps must be >= 1");
  if (!(lr > 0.0)) throw InvalidArgument("lr must be positive");
  if (window < 1) throw InvalidArgument("window must be >= 1");
  if (restarts < 1) throw InvalidArgument("restarts must be >= 1");
  if (steps_per_sigma_epoch < 1) throw InvalidArgument("steps_per_sigma_epoch must be >= 1");
}

OverlapScheduler::OverlapScheduler(LossKind kind, SigmaSchedule schedule, int steps_per_epoch, std::size_t source_size,
                                   std::size_t target_size)
    : kind_(kind), schedule_(schedule), steps_per_epoch_(steps_per_epoch),
      state_(OverlapState::full(source_size, target_size)) {}

const OverlapState* OverlapScheduler::before_step(int step, const PointCloud& moved, const PointCloud& target) {
  if (kind_ == LossKind::Chamfer) return nullptr;
  if (step % steps_per_epoch_ == 0) {
    const int epoch = step / steps_per_epoch_;
    state_ = update_overlap(state_, moved, target, sigma_at(schedule_, epoch), epoch);
  }
  return &state_;
}

bool OverlapScheduler::schedule_complete(int step) const {
  return kind_ == LossKind::Chamfer || step / steps_per_epoch_ >= schedule_.horizon_epochs;
}

namespace {

// Adam iterates are not monotone, so compare means of the last two windows rather than two
// single losses.
bool window_stalled(const std::vector<double>& log, const InferConfig& config) {
  const auto w = static_cast<std::size_t>(config.window);
  if (log.size() < 2 * w) return false;
  const auto end = log.end();
  const double recent = std::accumulate(end - static_cast<std::ptrdiff_t>(w), end, 0.0) / static_cast<double>(w);
  const double before = std::accumulate(end - static_cast<std::ptrdiff_t>(2 * w), end - static_cast<std::ptrdiff_t>(w), 0.0) /
                        static_cast<double>(w);
  return before - recent < config.convergence_tol;
}

}  // namespace

InferResult infer_pair(const PointCloud& source, const PointCloud& target, const DecoderParams& params,
                       const InferConfig& config) {
  config.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const ad::Tensor points = points_tensor(source);
  // Constant leaves: the decoder is read-only here.
  DecoderPass pass(params, false);

  std::optional<InferResult> best;
  int failures = 0;
  for (int restart = 0; restart < config.restarts; ++restart) {
    ScrEntry entry = init_scr("infer-restart-" + std::to_string(restart), config.seed, params.config().latent_dim);
    OverlapScheduler overlap(config.loss_kind, config.sigma_schedule, config.steps_per_sigma_epoch, source.size(), target.size());
    InferResult run;
    run.restart = restart;
    bool failed = false;
    for (int step = 0; step <= config.max_steps; ++step) {
      ad::Tape tape;
      const ad::Tensor z = ad::Tensor::parameter({entry.z.size()}, entry.z);
      const auto out = pass.forward(tape, points, z, ad::Mode::Eval);
      const OverlapState* masks = nullptr;
      if (config.loss_kind == LossKind::AdaptiveChamfer) {
        masks = overlap.before_step(step, PointCloud::from_flat(out.transformed.data()), target);
      }
      const ad::Tensor loss = chamfer_loss(tape, out.transformed, target, masks);
      const double value = loss.item();
      if (!std::isfinite(value)) {
        failed = true;
        break;
      }
      run.step_log.push_back(value);
      run.transform = out.transform();
      run.final_loss = value;
      run.z = entry.z;
      if (step == config.max_steps || (overlap.schedule_complete(step) && window_stalled(run.step_log, config))) break;
      tape.backward(loss);
      const auto grad = z.grad();
      if (!finite(grad)) {
        failed = true;
        break;
      }
      ad::adam_step(entry.z, grad, entry.optimizer, config.lr);
      run.steps = step + 1;
    }
    if (failed) {
      ++failures;
      continue;
    }
    if (!best || run.final_loss < best->final_loss) best = std::move(run);
  }
  if (!best) {
    throw NumericalError("test-time optimization diverged in all " + std::to_string(failures) + " restart(s)");
  }
  best->wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return *best;
}

AggregateMetrics aggregate_metrics(const std::vector<RegistrationReport>& reports, const std::vector<std::string>& categories,
                                   const std::set<std::string>& exclude_rotation) {
  AggregateMetrics agg;
  double sq_r = 0.0, abs_r = 0.0, sq_t = 0.0, abs_t = 0.0;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const auto& r = reports[i];
    const Vec3 et = r.predicted.translation - r.ground_truth.translation;
    sq_t += et.squaredNorm();
    abs_t += et.cwiseAbs().sum();
    ++agg.translation_pairs;
    if (i < categories.size() && exclude_rotation.count(categories[i])) continue;
    const Vec3 er = angle_errors_degrees(r.predicted, r.ground_truth);
    sq_r += er.squaredNorm();
    abs_r += er.cwiseAbs().sum();
    ++agg.rotation_pairs;
  }
  if (agg.rotation_pairs > 0) {
    const double n = 3.0 * static_cast<double>(agg.rotation_pairs);
    agg.errors.mse_r = sq_r / n;
    agg.errors.mae_r = abs_r / n;
    agg.errors.rmse_r = std::sqrt(agg.errors.mse_r);
  }
  if (agg.translation_pairs > 0) {
    const double n = 3.0 * static_cast<double>(agg.translation_pairs);
    agg.errors.mse_t = sq_t / n;
    agg.errors.mae_t = abs_t / n;
    agg.errors.rmse_t = std::sqrt(agg.errors.mse_t);
  }
  return agg;
}

EvaluationResult evaluate(const std::vector<EvalPair>& pairs, const Registrar& method,
                          const std::set<std::string>& exclude_rotation, unsigned threads) {
  EvaluationResult result;
  result.reports.resize(pairs.size());
  parallel_for(pairs.size(), threads, [&](std::size_t i) {
    const auto t0 = std::chrono::steady_clock::now();
    const MethodOutput out = method(pairs[i]);
    RegistrationReport& r = result.reports[i];
    r.predicted = out.transform;
    r.ground_truth = pairs[i].ground_truth;
    r.errors = transform_metrics(out.transform, pairs[i].ground_truth);
    r.final_alignment_loss = out.final_loss;
    r.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  });
  std::vector<std::string> categories;
  for (const auto& p : pairs) categories.push_back(p.category);
  result.aggregate = aggregate_metrics(result.reports, categories, exclude_rotation);
  return result;
}

EvaluationResult evaluate(const std::vector<EvalPair>& pairs, const DecoderParams& params, const InferConfig& config,
                          const std::set<std::string>& exclude_rotation, unsigned threads) {
  return evaluate(
      pairs,
      [&](const EvalPair& p) {
        const auto r = infer_pair(p.source, p.target, params, config);
        return MethodOutput{r.transform, r.final_loss};
      },
      exclude_rotation, threads);
}

void parallel_for(std::size_t count, unsigned threads, const std::function<void(std::size_t)>& fn) {
  if (threads <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(threads, count));
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace scr
