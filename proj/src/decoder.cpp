#include "scralign/decoder.hpp"

#include <cmath>
#include <cstring>
#include <random>

#include "scralign/errors.hpp"

namespace scr {

void DecoderConfig::validate() const {
  if (latent_dim == 0) throw InvalidArgument("decoder latent_dim must be positive");
  if (point_mlp_dims.empty()) throw InvalidArgument("decoder needs at least one point-MLP layer");
  if (head_dims.empty() || head_dims.back() != 3) throw InvalidArgument("decoder heads must end in 3 outputs");
  for (auto d : point_mlp_dims)
    if (d == 0) throw InvalidArgument("decoder layer widths must be positive");
  for (auto d : head_dims)
    if (d == 0) throw InvalidArgument("decoder layer widths must be positive");
  if (!(leaky_slope >= 0.0)) throw InvalidArgument("leaky slope must be non-negative");
}

std::size_t DecoderConfig::parameter_count() const {
  std::size_t total = 0, in = point_input_dim();
  for (auto out : point_mlp_dims) {
    total += in * out + out + (use_batch_norm ? 2 * out : 0);
    in = out;
  }
  std::size_t head = 0;
  in = pooled_dim();
  for (auto out : head_dims) {
    head += in * out + out;
    in = out;
  }
  return total + 2 * head;
}

DecoderParams DecoderParams::layout(const DecoderConfig& config) {
  config.validate();
  DecoderParams p;
  p.config_ = config;
  std::size_t in = config.point_input_dim();
  for (std::size_t i = 0; i < config.point_mlp_dims.size(); ++i) {
    const std::size_t out = config.point_mlp_dims[i];
    const std::string prefix = "point." + std::to_string(i) + ".";
    p.tensors_.push_back({prefix + "weight", {in, out}, std::vector<double>(in * out, 0.0)});
    p.tensors_.push_back({prefix + "bias", {out}, std::vector<double>(out, 0.0)});
    if (config.use_batch_norm) {
      p.tensors_.push_back({prefix + "gamma", {out}, std::vector<double>(out, 0.0)});
      p.tensors_.push_back({prefix + "beta", {out}, std::vector<double>(out, 0.0)});
      p.running_.push_back(ad::BatchNormStats::fresh(out));
    }
    in = out;
  }
  for (const char* head : {"rotation", "translation"}) {
    in = config.pooled_dim();
    for (std::size_t i = 0; i < config.head_dims.size(); ++i) {
      const std::size_t out = config.head_dims[i];
      const std::string prefix = std::string(head) + "." + std::to_string(i) + ".";
      p.tensors_.push_back({prefix + "weight", {in, out}, std::vector<double>(in * out, 0.0)});
      p.tensors_.push_back({prefix + "bias", {out}, std::vector<double>(out, 0.0)});
      in = out;
    }
  }
  return p;
}

DecoderParams DecoderParams::initialize(const DecoderConfig& config, std::uint64_t seed) {
  DecoderParams p = layout(config);
  std::mt19937_64 rng(seed);
  std::size_t fan_in = 0;
  for (auto& t : p.tensors_) {
    const bool is_weight = t.name.ends_with(".weight");
    if (is_weight) fan_in = t.shape[0];
    if (t.name.ends_with(".gamma")) {
      std::fill(t.values.begin(), t.values.end(), 1.0);
    } else if (t.name.ends_with(".beta")) {
      std::fill(t.values.begin(), t.values.end(), 0.0);
    } else {
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (auto& v : t.values) v = dist(rng);
    }
  }
  return p;
}

DecoderParams DecoderParams::zeros(const DecoderConfig& config) { return layout(config); }

const NamedArray& DecoderParams::find(std::string_view name) const {
  for (const auto& t : tensors_)
    if (t.name == name) return t;
  throw InvalidArgument("decoder has no tensor named '" + std::string(name) + "'");
}

NamedArray& DecoderParams::find(std::string_view name) {
  return const_cast<NamedArray&>(std::as_const(*this).find(name));
}

std::size_t DecoderParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.values.size();
  return n;
}

std::uint64_t DecoderParams::checksum() const {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const std::vector<double>& v) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(v.data());
    for (std::size_t i = 0; i < v.size() * sizeof(double); ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  };
  for (const auto& t : tensors_) mix(t.values);
  for (const auto& s : running_) {
    mix(s.running_mean);
    mix(s.running_var);
  }
  return h;
}

bool DecoderParams::all_finite() const {
  for (const auto& t : tensors_)
    for (double v : t.values)
      if (!std::isfinite(v)) return false;
  return true;
}

bool operator==(const DecoderParams& a, const DecoderParams& b) {
  if (!(a.config_ == b.config_) || !(a.tensors_ == b.tensors_) || a.running_.size() != b.running_.size()) return false;
  for (std::size_t i = 0; i < a.running_.size(); ++i) {
    if (a.running_[i].running_mean != b.running_[i].running_mean || a.running_[i].running_var != b.running_[i].running_var)
      return false;
  }
  return true;
}

RigidTransform DecoderOutput::transform() const {
  RigidTransform t;
  t.rotation = EulerAnglesXYZ{angles[0], angles[1], angles[2]}.canonical();
  t.translation = Vec3(translation[0], translation[1], translation[2]);
  return t;
}

DecoderPass::DecoderPass(const DecoderParams& params, bool track_param_grads) : params_(&params) {
  leaves_.reserve(params.tensors().size());
  for (const auto& t : params.tensors()) {
    leaves_.push_back(track_param_grads ? ad::Tensor::parameter(t.shape, t.values) : ad::Tensor::constant(t.shape, t.values));
  }
}

ad::Tensor DecoderPass::encode_latent(ad::Tape& tape, const ad::Tensor& points, const ad::Tensor& z, ad::Mode mode) {
  const auto& cfg = params_->config();
  if (z.numel() != cfg.latent_dim) {
    throw ShapeError("latent has " + std::to_string(z.numel()) + " entries, decoder expects " + std::to_string(cfg.latent_dim));
  }
  if (points.rank() != 2 || points.dim(1) != 3) throw ShapeError("source points must be n x 3, got " + ad::to_string(points.shape()));
  observed_.clear();
  std::size_t k = 0;
  ad::Tensor h;
  for (std::size_t layer = 0; layer < cfg.point_mlp_dims.size(); ++layer) {
    const auto& w = leaf(k++);
    const auto& b = leaf(k++);
    h = layer == 0 ? ad::linear_with_latent(tape, points, z, w, b) : ad::linear(tape, h, w, b);
    if (cfg.use_batch_norm) {
      const auto& gamma = leaf(k++);
      const auto& beta = leaf(k++);
      ad::BatchNormStats seen;
      h = ad::batch_norm_observed(tape, h, gamma, beta, params_->running_stats()[layer], mode, &seen);
      if (mode == ad::Mode::Train) observed_.push_back(std::move(seen));
    }
    h = ad::leaky_relu(tape, h, cfg.leaky_slope);
  }
  return ad::max_pool_rows(tape, h);
}

std::pair<ad::Tensor, ad::Tensor> DecoderPass::decode_transform(ad::Tape& tape, const ad::Tensor& pooled, ad::Mode) {
  const auto& cfg = params_->config();
  if (pooled.numel() != cfg.pooled_dim()) {
    throw ShapeError("pooled feature has " + std::to_string(pooled.numel()) + " entries, expected " + std::to_string(cfg.pooled_dim()));
  }
  const std::size_t per_layer = cfg.use_batch_norm ? 4 : 2;
  std::size_t k = per_layer * cfg.point_mlp_dims.size();
  ad::Tensor outputs[2];
  for (auto& out : outputs) {
    ad::Tensor h = pooled;
    for (std::size_t layer = 0; layer < cfg.head_dims.size(); ++layer) {
      const auto& w = leaf(k++);
      const auto& b = leaf(k++);
      h = ad::linear(tape, h, w, b);
      if (layer + 1 < cfg.head_dims.size()) h = ad::leaky_relu(tape, h, cfg.leaky_slope);
    }
    out = h;
  }
  return {outputs[0], outputs[1]};
}

DecoderOutput DecoderPass::forward(ad::Tape& tape, const ad::Tensor& points, const ad::Tensor& z, ad::Mode mode) {
  const ad::Tensor pooled = encode_latent(tape, points, z, mode);
  auto [angles, translation] = decode_transform(tape, pooled, mode);
  const ad::Tensor rotation = ad::euler_rotation(tape, angles);
  const ad::Tensor transformed = ad::rigid_apply(tape, points, rotation, translation);
  return {angles, translation, transformed};
}

ad::Tensor points_tensor(const PointCloud& cloud, bool requires_grad) {
  auto flat = cloud.flattened();
  return requires_grad ? ad::Tensor::parameter({cloud.size(), 3}, std::move(flat))
                       : ad::Tensor::constant({cloud.size(), 3}, std::move(flat));
}

std::vector<double> encode_latent(const PointCloud& source, std::span<const double> z, const DecoderParams& params,
                                  ad::Mode mode) {
  ad::Tape tape;
  DecoderPass pass(params, false);
  const auto pooled = pass.encode_latent(tape, points_tensor(source), ad::Tensor::constant({z.size()}, {z.begin(), z.end()}), mode);
  return {pooled.data().begin(), pooled.data().end()};
}

RigidTransform decode_transform(std::span<const double> pooled, const DecoderParams& params, ad::Mode mode) {
  ad::Tape tape;
  DecoderPass pass(params, false);
  auto [angles, translation] = pass.decode_transform(tape, ad::Tensor::constant({pooled.size()}, {pooled.begin(), pooled.end()}), mode);
  return DecoderOutput{angles, translation, {}}.transform();
}

std::pair<RigidTransform, PointCloud> forward(const PointCloud& source, std::span<const double> z,
                                              const DecoderParams& params, ad::Mode mode) {
  ad::Tape tape;
  DecoderPass pass(params, false);
  const auto out = pass.forward(tape, points_tensor(source), ad::Tensor::constant({z.size()}, {z.begin(), z.end()}), mode);
  return {out.transform(), PointCloud::from_flat(out.transformed.data())};
}

}  // namespace scr
