#pragma once

// Transformation decoder: every source point is stacked with the pair latent, passed through a
// shared point MLP, max-pooled into a pair feature, and regressed by two independent heads into
// Euler angles (radians) and a translation.

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "scralign/autodiff.hpp"
#include "scralign/geometry.hpp"

namespace scr {

struct DecoderConfig {
  std::size_t latent_dim = 256;
  std::vector<std::size_t> point_mlp_dims{256, 128};
  std::vector<std::size_t> head_dims{128, 64, 3};
  bool use_batch_norm = false;
  double leaky_slope = 0.01;

  /// Throws InvalidArgument on empty layer lists or a head not ending in 3 outputs.
  void validate() const;
  std::size_t point_input_dim() const { return 3 + latent_dim; }
  std::size_t pooled_dim() const { return point_mlp_dims.back(); }

  /// Closed form: sum over point layers of in*out + out (+ 2*out with batch norm), plus twice
  /// the same sum over head layers (no batch norm in the heads).
  std::size_t parameter_count() const;

  friend bool operator==(const DecoderConfig&, const DecoderConfig&) = default;
};

struct NamedArray {
  std::string name;
  ad::Shape shape;
  std::vector<double> values;

  friend bool operator==(const NamedArray&, const NamedArray&) = default;
};

class DecoderParams {
 public:
  DecoderParams() = default;

  /// Weights and biases uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)]; batch-norm gamma 1, beta 0.
  static DecoderParams initialize(const DecoderConfig& config, std::uint64_t seed);
  /// Every trainable value zero (gamma included), running stats at mean 0 / var 1.
  static DecoderParams zeros(const DecoderConfig& config);

  const DecoderConfig& config() const noexcept { return config_; }
  std::vector<NamedArray>& tensors() noexcept { return tensors_; }
  const std::vector<NamedArray>& tensors() const noexcept { return tensors_; }
  std::vector<ad::BatchNormStats>& running_stats() noexcept { return running_; }
  const std::vector<ad::BatchNormStats>& running_stats() const noexcept { return running_; }

  const NamedArray& find(std::string_view name) const;
  NamedArray& find(std::string_view name);
  std::size_t parameter_count() const;
  /// FNV-1a over the raw bytes of every tensor and running statistic.
  std::uint64_t checksum() const;
  bool all_finite() const;

  friend bool operator==(const DecoderParams& a, const DecoderParams& b);

 private:
  static DecoderParams layout(const DecoderConfig& config);

  DecoderConfig config_;
  std::vector<NamedArray> tensors_;
  std::vector<ad::BatchNormStats> running_;  // one per point-MLP layer when batch norm is on
};

struct DecoderOutput {
  ad::Tensor angles;       // [3] radians
  ad::Tensor translation;  // [3]
  ad::Tensor transformed;  // [n x 3]

  RigidTransform transform() const;
};

/// Binds DecoderParams to tape leaves for one forward/backward pass. Leaves hold a copy of the
/// parameter values, so several passes can run against the same DecoderParams concurrently.
class DecoderPass {
 public:
  DecoderPass(const DecoderParams& params, bool track_param_grads);

  ad::Tensor encode_latent(ad::Tape& tape, const ad::Tensor& points, const ad::Tensor& z, ad::Mode mode);
  /// Returns (angles, translation).
  std::pair<ad::Tensor, ad::Tensor> decode_transform(ad::Tape& tape, const ad::Tensor& pooled, ad::Mode mode);
  DecoderOutput forward(ad::Tape& tape, const ad::Tensor& points, const ad::Tensor& z, ad::Mode mode);

  /// One leaf per DecoderParams::tensors() entry, same order.
  const std::vector<ad::Tensor>& leaves() const noexcept { return leaves_; }
  /// Batch statistics seen by each point-MLP batch norm in the last Train-mode encode.
  const std::vector<ad::BatchNormStats>& observed_stats() const noexcept { return observed_; }

 private:
  const ad::Tensor& leaf(std::size_t index) const { return leaves_[index]; }

  const DecoderParams* params_;
  std::vector<ad::Tensor> leaves_;
  std::vector<ad::BatchNormStats> observed_;
};

ad::Tensor points_tensor(const PointCloud& cloud, bool requires_grad = false);

// Value-only conveniences (no gradient tracking).
std::vector<double> encode_latent(const PointCloud& source, std::span<const double> z, const DecoderParams& params,
                                  ad::Mode mode);
RigidTransform decode_transform(std::span<const double> pooled, const DecoderParams& params, ad::Mode mode);
std::pair<RigidTransform, PointCloud> forward(const PointCloud& source, std::span<const double> z,
                                              const DecoderParams& params, ad::Mode mode);

}  // namespace scr
