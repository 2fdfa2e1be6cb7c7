#pragma once

// Minimal reverse-mode automatic differentiation over dense row-major float64 tensors.
//
// A Tensor is a cheap handle to shared storage. Operations take a Tape, compute their
// output eagerly and, when any input requires a gradient, append a backward rule to the
// tape. Tape::backward replays those rules in reverse recording order, which is a valid
// reverse topological order because an entry can only reference tensors that existed
// when it was recorded.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace scr::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

class Tensor {
 public:
  struct Node {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until the first accumulation
    bool requires_grad = false;
  };

  Tensor() = default;

  /// Non-differentiable tensor. Throws ShapeError when data does not match the shape.
  static Tensor constant(Shape shape, std::vector<double> data);
  /// Leaf tensor that receives gradients.
  static Tensor parameter(Shape shape, std::vector<double> data);
  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t numel() const { return node_->data.size(); }
  bool requires_grad() const { return node_->requires_grad; }

  std::span<const double> data() const { return node_->data; }
  /// Direct write access. Only valid between passes (never while a tape references it).
  std::span<double> mutable_data() { return node_->data; }
  double item() const;
  double operator[](std::size_t i) const { return node_->data[i]; }

  bool has_grad() const { return !node_->grad.empty(); }
  /// Gradient buffer; zeros when nothing has been accumulated yet.
  std::vector<double> grad() const;
  void zero_grad() const { node_->grad.clear(); }

  /// Adds `g` into the gradient buffer, allocating it on first use.
  void accumulate_grad(std::span<const double> g) const;
  std::span<double> grad_buffer() const;

  Node& node() const { return *node_; }
  friend bool same_node(const Tensor& a, const Tensor& b) { return a.node_ == b.node_; }

 private:
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}
  std::shared_ptr<Node> node_;
};

class Tape {
 public:
  /// Creates the output tensor of an operation. It requires a gradient iff any input does.
  Tensor make_output(Shape shape, std::vector<double> data, std::initializer_list<Tensor> inputs);

  /// Records a backward rule for `output`. The rule reads output.grad_buffer() and
  /// accumulates into the inputs that require gradients. Ignored when output does not
  /// require a gradient.
  void record(const Tensor& output, std::function<void()> backward_rule);

  /// Seeds d(output)/d(output) = 1 and propagates. Throws ContractError for non-scalars.
  void backward(const Tensor& scalar_output);

  std::size_t size() const noexcept { return entries_.size(); }
  void clear() { entries_.clear(); }

 private:
  struct Entry {
    Tensor output;
    std::function<void()> rule;
  };
  std::vector<Entry> entries_;
};

// ---- operations -------------------------------------------------------------------

/// input[n x d_in] * weight[d_in x d_out] + bias[d_out]. A rank-1 input is treated as a
/// single row and yields a rank-1 output.
Tensor linear(Tape& tape, const Tensor& input, const Tensor& weight, const Tensor& bias);

/// Equivalent to linear(concat_rows([points, broadcast(latent)]), weight, bias) for
/// points[n x p], latent[d], weight[(p + d) x d_out]. The latent block is multiplied once
/// instead of once per row.
Tensor linear_with_latent(Tape& tape, const Tensor& points, const Tensor& latent, const Tensor& weight,
                          const Tensor& bias);

/// Builds the explicit n x (p + d) matrix of [point, latent] rows. Used as a reference path.
Tensor concat_latent(Tape& tape, const Tensor& points, const Tensor& latent);

Tensor leaky_relu(Tape& tape, const Tensor& input, double negative_slope = 0.01);

enum class Mode { Train, Eval };

struct BatchNormStats {
  std::vector<double> running_mean;
  std::vector<double> running_var;

  static BatchNormStats fresh(std::size_t features);  // mean 0, var 1
};

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

/// Column-wise batch normalization of input[n x d]. In Train mode the batch statistics are
/// used and `running` is updated with momentum 0.1 (unbiased variance, as in common
/// frameworks); in Eval mode the running statistics are used and nothing is mutated.
/// Throws ContractError when n < 2 in Train mode.
Tensor batch_norm(Tape& tape, const Tensor& input, const Tensor& gamma, const Tensor& beta,
                  BatchNormStats& running, Mode mode);

/// Same as batch_norm but leaves `running` untouched and, in Train mode, writes the observed
/// batch mean and unbiased variance to `observed` so the caller can fold them in later.
Tensor batch_norm_observed(Tape& tape, const Tensor& input, const Tensor& gamma, const Tensor& beta,
                           const BatchNormStats& running, Mode mode, BatchNormStats* observed);

/// Folds one batch observation into running statistics with the standard momentum rule.
void update_running_stats(BatchNormStats& running, const BatchNormStats& observed);

/// Column-wise max over rows: input[n x d] -> [d]. Gradient goes to the first argmax row.
Tensor max_pool_rows(Tape& tape, const Tensor& input);

/// angles[3] (x, y, z radians) -> [3 x 3] rotation Rz * Ry * Rx.
Tensor euler_rotation(Tape& tape, const Tensor& angles);

/// points[n x 3] -> points * R^T + t, i.e. every row x becomes R x + t.
Tensor rigid_apply(Tape& tape, const Tensor& points, const Tensor& rotation, const Tensor& translation);

Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape& tape, const Tensor& a, double factor);
Tensor sum(Tape& tape, const Tensor& a);

// ---- optimizer ----------------------------------------------------------------------

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class AdamState {
 public:
  AdamState() = default;
  explicit AdamState(std::span<const std::size_t> sizes, AdamHyper hyper = {});

  std::int64_t step() const noexcept { return step_; }
  const AdamHyper& hyper() const noexcept { return hyper_; }
  std::size_t size() const noexcept { return first_.size(); }
  std::span<const double> first_moment(std::size_t i) const { return first_.at(i); }
  std::span<const double> second_moment(std::size_t i) const { return second_.at(i); }

 private:
  friend void adam_step(std::span<const std::span<double>>, std::span<const std::span<const double>>,
                        AdamState&, double);
  std::vector<std::vector<double>> first_;
  std::vector<std::vector<double>> second_;
  std::int64_t step_ = 0;
  AdamHyper hyper_;
};

/// One bias-corrected Adam update. Checks every gradient before touching anything and
/// throws NumericalError on a non-finite value, leaving params and state unchanged.
void adam_step(std::span<const std::span<double>> params, std::span<const std::span<const double>> grads,
               AdamState& state, double lr);

/// Convenience overload for a single parameter array.
void adam_step(std::span<double> param, std::span<const double> grad, AdamState& state, double lr);

}  // namespace scr::ad
