#include "scralign/autodiff.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <sstream>

#include "scralign/errors.hpp"

namespace scr::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;
using VecMap = Eigen::Map<Eigen::VectorXd>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

ConstMatMap as_matrix(std::span<const double> data, std::size_t rows, std::size_t cols) {
  return ConstMatMap(data.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

MatMap as_matrix(std::span<double> data, std::size_t rows, std::size_t cols) {
  return MatMap(data.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

[[noreturn]] void shape_error(const std::string& op, const Shape& a, const Shape& b) {
  throw ShapeError(op + ": incompatible shapes " + to_string(a) + " and " + to_string(b));
}

// Rows/cols of a tensor used as a matrix; rank-1 tensors are one row.
std::pair<std::size_t, std::size_t> matrix_dims(const Tensor& t) {
  if (t.rank() == 1) return {1, t.dim(0)};
  if (t.rank() == 2) return {t.dim(0), t.dim(1)};
  throw ShapeError("expected a rank-1 or rank-2 tensor, got " + to_string(t.shape()));
}

Eigen::Matrix3d rot_x(double a) {
  Eigen::Matrix3d r;
  r << 1, 0, 0, 0, std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a);
  return r;
}
Eigen::Matrix3d rot_y(double b) {
  Eigen::Matrix3d r;
  r << std::cos(b), 0, std::sin(b), 0, 1, 0, -std::sin(b), 0, std::cos(b);
  return r;
}
Eigen::Matrix3d rot_z(double g) {
  Eigen::Matrix3d r;
  r << std::cos(g), -std::sin(g), 0, std::sin(g), std::cos(g), 0, 0, 0, 1;
  return r;
}
Eigen::Matrix3d d_rot_x(double a) {
  Eigen::Matrix3d r;
  r << 0, 0, 0, 0, -std::sin(a), -std::cos(a), 0, std::cos(a), -std::sin(a);
  return r;
}
Eigen::Matrix3d d_rot_y(double b) {
  Eigen::Matrix3d r;
  r << -std::sin(b), 0, std::cos(b), 0, 0, 0, -std::cos(b), 0, -std::sin(b);
  return r;
}
Eigen::Matrix3d d_rot_z(double g) {
  Eigen::Matrix3d r;
  r << -std::sin(g), -std::cos(g), 0, std::cos(g), -std::sin(g), 0, 0, 0, 0;
  return r;
}

}  // namespace

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

// ---- Tensor -------------------------------------------------------------------------

Tensor Tensor::constant(Shape shape, std::vector<double> data) {
  if (ad::numel(shape) != data.size()) {
    throw ShapeError("tensor data length " + std::to_string(data.size()) + " does not match shape " +
                     to_string(shape));
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  return Tensor(std::move(node));
}

Tensor Tensor::parameter(Shape shape, std::vector<double> data) {
  Tensor t = constant(std::move(shape), std::move(data));
  t.node_->requires_grad = true;
  return t;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const auto n = ad::numel(shape);
  Tensor t = constant(std::move(shape), std::vector<double>(n, 0.0));
  t.node_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  Tensor t = constant({}, {value});
  t.node_->requires_grad = requires_grad;
  return t;
}

double Tensor::item() const {
  if (numel() != 1) throw ContractError("item() on tensor of shape " + to_string(shape()));
  return node_->data[0];
}

std::vector<double> Tensor::grad() const {
  if (node_->grad.empty()) return std::vector<double>(node_->data.size(), 0.0);
  return node_->grad;
}

std::span<double> Tensor::grad_buffer() const {
  if (node_->grad.empty()) node_->grad.assign(node_->data.size(), 0.0);
  return node_->grad;
}

void Tensor::accumulate_grad(std::span<const double> g) const {
  auto buf = grad_buffer();
  if (g.size() != buf.size()) throw ShapeError("gradient length mismatch for " + to_string(shape()));
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] += g[i];
}

// ---- Tape ---------------------------------------------------------------------------

Tensor Tape::make_output(Shape shape, std::vector<double> data, std::initializer_list<Tensor> inputs) {
  Tensor out = Tensor::constant(std::move(shape), std::move(data));
  for (const auto& in : inputs) {
    if (in.defined() && in.requires_grad()) {
      out.node().requires_grad = true;
      break;
    }
  }
  return out;
}

void Tape::record(const Tensor& output, std::function<void()> backward_rule) {
  if (!output.requires_grad()) return;
  entries_.push_back({output, std::move(backward_rule)});
}

void Tape::backward(const Tensor& scalar_output) {
  if (scalar_output.numel() != 1) {
    throw ContractError("backward requires a scalar output, got shape " + to_string(scalar_output.shape()));
  }
  if (!scalar_output.requires_grad()) return;
  Tensor seed = scalar_output;
  seed.grad_buffer()[0] += 1.0;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    if (!it->output.has_grad()) continue;
    it->rule();
  }
}

// ---- operations ---------------------------------------------------------------------

Tensor linear(Tape& tape, const Tensor& input, const Tensor& weight, const Tensor& bias) {
  const auto [n, d_in] = matrix_dims(input);
  if (weight.rank() != 2 || weight.dim(0) != d_in) shape_error("linear(input, weight)", input.shape(), weight.shape());
  const std::size_t d_out = weight.dim(1);
  if (bias.numel() != d_out) shape_error("linear(weight, bias)", weight.shape(), bias.shape());

  std::vector<double> out(n * d_out);
  {
    auto y = as_matrix(std::span<double>(out), n, d_out);
    y.noalias() = as_matrix(input.data(), n, d_in) * as_matrix(weight.data(), d_in, d_out);
    y.rowwise() += as_matrix(bias.data(), 1, d_out).row(0);
  }
  Shape shape = input.rank() == 1 ? Shape{d_out} : Shape{n, d_out};
  Tensor y = tape.make_output(std::move(shape), std::move(out), {input, weight, bias});
  tape.record(y, [y, input, weight, bias, n, d_in, d_out]() mutable {
    const auto dy = as_matrix(std::span<const double>(y.grad_buffer()), n, d_out);
    if (input.requires_grad()) {
      auto dx = as_matrix(Tensor(input).grad_buffer(), n, d_in);
      dx.noalias() += dy * as_matrix(weight.data(), d_in, d_out).transpose();
    }
    if (weight.requires_grad()) {
      auto dw = as_matrix(Tensor(weight).grad_buffer(), d_in, d_out);
      dw.noalias() += as_matrix(input.data(), n, d_in).transpose() * dy;
    }
    if (bias.requires_grad()) {
      auto db = as_matrix(Tensor(bias).grad_buffer(), 1, d_out);
      db += dy.colwise().sum();
    }
  });
  return y;
}

Tensor linear_with_latent(Tape& tape, const Tensor& points, const Tensor& latent, const Tensor& weight,
                          const Tensor& bias) {
  if (points.rank() != 2) throw ShapeError("linear_with_latent: points must be rank 2, got " + to_string(points.shape()));
  const std::size_t n = points.dim(0), p = points.dim(1), d = latent.numel();
  if (weight.rank() != 2 || weight.dim(0) != p + d) {
    throw ShapeError("linear_with_latent: weight " + to_string(weight.shape()) + " does not accept " +
                     std::to_string(p) + " point columns plus latent " + to_string(latent.shape()));
  }
  const std::size_t d_out = weight.dim(1);
  if (bias.numel() != d_out) shape_error("linear_with_latent(weight, bias)", weight.shape(), bias.shape());

  const auto w = as_matrix(weight.data(), p + d, d_out);
  std::vector<double> out(n * d_out);
  {
    auto y = as_matrix(std::span<double>(out), n, d_out);
    Eigen::RowVectorXd row = as_matrix(latent.data(), 1, d) * w.bottomRows(static_cast<Eigen::Index>(d)) +
                             as_matrix(bias.data(), 1, d_out);
    y.noalias() = as_matrix(points.data(), n, p) * w.topRows(static_cast<Eigen::Index>(p));
    y.rowwise() += row;
  }
  Tensor y = tape.make_output({n, d_out}, std::move(out), {points, latent, weight, bias});
  tape.record(y, [y, points, latent, weight, bias, n, p, d, d_out]() mutable {
    const auto dy = as_matrix(std::span<const double>(y.grad_buffer()), n, d_out);
    const auto w = as_matrix(weight.data(), p + d, d_out);
    const Eigen::RowVectorXd col_sum = dy.colwise().sum();
    if (points.requires_grad()) {
      auto dp = as_matrix(Tensor(points).grad_buffer(), n, p);
      dp.noalias() += dy * w.topRows(static_cast<Eigen::Index>(p)).transpose();
    }
    if (latent.requires_grad()) {
      auto dz = as_matrix(Tensor(latent).grad_buffer(), 1, d);
      dz.noalias() += col_sum * w.bottomRows(static_cast<Eigen::Index>(d)).transpose();
    }
    if (weight.requires_grad()) {
      auto dw = as_matrix(Tensor(weight).grad_buffer(), p + d, d_out);
      dw.topRows(static_cast<Eigen::Index>(p)).noalias() += as_matrix(points.data(), n, p).transpose() * dy;
      dw.bottomRows(static_cast<Eigen::Index>(d)).noalias() += as_matrix(latent.data(), 1, d).transpose() * col_sum;
    }
    if (bias.requires_grad()) {
      auto db = as_matrix(Tensor(bias).grad_buffer(), 1, d_out);
      db += col_sum;
    }
  });
  return y;
}

Tensor concat_latent(Tape& tape, const Tensor& points, const Tensor& latent) {
  if (points.rank() != 2) throw ShapeError("concat_latent: points must be rank 2, got " + to_string(points.shape()));
  const std::size_t n = points.dim(0), p = points.dim(1), d = latent.numel();
  std::vector<double> out(n * (p + d));
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(points.data().begin() + static_cast<std::ptrdiff_t>(i * p), p, out.begin() + static_cast<std::ptrdiff_t>(i * (p + d)));
    std::copy(latent.data().begin(), latent.data().end(), out.begin() + static_cast<std::ptrdiff_t>(i * (p + d) + p));
  }
  Tensor y = tape.make_output({n, p + d}, std::move(out), {points, latent});
  tape.record(y, [y, points, latent, n, p, d]() mutable {
    const auto dy = y.grad_buffer();
    if (points.requires_grad()) {
      auto dp = Tensor(points).grad_buffer();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < p; ++j) dp[i * p + j] += dy[i * (p + d) + j];
    }
    if (latent.requires_grad()) {
      auto dz = Tensor(latent).grad_buffer();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) dz[j] += dy[i * (p + d) + p + j];
    }
  });
  return y;
}

Tensor leaky_relu(Tape& tape, const Tensor& input, double negative_slope) {
  std::vector<double> out(input.data().begin(), input.data().end());
  for (auto& v : out) v = v >= 0.0 ? v : negative_slope * v;
  Tensor y = tape.make_output(input.shape(), std::move(out), {input});
  tape.record(y, [y, input, negative_slope]() mutable {
    const auto dy = y.grad_buffer();
    const auto x = input.data();
    auto dx = Tensor(input).grad_buffer();
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += x[i] >= 0.0 ? dy[i] : negative_slope * dy[i];
  });
  return y;
}

BatchNormStats BatchNormStats::fresh(std::size_t features) {
  return {std::vector<double>(features, 0.0), std::vector<double>(features, 1.0)};
}

void update_running_stats(BatchNormStats& running, const BatchNormStats& observed) {
  for (std::size_t j = 0; j < running.running_mean.size(); ++j) {
    running.running_mean[j] = (1.0 - kBatchNormMomentum) * running.running_mean[j] + kBatchNormMomentum * observed.running_mean[j];
    running.running_var[j] = (1.0 - kBatchNormMomentum) * running.running_var[j] + kBatchNormMomentum * observed.running_var[j];
  }
}

Tensor batch_norm_observed(Tape& tape, const Tensor& input, const Tensor& gamma, const Tensor& beta,
                           const BatchNormStats& running, Mode mode, BatchNormStats* observed) {
  const auto [n, d] = matrix_dims(input);
  if (gamma.numel() != d || beta.numel() != d) shape_error("batch_norm(input, gamma/beta)", input.shape(), gamma.shape());
  if (running.running_mean.size() != d || running.running_var.size() != d) {
    throw ShapeError("batch_norm: running statistics have " + std::to_string(running.running_mean.size()) +
                     " features, input has " + std::to_string(d));
  }
  if (mode == Mode::Train && n < 2) throw ContractError("batch_norm: batch of " + std::to_string(n) + " row(s) is too small in train mode");

  const auto x = as_matrix(input.data(), n, d);
  Eigen::RowVectorXd mean(d), inv_std(d);
  if (mode == Mode::Train) {
    mean = x.colwise().mean();
    const Eigen::RowVectorXd var = (x.rowwise() - mean).array().square().colwise().sum() / static_cast<double>(n);
    inv_std = (var.array() + kBatchNormEps).rsqrt();
    if (observed) {
      observed->running_mean.assign(mean.data(), mean.data() + d);
      observed->running_var.resize(d);
      for (std::size_t j = 0; j < d; ++j) observed->running_var[j] = var[static_cast<Eigen::Index>(j)] * static_cast<double>(n) / static_cast<double>(n - 1);
    }
  } else {
    for (std::size_t j = 0; j < d; ++j) {
      mean[static_cast<Eigen::Index>(j)] = running.running_mean[j];
      inv_std[static_cast<Eigen::Index>(j)] = 1.0 / std::sqrt(running.running_var[j] + kBatchNormEps);
    }
  }

  RowMat x_hat = (x.rowwise() - mean).array().rowwise() * inv_std.array();
  std::vector<double> out(n * d);
  {
    auto y = as_matrix(std::span<double>(out), n, d);
    y = (x_hat.array().rowwise() * as_matrix(gamma.data(), 1, d).row(0).array()).rowwise() + as_matrix(beta.data(), 1, d).row(0).array();
  }
  Tensor y = tape.make_output(input.shape(), std::move(out), {input, gamma, beta});
  tape.record(y, [y, input, gamma, beta, x_hat = std::move(x_hat), inv_std, mode, n, d]() mutable {
    const auto dy = as_matrix(std::span<const double>(y.grad_buffer()), n, d);
    if (gamma.requires_grad()) {
      auto dg = as_matrix(Tensor(gamma).grad_buffer(), 1, d);
      dg += (dy.array() * x_hat.array()).colwise().sum().matrix();
    }
    if (beta.requires_grad()) {
      auto db = as_matrix(Tensor(beta).grad_buffer(), 1, d);
      db += dy.colwise().sum();
    }
    if (input.requires_grad()) {
      auto dx = as_matrix(Tensor(input).grad_buffer(), n, d);
      const RowMat dx_hat = dy.array().rowwise() * as_matrix(gamma.data(), 1, d).row(0).array();
      if (mode == Mode::Train) {
        const double inv_n = 1.0 / static_cast<double>(n);
        const Eigen::RowVectorXd sum_dxh = dx_hat.colwise().sum();
        const Eigen::RowVectorXd sum_dxh_xh = (dx_hat.array() * x_hat.array()).colwise().sum().matrix();
        RowMat centered = (dx_hat * static_cast<double>(n)).rowwise() - sum_dxh;
        centered -= (x_hat.array().rowwise() * sum_dxh_xh.array()).matrix();
        dx += ((centered.array().rowwise() * inv_std.array()) * inv_n).matrix();
      } else {
        dx += (dx_hat.array().rowwise() * inv_std.array()).matrix();
      }
    }
  });
  return y;
}

Tensor batch_norm(Tape& tape, const Tensor& input, const Tensor& gamma, const Tensor& beta, BatchNormStats& running,
                  Mode mode) {
  BatchNormStats observed;
  Tensor y = batch_norm_observed(tape, input, gamma, beta, running, mode, &observed);
  if (mode == Mode::Train) update_running_stats(running, observed);
  return y;
}

Tensor max_pool_rows(Tape& tape, const Tensor& input) {
  const auto [n, d] = matrix_dims(input);
  if (n < 1) throw ContractError("max_pool_rows: empty input");
  const auto x = input.data();
  std::vector<double> out(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(d));
  std::vector<std::size_t> arg(d, 0);
  for (std::size_t i = 1; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      if (x[i * d + j] > out[j]) {
        out[j] = x[i * d + j];
        arg[j] = i;
      }
    }
  }
  Tensor y = tape.make_output({d}, std::move(out), {input});
  tape.record(y, [y, input, arg = std::move(arg), d]() mutable {
    const auto dy = y.grad_buffer();
    auto dx = Tensor(input).grad_buffer();
    for (std::size_t j = 0; j < d; ++j) dx[arg[j] * d + j] += dy[j];
  });
  return y;
}

Tensor euler_rotation(Tape& tape, const Tensor& angles) {
  if (angles.numel() != 3) throw ShapeError("euler_rotation: expected 3 angles, got " + to_string(angles.shape()));
  const double a = angles[0], b = angles[1], g = angles[2];
  const Eigen::Matrix3d rx = rot_x(a), ry = rot_y(b), rz = rot_z(g);
  const Eigen::Matrix<double, 3, 3, Eigen::RowMajor> r = rz * ry * rx;
  Tensor y = tape.make_output({3, 3}, std::vector<double>(r.data(), r.data() + 9), {angles});
  tape.record(y, [y, angles, a, b, g, rx, ry, rz]() mutable {
    const Eigen::Map<const Eigen::Matrix<double, 3, 3, Eigen::RowMajor>> dr(y.grad_buffer().data());
    const Eigen::Matrix3d da = rz * ry * d_rot_x(a);
    const Eigen::Matrix3d db = rz * d_rot_y(b) * rx;
    const Eigen::Matrix3d dg = d_rot_z(g) * ry * rx;
    auto grad = Tensor(angles).grad_buffer();
    grad[0] += (dr.array() * da.array()).sum();
    grad[1] += (dr.array() * db.array()).sum();
    grad[2] += (dr.array() * dg.array()).sum();
  });
  return y;
}

Tensor rigid_apply(Tape& tape, const Tensor& points, const Tensor& rotation, const Tensor& translation) {
  if (points.rank() != 2 || points.dim(1) != 3) throw ShapeError("rigid_apply: points must be n x 3, got " + to_string(points.shape()));
  if (rotation.numel() != 9) throw ShapeError("rigid_apply: rotation must be 3 x 3, got " + to_string(rotation.shape()));
  if (translation.numel() != 3) throw ShapeError("rigid_apply: translation must have 3 entries, got " + to_string(translation.shape()));
  const std::size_t n = points.dim(0);
  std::vector<double> out(n * 3);
  {
    auto y = as_matrix(std::span<double>(out), n, 3);
    y.noalias() = as_matrix(points.data(), n, 3) * as_matrix(rotation.data(), 3, 3).transpose();
    y.rowwise() += as_matrix(translation.data(), 1, 3).row(0);
  }
  Tensor y = tape.make_output({n, 3}, std::move(out), {points, rotation, translation});
  tape.record(y, [y, points, rotation, translation, n]() mutable {
    const auto dy = as_matrix(std::span<const double>(y.grad_buffer()), n, 3);
    if (points.requires_grad()) {
      auto dx = as_matrix(Tensor(points).grad_buffer(), n, 3);
      dx.noalias() += dy * as_matrix(rotation.data(), 3, 3);
    }
    if (rotation.requires_grad()) {
      auto dr = as_matrix(Tensor(rotation).grad_buffer(), 3, 3);
      dr.noalias() += dy.transpose() * as_matrix(points.data(), n, 3);
    }
    if (translation.requires_grad()) {
      auto dt = as_matrix(Tensor(translation).grad_buffer(), 1, 3);
      dt += dy.colwise().sum();
    }
  });
  return y;
}

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.numel() != b.numel()) shape_error("add", a.shape(), b.shape());
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  Tensor y = tape.make_output(a.shape(), std::move(out), {a, b});
  tape.record(y, [y, a, b]() mutable {
    const auto dy = y.grad_buffer();
    if (a.requires_grad()) a.accumulate_grad(dy);
    if (b.requires_grad()) b.accumulate_grad(dy);
  });
  return y;
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.numel() != b.numel()) shape_error("mul", a.shape(), b.shape());
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  Tensor y = tape.make_output(a.shape(), std::move(out), {a, b});
  tape.record(y, [y, a, b]() mutable {
    const auto dy = y.grad_buffer();
    // Read both operands before writing so that mul(x, x) sees unmodified data.
    if (a.requires_grad()) {
      auto da = a.grad_buffer();
      for (std::size_t i = 0; i < da.size(); ++i) da[i] += dy[i] * b[i];
    }
    if (b.requires_grad()) {
      auto db = b.grad_buffer();
      for (std::size_t i = 0; i < db.size(); ++i) db[i] += dy[i] * a[i];
    }
  });
  return y;
}

Tensor scale(Tape& tape, const Tensor& a, double factor) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (auto& v : out) v *= factor;
  Tensor y = tape.make_output(a.shape(), std::move(out), {a});
  tape.record(y, [y, a, factor]() mutable {
    const auto dy = y.grad_buffer();
    auto da = a.grad_buffer();
    for (std::size_t i = 0; i < da.size(); ++i) da[i] += factor * dy[i];
  });
  return y;
}

Tensor sum(Tape& tape, const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  Tensor y = tape.make_output({}, {s}, {a});
  tape.record(y, [y, a]() mutable {
    const double dy = y.grad_buffer()[0];
    auto da = a.grad_buffer();
    for (auto& g : da) g += dy;
  });
  return y;
}

// ---- Adam ---------------------------------------------------------------------------

AdamState::AdamState(std::span<const std::size_t> sizes, AdamHyper hyper) : hyper_(hyper) {
  for (auto s : sizes) {
    first_.emplace_back(s, 0.0);
    second_.emplace_back(s, 0.0);
  }
}

void adam_step(std::span<const std::span<double>> params, std::span<const std::span<const double>> grads,
               AdamState& state, double lr) {
  if (!(lr > 0.0)) throw InvalidArgument("adam_step: learning rate must be positive");
  if (params.size() != grads.size() || params.size() != state.first_.size()) {
    throw ShapeError("adam_step: " + std::to_string(params.size()) + " params, " + std::to_string(grads.size()) +
                     " grads, " + std::to_string(state.first_.size()) + " moment slots");
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (params[k].size() != grads[k].size() || params[k].size() != state.first_[k].size()) {
      throw ShapeError("adam_step: size mismatch in parameter slot " + std::to_string(k));
    }
    for (std::size_t i = 0; i < grads[k].size(); ++i) {
      if (!std::isfinite(grads[k][i])) {
        throw NumericalError("adam_step: non-finite gradient in parameter slot " + std::to_string(k) + " at index " +
                             std::to_string(i) + "; step aborted");
      }
    }
  }
  const auto& h = state.hyper_;
  state.step_ += 1;
  const double t = static_cast<double>(state.step_);
  const double c1 = 1.0 - std::pow(h.beta1, t);
  const double c2 = 1.0 - std::pow(h.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& m = state.first_[k];
    auto& v = state.second_[k];
    for (std::size_t i = 0; i < params[k].size(); ++i) {
      const double g = grads[k][i];
      m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * g;
      v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * g * g;
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      params[k][i] -= lr * m_hat / (std::sqrt(v_hat) + h.eps);
    }
  }
}

void adam_step(std::span<double> param, std::span<const double> grad, AdamState& state, double lr) {
  const std::span<double> p[1] = {param};
  const std::span<const double> g[1] = {grad};
  adam_step(std::span<const std::span<double>>(p), std::span<const std::span<const double>>(g), state, lr);
}

}  // namespace scr::ad
