#include "scralign/baselines.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "scralign/errors.hpp"
#include "scralign/losses.hpp"

namespace scr {

std::pair<Mat3, Vec3> kabsch_matrix(std::span<const Vec3> src, std::span<const Vec3> dst) {
  if (src.size() != dst.size()) throw InvalidArgument("kabsch: correspondence lists differ in length");
  if (src.size() < 3) throw DegenerateGeometry("kabsch: need at least 3 correspondences");
  const double n = static_cast<double>(src.size());
  Vec3 cs = Vec3::Zero(), cd = Vec3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    cs += src[i];
    cd += dst[i];
  }
  cs /= n;
  cd /= n;
  Mat3 h = Mat3::Zero(), spread = Mat3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const Vec3 a = src[i] - cs;
    h += a * (dst[i] - cd).transpose();
    spread += a * a.transpose();
  }
  const Eigen::SelfAdjointEigenSolver<Mat3> shape(spread);
  const Vec3 ev = shape.eigenvalues();  // ascending
  if (!(ev[2] > 0.0) || ev[1] <= 1e-12 * ev[2]) throw DegenerateGeometry("kabsch: source points are collinear or coincident");

  const Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Mat3 u = svd.matrixU(), v = svd.matrixV();
  Mat3 d = Mat3::Identity();
  d(2, 2) = (v * u.transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  const Mat3 r = v * d * u.transpose();
  return {r, cd - r * cs};
}

RigidTransform kabsch(std::span<const Vec3> src, std::span<const Vec3> dst) {
  const auto [r, t] = kabsch_matrix(src, dst);
  return make_transform(r, t);
}

IcpResult icp_register(const PointCloud& source, const PointCloud& target, const IcpConfig& config) {
  if (config.max_iterations < 1) throw InvalidArgument("icp: max_iterations must be >= 1");
  if (source.size() < 3 || target.size() < 3) throw DegenerateGeometry("icp: both clouds need at least 3 points");
  const KdTree tree(target.points());
  IcpResult result;
  Mat3 rot = Mat3::Identity(), prev_rot = rot;
  Vec3 trans = Vec3::Zero(), prev_trans = trans;
  std::vector<Vec3> matched(source.size());
  for (int it = 0; it < config.max_iterations; ++it) {
    double mse = 0.0;
    for (std::size_t i = 0; i < source.size(); ++i) {
      const auto nn = tree.nearest(rot * source[i] + trans);
      matched[i] = target[nn.index];
      mse += nn.sq_dist;
    }
    mse /= static_cast<double>(source.size());
    if (!result.mse_log.empty()) {
      const double prev = result.mse_log.back();
      if (mse > prev) {
        // Rounding noise at the fixed point; keep the previous estimate.
        rot = prev_rot;
        trans = prev_trans;
        result.converged = true;
        break;
      }
      if (prev - mse < config.convergence_tol) {
        result.mse_log.push_back(mse);
        result.converged = true;
        break;
      }
    }
    result.mse_log.push_back(mse);
    const auto [r, t] = kabsch_matrix(source.points(), matched);
    prev_rot = rot;
    prev_trans = trans;
    rot = r;
    trans = t;
    result.iterations = it + 1;
  }
  result.transform = make_transform(rot, trans);
  return result;
}

DirectResult direct_optimize(const PointCloud& source, const PointCloud& target, const DirectConfig& config) {
  if (config.steps < 0) throw InvalidArgument("direct_optimize: steps must be non-negative");
  const ad::Tensor points = points_tensor(source);
  std::vector<double> phi(6, 0.0);  // 3 angles, 3 translation components
  const std::size_t sizes[1] = {6};
  ad::AdamState opt(sizes);
  OverlapScheduler overlap(config.loss_kind, config.sigma_schedule, config.steps_per_sigma_epoch, source.size(), target.size());
  DirectResult result;
  for (int step = 0; step <= config.steps; ++step) {
    ad::Tape tape;
    const ad::Tensor angles = ad::Tensor::parameter({3}, {phi[0], phi[1], phi[2]});
    const ad::Tensor translation = ad::Tensor::parameter({3}, {phi[3], phi[4], phi[5]});
    const ad::Tensor moved = ad::rigid_apply(tape, points, ad::euler_rotation(tape, angles), translation);
    const OverlapState* masks = nullptr;
    if (config.loss_kind == LossKind::AdaptiveChamfer) masks = overlap.before_step(step, PointCloud::from_flat(moved.data()), target);
    const ad::Tensor loss = chamfer_loss(tape, moved, target, masks);
    const double value = loss.item();
    if (!std::isfinite(value)) throw NumericalError("direct_optimize: non-finite loss at step " + std::to_string(step));
    result.loss_log.push_back(value);
    result.final_loss = value;
    result.transform.rotation = EulerAnglesXYZ{phi[0], phi[1], phi[2]}.canonical();
    result.transform.translation = Vec3(phi[3], phi[4], phi[5]);
    if (step == config.steps) break;
    tape.backward(loss);
    const auto ga = angles.grad(), gt = translation.grad();
    const std::vector<double> grad{ga[0], ga[1], ga[2], gt[0], gt[1], gt[2]};
    ad::adam_step(phi, grad, opt, config.lr);
  }
  return result;
}

DirectResult direct_optimize(const PointCloud& source, const PointCloud& target, LossKind loss_kind, int steps, double lr) {
  DirectConfig cfg;
  cfg.loss_kind = loss_kind;
  cfg.steps = steps;
  cfg.lr = lr;
  return direct_optimize(source, target, cfg);
}

}  // namespace scr
