#pragma once

#include <span>
#include <vector>

#include "scralign/engine.hpp"
#include "scralign/geometry.hpp"

namespace scr {

/// Least-squares rigid transform mapping src onto dst (cross-covariance SVD with reflection
/// correction). Throws DegenerateGeometry for fewer than 3 points or collinear input.
RigidTransform kabsch(std::span<const Vec3> src, std::span<const Vec3> dst);

/// Rotation/translation pair from the same solve, without the Euler round trip.
std::pair<Mat3, Vec3> kabsch_matrix(std::span<const Vec3> src, std::span<const Vec3> dst);

struct IcpConfig {
  int max_iterations = 100;
  double convergence_tol = 1e-8;
};

struct IcpResult {
  RigidTransform transform;
  std::vector<double> mse_log;  // correspondence MSE at the start of each accepted iteration
  int iterations = 0;
  bool converged = false;
};

/// Point-to-point ICP. Stops when the correspondence MSE improves by less than the tolerance;
/// an iteration that would raise the MSE is rejected, so mse_log is non-increasing.
IcpResult icp_register(const PointCloud& source, const PointCloud& target, const IcpConfig& config = {});

struct DirectConfig {
  LossKind loss_kind = LossKind::Chamfer;
  int steps = 500;
  double lr = 0.01;
  SigmaSchedule sigma_schedule;
  int steps_per_sigma_epoch = 5;
};

struct DirectResult {
  RigidTransform transform;
  std::vector<double> loss_log;
  double final_loss = 0.0;
};

/// Adam on the six transform parameters directly (angles and translation start at zero),
/// against the same loss implementation used for latent optimization.
DirectResult direct_optimize(const PointCloud& source, const PointCloud& target, const DirectConfig& config = {});

DirectResult direct_optimize(const PointCloud& source, const PointCloud& target, LossKind loss_kind, int steps, double lr);

}  // namespace scr
