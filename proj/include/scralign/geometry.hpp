#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <span>
#include <vector>

namespace scr {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Ordered, nonempty set of finite 3D points.
class PointCloud {
 public:
  PointCloud() = default;
  /// Throws InvalidArgument when empty or when any coordinate is non-finite.
  explicit PointCloud(std::vector<Vec3> points);

  std::size_t size() const noexcept { return points_.size(); }
  bool empty() const noexcept { return points_.empty(); }
  const Vec3& operator[](std::size_t i) const { return points_[i]; }
  std::span<const Vec3> points() const noexcept { return points_; }
  auto begin() const noexcept { return points_.begin(); }
  auto end() const noexcept { return points_.end(); }

  /// Row-major n x 3 copy of the coordinates.
  std::vector<double> flattened() const;
  /// Inverse of flattened(); validates like the vector constructor.
  static PointCloud from_flat(std::span<const double> xyz);

  PointCloud subset(std::span<const std::size_t> indices) const;

  friend bool operator==(const PointCloud&, const PointCloud&) = default;

 private:
  std::vector<Vec3> points_;
};

/// Rotation angles (radians) about x, y and z. Composed as R = Rz * Ry * Rx.
struct EulerAnglesXYZ {
  double alpha_x = 0.0;
  double beta_y = 0.0;
  double gamma_z = 0.0;

  /// Copy with every angle wrapped into (-pi, pi].
  EulerAnglesXYZ canonical() const;
  static EulerAnglesXYZ from_degrees(double x, double y, double z);
  Vec3 degrees() const;

  friend bool operator==(const EulerAnglesXYZ&, const EulerAnglesXYZ&) = default;
};

struct RigidTransform {
  EulerAnglesXYZ rotation;
  Vec3 translation = Vec3::Zero();

  static RigidTransform identity() { return {}; }
  Mat3 rotation_matrix() const;

  friend bool operator==(const RigidTransform&, const RigidTransform&) = default;
};

/// Wraps an angle into (-pi, pi].
double wrap_radians(double angle);
/// Wraps an angle into (-180, 180].
double wrap_degrees(double angle);

Mat3 euler_to_matrix(const EulerAnglesXYZ& angles);

/// Inverse of euler_to_matrix. At gimbal lock (|beta| = pi/2) alpha is set to 0.
EulerAnglesXYZ matrix_to_euler(const Mat3& rotation);

/// Builds a transform from a rotation matrix and translation.
RigidTransform make_transform(const Mat3& rotation, const Vec3& translation);

PointCloud apply_transform(const RigidTransform& transform, const PointCloud& cloud);
Vec3 apply_transform(const RigidTransform& transform, const Vec3& point);

RigidTransform inverse(const RigidTransform& transform);

/// Returns the transform equivalent to applying `first` and then `second`.
RigidTransform compose(const RigidTransform& second, const RigidTransform& first);

Vec3 centroid(const PointCloud& cloud);

/// Centers the cloud on its centroid and scales it so the farthest point lies on the unit sphere.
/// Throws DegenerateGeometry when all points coincide.
PointCloud center_and_rescale(const PointCloud& cloud);

/// Per-angle (degrees, wrapped) and per-component error statistics.
struct TransformErrors {
  double mse_r = 0.0;
  double rmse_r = 0.0;
  double mae_r = 0.0;
  double mse_t = 0.0;
  double rmse_t = 0.0;
  double mae_t = 0.0;
};

/// Signed per-angle errors in degrees, each wrapped into (-180, 180].
Vec3 angle_errors_degrees(const RigidTransform& predicted, const RigidTransform& ground_truth);

TransformErrors transform_metrics(const RigidTransform& predicted, const RigidTransform& ground_truth);

struct RegistrationReport {
  RigidTransform predicted;
  RigidTransform ground_truth;
  TransformErrors errors;
  double final_alignment_loss = 0.0;
  double wall_time = 0.0;  // seconds
};

}  // namespace scr
