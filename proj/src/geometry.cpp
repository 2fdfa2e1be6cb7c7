#include "scralign/geometry.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <numbers>

#include "scralign/errors.hpp"

namespace scr {

namespace {

bool finite(const Vec3& p) { return std::isfinite(p.x()) && std::isfinite(p.y()) && std::isfinite(p.z()); }

}  // namespace

PointCloud::PointCloud(std::vector<Vec3> points) : points_(std::move(points)) {
  if (points_.empty()) throw InvalidArgument("point cloud must contain at least one point");
  for (std::size_t i = 0; i < points_.size(); ++i) {
    if (!finite(points_[i])) throw InvalidArgument("point " + std::to_string(i) + " has a non-finite coordinate");
  }
}

std::vector<double> PointCloud::flattened() const {
  std::vector<double> out;
  out.reserve(points_.size() * 3);
  for (const auto& p : points_) {
    out.push_back(p.x());
    out.push_back(p.y());
    out.push_back(p.z());
  }
  return out;
}

PointCloud PointCloud::from_flat(std::span<const double> xyz) {
  if (xyz.size() % 3 != 0) throw InvalidArgument("flat coordinate array length must be a multiple of 3");
  std::vector<Vec3> pts(xyz.size() / 3);
  for (std::size_t i = 0; i < pts.size(); ++i) pts[i] = Vec3(xyz[3 * i], xyz[3 * i + 1], xyz[3 * i + 2]);
  return PointCloud(std::move(pts));
}

PointCloud PointCloud::subset(std::span<const std::size_t> indices) const {
  std::vector<Vec3> pts;
  pts.reserve(indices.size());
  for (auto i : indices) pts.push_back(points_.at(i));
  return PointCloud(std::move(pts));
}

double wrap_radians(double angle) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double r = std::fmod(angle, two_pi);
  if (r <= -std::numbers::pi) r += two_pi;
  if (r > std::numbers::pi) r -= two_pi;
  return r;
}

double wrap_degrees(double angle) {
  double r = std::fmod(angle, 360.0);
  if (r <= -180.0) r += 360.0;
  if (r > 180.0) r -= 360.0;
  return r;
}

EulerAnglesXYZ EulerAnglesXYZ::canonical() const {
  return {wrap_radians(alpha_x), wrap_radians(beta_y), wrap_radians(gamma_z)};
}

EulerAnglesXYZ EulerAnglesXYZ::from_degrees(double x, double y, double z) {
  constexpr double k = std::numbers::pi / 180.0;
  return {x * k, y * k, z * k};
}

Vec3 EulerAnglesXYZ::degrees() const {
  constexpr double k = 180.0 / std::numbers::pi;
  return {alpha_x * k, beta_y * k, gamma_z * k};
}

Mat3 RigidTransform::rotation_matrix() const { return euler_to_matrix(rotation); }

Mat3 euler_to_matrix(const EulerAnglesXYZ& a) {
  if (!std::isfinite(a.alpha_x) || !std::isfinite(a.beta_y) || !std::isfinite(a.gamma_z)) {
    throw InvalidArgument("euler_to_matrix: non-finite angle");
  }
  const double ca = std::cos(a.alpha_x), sa = std::sin(a.alpha_x);
  const double cb = std::cos(a.beta_y), sb = std::sin(a.beta_y);
  const double cg = std::cos(a.gamma_z), sg = std::sin(a.gamma_z);
  Mat3 r;
  r << cg * cb, cg * sb * sa - sg * ca, cg * sb * ca + sg * sa,
       sg * cb, sg * sb * sa + cg * ca, sg * sb * ca - cg * sa,
       -sb, cb * sa, cb * ca;
  return r;
}

EulerAnglesXYZ matrix_to_euler(const Mat3& r) {
  if (!r.allFinite()) throw InvalidArgument("matrix_to_euler: non-finite matrix");
  const double orth = (r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff();
  if (orth > 1e-6 || r.determinant() <= 0.0) {
    throw InvalidArgument("matrix_to_euler: matrix is not a proper rotation");
  }
  const double cos_beta = std::hypot(r(0, 0), r(1, 0));
  EulerAnglesXYZ out;
  out.beta_y = std::atan2(-r(2, 0), cos_beta);
  if (cos_beta > 1e-10) {
    out.alpha_x = std::atan2(r(2, 1), r(2, 2));
    out.gamma_z = std::atan2(r(1, 0), r(0, 0));
  } else {
    // Gimbal lock: only alpha -/+ gamma is observable.
    out.alpha_x = 0.0;
    out.gamma_z = std::atan2(-r(0, 1), r(1, 1));
  }
  return out.canonical();
}

RigidTransform make_transform(const Mat3& rotation, const Vec3& translation) {
  return {matrix_to_euler(rotation), translation};
}

Vec3 apply_transform(const RigidTransform& t, const Vec3& p) { return t.rotation_matrix() * p + t.translation; }

PointCloud apply_transform(const RigidTransform& t, const PointCloud& cloud) {
  const Mat3 r = t.rotation_matrix();
  std::vector<Vec3> out;
  out.reserve(cloud.size());
  for (const auto& p : cloud) out.push_back(r * p + t.translation);
  return PointCloud(std::move(out));
}

RigidTransform inverse(const RigidTransform& t) {
  const Mat3 rt = t.rotation_matrix().transpose();
  return make_transform(rt, -(rt * t.translation));
}

RigidTransform compose(const RigidTransform& second, const RigidTransform& first) {
  const Mat3 r2 = second.rotation_matrix();
  return make_transform(r2 * first.rotation_matrix(), r2 * first.translation + second.translation);
}

Vec3 centroid(const PointCloud& cloud) {
  Vec3 c = Vec3::Zero();
  for (const auto& p : cloud) c += p;
  return c / static_cast<double>(cloud.size());
}

PointCloud center_and_rescale(const PointCloud& cloud) {
  const Vec3 c = centroid(cloud);
  double extent = 0.0, radius = 0.0;
  for (const auto& p : cloud) {
    extent = std::max(extent, p.cwiseAbs().maxCoeff());
    radius = std::max(radius, (p - c).norm());
  }
  if (radius <= 1e-12 * std::max(1.0, extent)) {
    throw DegenerateGeometry("center_and_rescale: all points coincide");
  }
  std::vector<Vec3> out;
  out.reserve(cloud.size());
  for (const auto& p : cloud) out.push_back((p - c) / radius);
  return PointCloud(std::move(out));
}

Vec3 angle_errors_degrees(const RigidTransform& predicted, const RigidTransform& ground_truth) {
  const Vec3 d = predicted.rotation.degrees() - ground_truth.rotation.degrees();
  return {wrap_degrees(d.x()), wrap_degrees(d.y()), wrap_degrees(d.z())};
}

TransformErrors transform_metrics(const RigidTransform& predicted, const RigidTransform& ground_truth) {
  const Vec3 er = angle_errors_degrees(predicted, ground_truth);
  const Vec3 et = predicted.translation - ground_truth.translation;
  TransformErrors m;
  m.mse_r = er.squaredNorm() / 3.0;
  m.mae_r = er.cwiseAbs().sum() / 3.0;
  m.rmse_r = std::sqrt(m.mse_r);
  m.mse_t = et.squaredNorm() / 3.0;
  m.mae_t = et.cwiseAbs().sum() / 3.0;
  m.rmse_t = std::sqrt(m.mse_t);
  return m;
}

}  // namespace scr
