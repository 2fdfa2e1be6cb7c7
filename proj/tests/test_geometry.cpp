#include <doctest.h>

#include <Eigen/Geometry>
#include <numbers>
#include <random>

#include "scralign/errors.hpp"
#include "scralign/geometry.hpp"
#include "support.hpp"

using namespace scr;
using std::numbers::pi;

TEST_CASE("point cloud rejects empty and non-finite input") {
  CHECK_THROWS_AS(PointCloud(std::vector<Vec3>{}), InvalidArgument);
  CHECK_THROWS_AS(PointCloud({Vec3(0, NAN, 0)}), InvalidArgument);
  CHECK_THROWS_AS(PointCloud({Vec3(INFINITY, 0, 0)}), InvalidArgument);
  const PointCloud c({Vec3(1, 2, 3), Vec3(4, 5, 6)});
  CHECK(PointCloud::from_flat(c.flattened()) == c);
  const std::size_t idx[] = {1};
  CHECK(c.subset(idx)[0] == Vec3(4, 5, 6));
}

TEST_CASE("euler_to_matrix basics") {
  CHECK(euler_to_matrix({}).isApprox(Mat3::Identity(), 0.0));
  const Vec3 y = euler_to_matrix({pi / 2, 0, 0}) * Vec3(0, 1, 0);
  CHECK((y - Vec3(0, 0, 1)).norm() < 1e-15);
}

TEST_CASE("euler_to_matrix matches a quaternion composition") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-pi, pi);
  for (int i = 0; i < 200; ++i) {
    const EulerAnglesXYZ a{u(rng), u(rng), u(rng)};
    const Eigen::Quaterniond q = Eigen::AngleAxisd(a.gamma_z, Vec3::UnitZ()) * Eigen::AngleAxisd(a.beta_y, Vec3::UnitY()) *
                                 Eigen::AngleAxisd(a.alpha_x, Vec3::UnitX());
    const Mat3 r = euler_to_matrix(a);
    CHECK((r - q.toRotationMatrix()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(std::abs(r.determinant() - 1.0) < 1e-9);
  }
}

TEST_CASE("matrix_to_euler round trip away from gimbal lock") {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(-pi + 1e-9, pi);
  std::uniform_real_distribution<double> b(-pi / 2 + 0.01, pi / 2 - 0.01);
  for (int i = 0; i < 1000; ++i) {
    const EulerAnglesXYZ a{u(rng), b(rng), u(rng)};
    const EulerAnglesXYZ back = matrix_to_euler(euler_to_matrix(a));
    CHECK(std::abs(wrap_radians(back.alpha_x - a.alpha_x)) < 1e-9);
    CHECK(std::abs(back.beta_y - a.beta_y) < 1e-9);
    CHECK(std::abs(wrap_radians(back.gamma_z - a.gamma_z)) < 1e-9);
  }
  const EulerAnglesXYZ zero = matrix_to_euler(Mat3::Identity());
  CHECK(zero.alpha_x == 0.0);
  CHECK(zero.beta_y == 0.0);
  CHECK(zero.gamma_z == 0.0);
}

TEST_CASE("matrix_to_euler at gimbal lock sets alpha to zero") {
  for (double beta : {pi / 2, -pi / 2}) {
    const Mat3 r = euler_to_matrix({0.7, beta, -0.3});
    const EulerAnglesXYZ e = matrix_to_euler(r);
    CHECK(e.alpha_x == 0.0);
    CHECK((euler_to_matrix(e) - r).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("matrix_to_euler rejects non-rotations") {
  Mat3 scaled = 1.01 * Mat3::Identity();
  CHECK_THROWS_AS(matrix_to_euler(scaled), InvalidArgument);
  Mat3 reflect = Mat3::Identity();
  reflect(2, 2) = -1;
  CHECK_THROWS_AS(matrix_to_euler(reflect), InvalidArgument);
  Mat3 bad = Mat3::Identity();
  bad(0, 0) = NAN;
  CHECK_THROWS_AS(matrix_to_euler(bad), InvalidArgument);
}

TEST_CASE("wrap conventions") {
  CHECK(wrap_degrees(180.0) == 180.0);
  CHECK(wrap_degrees(-180.0) == 180.0);
  CHECK(wrap_degrees(358.0) == doctest::Approx(-2.0));
  CHECK(wrap_radians(-pi) == doctest::Approx(pi));
  CHECK(EulerAnglesXYZ{3 * pi / 2, 0, 0}.canonical().alpha_x == doctest::Approx(-pi / 2));
}

TEST_CASE("apply_transform, inverse and compose") {
  RigidTransform t;
  t.translation = Vec3(1, 2, 3);
  CHECK(apply_transform(t, Vec3::Zero()) == Vec3(1, 2, 3));
  CHECK(apply_transform(RigidTransform::identity(), PointCloud({Vec3(1, 2, 3)}))[0] == Vec3(1, 2, 3));
  RigidTransform shift;
  shift.translation = Vec3(1, 0, 0);
  CHECK((inverse(shift).translation - Vec3(-1, 0, 0)).norm() == 0.0);
  CHECK(inverse(RigidTransform::identity()).translation.norm() == 0.0);

  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(-pi, pi);
  for (int k = 0; k < 10; ++k) {
    const RigidTransform r{{u(rng), u(rng) / 2.2, u(rng)}, Vec3(u(rng), u(rng), u(rng))};
    const PointCloud x = scrtest::random_cloud(rng, 1024);
    const PointCloud back = apply_transform(r, apply_transform(inverse(r), x));
    double worst = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) worst = std::max(worst, (back[i] - x[i]).norm());
    CHECK(worst < 1e-10);

    // rigid motions keep pairwise distances
    const PointCloud y = apply_transform(r, x);
    double drift = 0.0;
    for (std::size_t i = 0; i + 1 < 200; ++i)
      drift = std::max(drift, std::abs((x[i] - x[i + 1]).norm() - (y[i] - y[i + 1]).norm()));
    CHECK(drift < 1e-9);

    const RigidTransform s{{u(rng) / 3, u(rng) / 3, u(rng) / 3}, Vec3(u(rng), 0, 1)};
    const Vec3 p(0.3, -0.2, 0.9);
    CHECK((apply_transform(compose(s, r), p) - apply_transform(s, apply_transform(r, p))).norm() < 1e-12);
  }
}

TEST_CASE("center_and_rescale") {
  const PointCloud two = center_and_rescale(PointCloud({Vec3(0, 0, 0), Vec3(2, 0, 0)}));
  CHECK((two[0] - Vec3(-1, 0, 0)).norm() < 1e-15);
  CHECK((two[1] - Vec3(1, 0, 0)).norm() < 1e-15);
  CHECK_THROWS_AS(center_and_rescale(PointCloud({Vec3(1, 1, 1), Vec3(1, 1, 1)})), DegenerateGeometry);

  std::mt19937_64 rng(14);
  for (int k = 0; k < 20; ++k) {
    const PointCloud c = center_and_rescale(scrtest::random_cloud(rng, 100, 7.0));
    CHECK(centroid(c).norm() < 1e-12);
    double r = 0.0;
    for (const auto& p : c) r = std::max(r, p.norm());
    CHECK(r <= 1.0);
    CHECK(r >= 1.0 - 1e-12);
    const PointCloud again = center_and_rescale(c);
    double d = 0.0;
    for (std::size_t i = 0; i < c.size(); ++i) d = std::max(d, (again[i] - c[i]).norm());
    CHECK(d < 1e-12);
  }
}

TEST_CASE("transform metrics") {
  RigidTransform gt;
  CHECK(transform_metrics(gt, gt).mse_r == 0.0);
  RigidTransform pred;
  pred.rotation = EulerAnglesXYZ::from_degrees(10, 0, 0);
  const auto e = transform_metrics(pred, gt);
  CHECK(e.mse_r == doctest::Approx(100.0 / 3).epsilon(1e-12));
  CHECK(e.rmse_r == doctest::Approx(std::sqrt(100.0 / 3)).epsilon(1e-12));
  CHECK(e.mae_r == doctest::Approx(10.0 / 3).epsilon(1e-12));
  CHECK(e.mse_t == 0.0);
  CHECK(e.mae_t == 0.0);

  RigidTransform a, b;
  a.rotation = EulerAnglesXYZ::from_degrees(179, 0, 0);
  b.rotation = EulerAnglesXYZ::from_degrees(-179, 0, 0);
  CHECK(std::abs(angle_errors_degrees(a, b).x()) == doctest::Approx(2.0));

  std::mt19937_64 rng(15);
  std::uniform_real_distribution<double> u(-3, 3);
  for (int k = 0; k < 50; ++k) {
    const RigidTransform p{{u(rng), u(rng), u(rng)}, Vec3(u(rng), u(rng), u(rng))};
    const RigidTransform g{{u(rng), u(rng), u(rng)}, Vec3(u(rng), u(rng), u(rng))};
    const auto m = transform_metrics(p, g);
    CHECK(std::abs(m.rmse_r - std::sqrt(m.mse_r)) < 1e-12);
    CHECK(std::abs(m.rmse_t - std::sqrt(m.mse_t)) < 1e-12);
    CHECK(m.mae_r >= 0.0);
    CHECK(m.mae_t >= 0.0);
  }
}
