#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "scralign/geometry.hpp"

namespace scrtest {

inline scr::PointCloud random_cloud(std::mt19937_64& rng, std::size_t n, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  std::vector<scr::Vec3> pts(n);
  for (auto& p : pts) p = scr::Vec3(u(rng), u(rng), u(rng));
  return scr::PointCloud(std::move(pts));
}

// Relative error with the max(|a|, |b|, 1e-8) denominator.
inline double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8}); }

// Central difference of f at x[i], restoring x afterwards.
inline double central_difference(const std::function<double()>& f, double& x, double h = 1e-5) {
  const double saved = x;
  x = saved + h;
  const double fp = f();
  x = saved - h;
  const double fm = f();
  x = saved;
  return (fp - fm) / (2 * h);
}

// Brute-force Chamfer: two nested loops, no shared code with the library.
inline double chamfer_oracle(const std::vector<scr::Vec3>& a, const std::vector<scr::Vec3>& b) {
  auto term = [](const std::vector<scr::Vec3>& from, const std::vector<scr::Vec3>& to) {
    double s = 0.0;
    for (const auto& p : from) {
      double best = INFINITY;
      for (const auto& q : to) {
        const double dx = p.x() - q.x(), dy = p.y() - q.y(), dz = p.z() - q.z();
        best = std::min(best, dx * dx + dy * dy + dz * dz);
      }
      s += best;
    }
    return s;
  };
  return term(a, b) + term(b, a);
}

inline std::vector<scr::Vec3> masked(const scr::PointCloud& c, const std::vector<bool>& mask) {
  std::vector<scr::Vec3> out;
  for (std::size_t i = 0; i < c.size(); ++i)
    if (mask[i]) out.push_back(c[i]);
  return out;
}

}  // namespace scrtest
