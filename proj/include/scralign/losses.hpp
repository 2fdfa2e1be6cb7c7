#pragma once

#include <cstddef>
#include <limits>
#include <memory>
#include <span>
#include <vector>

#include "scralign/autodiff.hpp"
#include "scralign/geometry.hpp"

namespace scr {

struct Nearest {
  double sq_dist = std::numeric_limits<double>::infinity();
  std::size_t index = 0;

  friend bool operator==(const Nearest&, const Nearest&) = default;
};

/// Squared Euclidean distance, written once so every search path rounds identically.
inline double squared_distance(const Vec3& a, const Vec3& b) {
  const double dx = a.x() - b.x(), dy = a.y() - b.y(), dz = a.z() - b.z();
  return dx * dx + dy * dy + dz * dz;
}

/// Static kd-tree over a point set. Queries return the exact minimum squared distance and
/// the lowest index attaining it, matching a brute-force scan bit for bit.
class KdTree {
 public:
  explicit KdTree(std::span<const Vec3> points, std::size_t leaf_size = 8);

  Nearest nearest(const Vec3& query) const;
  std::size_t size() const noexcept { return points_.size(); }

 private:
  struct NodeRec {
    std::size_t begin = 0, end = 0;  // range into order_
    int axis = -1;                   // -1 for leaves
    double split = 0.0;
    std::size_t left = 0, right = 0;
  };

  std::size_t build(std::size_t begin, std::size_t end);
  void search(std::size_t node, const Vec3& q, Nearest& best) const;

  std::vector<Vec3> points_;
  std::vector<std::size_t> order_;
  std::vector<NodeRec> nodes_;
  std::size_t leaf_size_;
};

Nearest nearest_brute_force(const Vec3& query, std::span<const Vec3> cloud);

/// Nearest point of `cloud` to `query`. Throws ContractError on an empty cloud.
Nearest nearest_sq_dist(const Vec3& query, const PointCloud& cloud);

/// Nearest neighbor of every query. Uses a kd-tree for larger clouds; results are
/// identical to the brute-force scan either way.
std::vector<Nearest> nearest_all(std::span<const Vec3> queries, std::span<const Vec3> cloud);

// ---- Chamfer ------------------------------------------------------------------------

/// Overlap subsets for the adaptive Chamfer loss. Masks only shrink.
struct OverlapState {
  std::vector<bool> source_mask;
  std::vector<bool> target_mask;
  int epoch_of_last_update = -1;
  bool fallback = false;  // set when the last update would have emptied a mask

  static OverlapState full(std::size_t source_size, std::size_t target_size);
  std::size_t source_kept() const;
  std::size_t target_kept() const;
  bool all_true() const;
};

/// Sum of squared nearest distances from a to b plus from b to a.
double chamfer(const PointCloud& a, const PointCloud& b);

/// Chamfer distance restricted to the masked subsets.
double adaptive_chamfer(const PointCloud& a, const PointCloud& b, const OverlapState& state);

/// Differentiable Chamfer loss between transformed source points a[n x 3] and a fixed
/// target. Nearest-neighbor assignments are recomputed on every call and held constant
/// for the backward pass. A null state means the full sets.
ad::Tensor chamfer_loss(ad::Tape& tape, const ad::Tensor& a, const PointCloud& target,
                        const OverlapState* state = nullptr);

/// Shrinks the overlap masks with threshold `sigma` on squared distance. Both new masks are
/// computed against the previous masks. If either would become empty, the previous masks are
/// returned with `fallback` set.
OverlapState update_overlap(const OverlapState& state, const PointCloud& a, const PointCloud& b, double sigma,
                            int epoch = -1);

struct SigmaSchedule {
  double sigma_start = 10.0;
  double sigma_end = 0.01;
  int horizon_epochs = 100;
};

/// Geometric decay from sigma_start at epoch 0 to sigma_end at the horizon, clamped afterwards.
double sigma_at(const SigmaSchedule& schedule, int epoch);

}  // namespace scr
