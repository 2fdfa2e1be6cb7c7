#include "scralign/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "scralign/errors.hpp"

namespace scr {

namespace {

constexpr std::size_t kBruteForceLimit = 32;

bool better(double d, std::size_t i, const Nearest& best) {
  return d < best.sq_dist || (d == best.sq_dist && i < best.index);
}

std::vector<Vec3> masked_points(const PointCloud& cloud, const std::vector<bool>* mask, std::vector<std::size_t>* idx) {
  std::vector<Vec3> out;
  out.reserve(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (mask && !(*mask)[i]) continue;
    out.push_back(cloud[i]);
    if (idx) idx->push_back(i);
  }
  return out;
}

void check_state(const OverlapState& s, std::size_t na, std::size_t nb) {
  if (s.source_mask.size() != na || s.target_mask.size() != nb) {
    throw ContractError("overlap masks sized " + std::to_string(s.source_mask.size()) + "/" +
                        std::to_string(s.target_mask.size()) + " do not match clouds of " + std::to_string(na) + "/" +
                        std::to_string(nb) + " points");
  }
  if (s.source_kept() == 0 || s.target_kept() == 0) throw ContractError("adaptive chamfer requires nonempty masks");
}

// Value and gradient of the two-sided sum for compact point lists.
double chamfer_terms(std::span<const Vec3> a, std::span<const Vec3> b, std::vector<Vec3>* grad_a) {
  const auto a_to_b = nearest_all(a, b);
  const auto b_to_a = nearest_all(b, a);
  double total = 0.0;
  for (const auto& n : a_to_b) total += n.sq_dist;
  for (const auto& n : b_to_a) total += n.sq_dist;
  if (grad_a) {
    grad_a->assign(a.size(), Vec3::Zero());
    for (std::size_t i = 0; i < a.size(); ++i) (*grad_a)[i] += 2.0 * (a[i] - b[a_to_b[i].index]);
    for (std::size_t j = 0; j < b.size(); ++j) (*grad_a)[b_to_a[j].index] += 2.0 * (a[b_to_a[j].index] - b[j]);
  }
  return total;
}

}  // namespace

// ---- kd-tree ------------------------------------------------------------------------

KdTree::KdTree(std::span<const Vec3> points, std::size_t leaf_size)
    : points_(points.begin(), points.end()), order_(points.size()), leaf_size_(std::max<std::size_t>(leaf_size, 1)) {
  if (points_.empty()) throw ContractError("kd-tree over an empty point set");
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  nodes_.reserve(2 * points_.size() / leaf_size_ + 1);
  build(0, points_.size());
}

std::size_t KdTree::build(std::size_t begin, std::size_t end) {
  const std::size_t id = nodes_.size();
  nodes_.push_back({begin, end});
  if (end - begin <= leaf_size_) return id;

  Vec3 lo = points_[order_[begin]], hi = lo;
  for (std::size_t i = begin; i < end; ++i) {
    lo = lo.cwiseMin(points_[order_[i]]);
    hi = hi.cwiseMax(points_[order_[i]]);
  }
  int axis = 0;
  (hi - lo).maxCoeff(&axis);
  if (hi[axis] == lo[axis]) return id;  // all coincident: keep as leaf

  const std::size_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin), order_.begin() + static_cast<std::ptrdiff_t>(mid),
                   order_.begin() + static_cast<std::ptrdiff_t>(end),
                   [&](std::size_t a, std::size_t b) { return points_[a][axis] < points_[b][axis]; });
  const double split = points_[order_[mid]][axis];
  const std::size_t left = build(begin, mid);
  const std::size_t right = build(mid, end);
  auto& node = nodes_[id];
  node.axis = axis;
  node.split = split;
  node.left = left;
  node.right = right;
  return id;
}

void KdTree::search(std::size_t id, const Vec3& q, Nearest& best) const {
  const NodeRec& node = nodes_[id];
  if (node.axis < 0) {
    for (std::size_t k = node.begin; k < node.end; ++k) {
      const std::size_t i = order_[k];
      const double d = squared_distance(q, points_[i]);
      if (better(d, i, best)) best = {d, i};
    }
    return;
  }
  // Left subtree holds coordinates <= split, right holds >= split.
  const double diff = q[node.axis] - node.split;
  const std::size_t near = diff <= 0.0 ? node.left : node.right;
  const std::size_t far = diff <= 0.0 ? node.right : node.left;
  search(near, q, best);
  // Equality must still be explored: a tie with a lower index may sit on the far side.
  if (diff * diff <= best.sq_dist) search(far, q, best);
}

Nearest KdTree::nearest(const Vec3& query) const {
  Nearest best;
  search(0, query, best);
  return best;
}

Nearest nearest_brute_force(const Vec3& query, std::span<const Vec3> cloud) {
  if (cloud.empty()) throw ContractError("nearest neighbor query against an empty cloud");
  Nearest best;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const double d = squared_distance(query, cloud[i]);
    if (better(d, i, best)) best = {d, i};
  }
  return best;
}

Nearest nearest_sq_dist(const Vec3& query, const PointCloud& cloud) {
  if (cloud.empty()) throw ContractError("nearest neighbor query against an empty cloud");
  if (cloud.size() <= kBruteForceLimit) return nearest_brute_force(query, cloud.points());
  return KdTree(cloud.points()).nearest(query);
}

std::vector<Nearest> nearest_all(std::span<const Vec3> queries, std::span<const Vec3> cloud) {
  if (cloud.empty()) throw ContractError("nearest neighbor query against an empty cloud");
  std::vector<Nearest> out(queries.size());
  if (cloud.size() <= kBruteForceLimit) {
    for (std::size_t i = 0; i < queries.size(); ++i) out[i] = nearest_brute_force(queries[i], cloud);
    return out;
  }
  const KdTree tree(cloud);
  for (std::size_t i = 0; i < queries.size(); ++i) out[i] = tree.nearest(queries[i]);
  return out;
}

// ---- Chamfer ------------------------------------------------------------------------

OverlapState OverlapState::full(std::size_t source_size, std::size_t target_size) {
  return {std::vector<bool>(source_size, true), std::vector<bool>(target_size, true), -1, false};
}

std::size_t OverlapState::source_kept() const {
  return static_cast<std::size_t>(std::count(source_mask.begin(), source_mask.end(), true));
}

std::size_t OverlapState::target_kept() const {
  return static_cast<std::size_t>(std::count(target_mask.begin(), target_mask.end(), true));
}

bool OverlapState::all_true() const {
  return source_kept() == source_mask.size() && target_kept() == target_mask.size();
}

double chamfer(const PointCloud& a, const PointCloud& b) {
  if (a.empty() || b.empty()) throw ContractError("chamfer of an empty point set");
  return chamfer_terms(a.points(), b.points(), nullptr);
}

double adaptive_chamfer(const PointCloud& a, const PointCloud& b, const OverlapState& state) {
  check_state(state, a.size(), b.size());
  const auto pa = masked_points(a, &state.source_mask, nullptr);
  const auto pb = masked_points(b, &state.target_mask, nullptr);
  return chamfer_terms(pa, pb, nullptr);
}

ad::Tensor chamfer_loss(ad::Tape& tape, const ad::Tensor& a, const PointCloud& target, const OverlapState* state) {
  if (a.rank() != 2 || a.dim(1) != 3) throw ShapeError("chamfer_loss: expected n x 3 points, got " + ad::to_string(a.shape()));
  if (a.dim(0) == 0 || target.empty()) throw ContractError("chamfer of an empty point set");
  const std::size_t n = a.dim(0);
  std::vector<Vec3> source(n);
  for (std::size_t i = 0; i < n; ++i) source[i] = Vec3(a[3 * i], a[3 * i + 1], a[3 * i + 2]);

  std::vector<std::size_t> kept;
  std::vector<Vec3> pa, pb;
  if (state) {
    check_state(*state, n, target.size());
    for (std::size_t i = 0; i < n; ++i) {
      if (!state->source_mask[i]) continue;
      pa.push_back(source[i]);
      kept.push_back(i);
    }
    pb = masked_points(target, &state->target_mask, nullptr);
  } else {
    pa = source;
    kept.resize(n);
    std::iota(kept.begin(), kept.end(), std::size_t{0});
    pb.assign(target.begin(), target.end());
  }

  std::vector<Vec3> grad_compact;
  const double value = chamfer_terms(pa, pb, a.requires_grad() ? &grad_compact : nullptr);
  ad::Tensor y = tape.make_output({}, {value}, {a});
  tape.record(y, [y, a, kept = std::move(kept), grad_compact = std::move(grad_compact)]() mutable {
    const double dy = y.grad_buffer()[0];
    auto da = a.grad_buffer();
    for (std::size_t k = 0; k < kept.size(); ++k) {
      for (int c = 0; c < 3; ++c) da[3 * kept[k] + static_cast<std::size_t>(c)] += dy * grad_compact[k][c];
    }
  });
  return y;
}

OverlapState update_overlap(const OverlapState& state, const PointCloud& a, const PointCloud& b, double sigma, int epoch) {
  if (!(sigma > 0.0)) throw InvalidArgument("update_overlap: sigma must be positive");
  check_state(state, a.size(), b.size());

  std::vector<std::size_t> a_idx, b_idx;
  const auto pa = masked_points(a, &state.source_mask, &a_idx);
  const auto pb = masked_points(b, &state.target_mask, &b_idx);
  const auto a_to_b = nearest_all(pa, pb);
  const auto b_to_a = nearest_all(pb, pa);

  OverlapState next;
  next.source_mask.assign(a.size(), false);
  next.target_mask.assign(b.size(), false);
  next.epoch_of_last_update = epoch;
  for (std::size_t k = 0; k < pa.size(); ++k) next.source_mask[a_idx[k]] = a_to_b[k].sq_dist < sigma;
  for (std::size_t k = 0; k < pb.size(); ++k) next.target_mask[b_idx[k]] = b_to_a[k].sq_dist < sigma;

  if (next.source_kept() == 0 || next.target_kept() == 0) {
    OverlapState kept = state;
    kept.fallback = true;
    kept.epoch_of_last_update = epoch;
    return kept;
  }
  return next;
}

double sigma_at(const SigmaSchedule& s, int epoch) {
  if (epoch < 0) throw InvalidArgument("sigma_at: negative epoch");
  if (epoch >= s.horizon_epochs) return s.sigma_end;
  if (epoch == 0) return s.sigma_start;
  const double frac = static_cast<double>(epoch) / static_cast<double>(s.horizon_epochs);
  return s.sigma_start * std::pow(s.sigma_end / s.sigma_start, frac);
}

}  // namespace scr
