#pragma once

// Finite-difference check of decoder forward + Chamfer loss over parameters and z.
// The numeric side uses its own long double forward pass (plain loops, no library math)
// so tiny gradients deep in the network are resolvable.

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <optional>
#include <random>

#include "scralign/decoder.hpp"
#include "scralign/geometry.hpp"
#include "scralign/losses.hpp"
#include "support.hpp"

namespace scrtest {

using LD = long double;

struct OracleNet {
  scr::DecoderConfig cfg;
  std::vector<std::vector<LD>> tensors;  // same order as DecoderParams::tensors()
  std::vector<LD> z;
  std::vector<scr::Vec3> source, target;

  // Hash of every branch taken (activation signs, pooling argmax, nearest neighbours).
  // Central differences are only trusted when both sides share it.
  mutable std::uint64_t pattern = 0;
  void note(std::uint64_t v) const { pattern = (pattern ^ v) * 1099511628211ULL; }

  LD leaky(LD v) const {
    note(v > 0);
    return v > 0 ? v : static_cast<LD>(cfg.leaky_slope) * v;
  }

  // rows x in -> rows x out
  std::vector<std::vector<LD>> dense(const std::vector<std::vector<LD>>& x, const std::vector<LD>& w, const std::vector<LD>& b,
                                     std::size_t out) const {
    std::vector<std::vector<LD>> y(x.size(), std::vector<LD>(out));
    for (std::size_t r = 0; r < x.size(); ++r)
      for (std::size_t o = 0; o < out; ++o) {
        LD s = b[o];
        for (std::size_t i = 0; i < x[r].size(); ++i) s += x[r][i] * w[i * out + o];
        y[r][o] = s;
      }
    return y;
  }

  LD loss() const {
    pattern = 1469598103934665603ULL;
    std::size_t k = 0;
    std::vector<std::vector<LD>> h(source.size());
    for (std::size_t r = 0; r < source.size(); ++r) {
      h[r] = {source[r].x(), source[r].y(), source[r].z()};
      h[r].insert(h[r].end(), z.begin(), z.end());
    }
    for (std::size_t out : cfg.point_mlp_dims) {
      h = dense(h, tensors[k], tensors[k + 1], out);
      k += 2;
      if (cfg.use_batch_norm) {
        const auto& gamma = tensors[k];
        const auto& beta = tensors[k + 1];
        k += 2;
        const LD n = static_cast<LD>(h.size());
        for (std::size_t c = 0; c < out; ++c) {
          LD mean = 0, var = 0;
          for (auto& row : h) mean += row[c];
          mean /= n;
          for (auto& row : h) var += (row[c] - mean) * (row[c] - mean);
          var /= n;
          for (auto& row : h) row[c] = gamma[c] * (row[c] - mean) / std::sqrt(var + static_cast<LD>(1e-5)) + beta[c];
        }
      }
      for (auto& row : h)
        for (auto& v : row) v = leaky(v);
    }
    std::vector<LD> pooled(h[0].size(), -INFINITY);
    for (std::size_t c = 0; c < pooled.size(); ++c) {
      std::size_t arg = 0;
      for (std::size_t r = 0; r < h.size(); ++r)
        if (h[r][c] > pooled[c]) pooled[c] = h[r][c], arg = r;
      note(arg);
    }

    std::vector<LD> heads[2];
    for (auto& out : heads) {
      std::vector<std::vector<LD>> x{pooled};
      for (std::size_t layer = 0; layer < cfg.head_dims.size(); ++layer) {
        x = dense(x, tensors[k], tensors[k + 1], cfg.head_dims[layer]);
        k += 2;
        if (layer + 1 < cfg.head_dims.size())
          for (auto& v : x[0]) v = leaky(v);
      }
      out = x[0];
    }
    const LD ca = std::cos(heads[0][0]), sa = std::sin(heads[0][0]);
    const LD cb = std::cos(heads[0][1]), sb = std::sin(heads[0][1]);
    const LD cg = std::cos(heads[0][2]), sg = std::sin(heads[0][2]);
    // Rz(g) * Ry(b) * Rx(a)
    const LD R[3][3] = {{cg * cb, cg * sb * sa - sg * ca, cg * sb * ca + sg * sa},
                        {sg * cb, sg * sb * sa + cg * ca, sg * sb * ca - cg * sa},
                        {-sb, cb * sa, cb * ca}};
    std::vector<std::array<LD, 3>> moved(source.size());
    for (std::size_t r = 0; r < source.size(); ++r)
      for (int i = 0; i < 3; ++i)
        moved[r][i] = R[i][0] * source[r].x() + R[i][1] * source[r].y() + R[i][2] * source[r].z() + heads[1][i];

    auto d2 = [](const std::array<LD, 3>& p, const scr::Vec3& q) {
      const LD dx = p[0] - q.x(), dy = p[1] - q.y(), dz = p[2] - q.z();
      return dx * dx + dy * dy + dz * dz;
    };
    LD total = 0;
    for (const auto& p : moved) {
      LD best = INFINITY;
      std::size_t arg = 0;
      for (std::size_t j = 0; j < target.size(); ++j)
        if (d2(p, target[j]) < best) best = d2(p, target[j]), arg = j;
      note(arg);
      total += best;
    }
    for (const auto& q : target) {
      LD best = INFINITY;
      std::size_t arg = 0;
      for (std::size_t j = 0; j < moved.size(); ++j)
        if (d2(moved[j], q) < best) best = d2(moved[j], q), arg = j;
      note(arg);
      total += best;
    }
    return total;
  }

  // Central difference, shrinking h while the two sides straddle a branch change.
  // Returns nullopt when no step down to h * 1e-3 stays on one branch.
  std::optional<double> derivative(LD& slot, LD h) const {
    const LD saved = slot;
    for (int attempt = 0; attempt < 4; ++attempt, h /= 10) {
      slot = saved + h;
      const LD fp = loss();
      const auto pp = pattern;
      slot = saved - h;
      const LD fm = loss();
      const auto pm = pattern;
      slot = saved;
      if (pp == pm) return static_cast<double>((fp - fm) / (2 * h));
    }
    return std::nullopt;
  }
};

struct PipelineCheck {
  double max_rel = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;  // entries sitting on a branch change at every step size
  std::size_t tensors = 0;  // parameter tensors touched (z excluded)
};

// Checks `per_tensor` random entries of every parameter tensor (all entries when smaller) and every z entry.
inline PipelineCheck check_pipeline_gradients(std::uint64_t seed, std::size_t per_tensor, const scr::DecoderConfig& cfg = {},
                                              std::size_t points = 16, double h = 1e-5) {
  using namespace scr;
  std::mt19937_64 rng(seed);
  const DecoderParams params = DecoderParams::initialize(cfg, seed);
  const PointCloud src = random_cloud(rng, points);
  std::uniform_real_distribution<double> ang(-0.6, 0.6), tr(-0.3, 0.3);
  RigidTransform gt;
  gt.rotation = {ang(rng), ang(rng), ang(rng)};
  gt.translation = Vec3(tr(rng), tr(rng), tr(rng));
  const PointCloud tgt = apply_transform(gt, src);
  std::normal_distribution<double> nz(0.0, 0.5);
  std::vector<double> z(cfg.latent_dim);
  for (auto& v : z) v = nz(rng);

  ad::Tape tape;
  DecoderPass pass(params, true);
  const auto zt = ad::Tensor::parameter({z.size()}, z);
  const auto out = pass.forward(tape, points_tensor(src), zt, ad::Mode::Train);
  tape.backward(chamfer_loss(tape, out.transformed, tgt));

  OracleNet net;
  net.cfg = cfg;
  for (const auto& t : params.tensors()) net.tensors.emplace_back(t.values.begin(), t.values.end());
  net.z.assign(z.begin(), z.end());
  net.source.assign(src.begin(), src.end());
  net.target.assign(tgt.begin(), tgt.end());

  PipelineCheck rep;
  auto compare = [&](double analytic, LD& slot) {
    const auto num = net.derivative(slot, h);
    if (!num) {
      ++rep.skipped;
      return;
    }
    rep.max_rel = std::max(rep.max_rel, rel_err(analytic, *num));
    ++rep.checked;
  };
  for (std::size_t k = 0; k < net.tensors.size(); ++k) {
    auto& values = net.tensors[k];
    const auto grad = pass.leaves()[k].grad();
    std::vector<std::size_t> idx(values.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(std::min(per_tensor, idx.size()));
    for (auto i : idx) compare(grad[i], values[i]);
    ++rep.tensors;
  }
  const auto zg = zt.grad();
  for (std::size_t i = 0; i < net.z.size(); ++i) compare(zg[i], net.z[i]);
  return rep;
}

}  // namespace scrtest
