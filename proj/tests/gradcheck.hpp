#pragma once

#include <functional>
#include <vector>

#include "scralign/autodiff.hpp"
#include "support.hpp"

namespace scrtest {

using Builder = std::function<scr::ad::Tensor(scr::ad::Tape&, const std::vector<scr::ad::Tensor>&)>;

struct GradReport {
  double max_rel = 0.0;
  std::size_t checked = 0;
};

// Analytic gradients of build(leaves) against central differences for every leaf entry.
inline GradReport gradcheck(const Builder& build, std::vector<scr::ad::Tensor> leaves, double h = 1e-5) {
  using namespace scr::ad;
  for (auto& l : leaves) l.zero_grad();
  Tape tape;
  const Tensor out = build(tape, leaves);
  tape.backward(out);
  std::vector<std::vector<double>> analytic;
  for (const auto& l : leaves) analytic.push_back(l.grad());
  GradReport rep;
  for (std::size_t k = 0; k < leaves.size(); ++k) {
    auto data = leaves[k].mutable_data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double num = central_difference(
          [&] {
            Tape t;
            return build(t, leaves).item();
          },
          data[i], h);
      rep.max_rel = std::max(rep.max_rel, rel_err(analytic[k][i], num));
      ++rep.checked;
    }
  }
  return rep;
}

inline scr::ad::Tensor random_param(std::mt19937_64& rng, scr::ad::Shape shape, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  std::vector<double> v(scr::ad::numel(shape));
  for (auto& x : v) x = u(rng);
  return scr::ad::Tensor::parameter(std::move(shape), std::move(v));
}

}  // namespace scrtest
