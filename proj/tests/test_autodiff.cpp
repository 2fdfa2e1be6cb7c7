#include <doctest.h>

#include "gradcheck.hpp"
#include "scralign/autodiff.hpp"
#include "scralign/errors.hpp"

using namespace scr;
using namespace scr::ad;
using scrtest::gradcheck;
using scrtest::random_param;

TEST_CASE("tensor construction validates shapes") {
  CHECK_THROWS_AS(Tensor::constant({2, 2}, {1, 2, 3}), ShapeError);
  CHECK(Tensor::zeros({2, 3}).numel() == 6);
  CHECK(Tensor::scalar(2.5).item() == 2.5);
  CHECK_THROWS_AS(Tensor::zeros({2}).item(), ContractError);
}

TEST_CASE("linear forward and hand gradients") {
  Tape tape;
  const Tensor x = Tensor::parameter({1, 2}, {1, 2});
  const Tensor w = Tensor::parameter({2, 2}, {1, 0, 0, 1});
  const Tensor b = Tensor::parameter({2}, {0, 0});
  const Tensor y = linear(tape, x, w, b);
  CHECK(std::vector<double>(y.data().begin(), y.data().end()) == std::vector<double>{1, 2});
  tape.backward(sum(tape, y));
  // d sum / dW[i][j] = x[i]
  CHECK(w.grad() == std::vector<double>{1, 1, 2, 2});
  CHECK(b.grad() == std::vector<double>{1, 1});
  CHECK(x.grad() == std::vector<double>{1, 1});

  Tape t2;
  CHECK_THROWS_AS(linear(t2, Tensor::zeros({1, 3}), w, b), ShapeError);
}

TEST_CASE("linear gradient check on random shapes") {
  std::mt19937_64 rng(21);
  for (int k = 0; k < 5; ++k) {
    const std::size_t n = 1 + rng() % 5, din = 1 + rng() % 6, dout = 1 + rng() % 4;
    const auto rep = gradcheck(
        [](Tape& t, const std::vector<Tensor>& l) {
          const Tensor y = linear(t, l[0], l[1], l[2]);
          return sum(t, mul(t, y, y));
        },
        {random_param(rng, {n, din}), random_param(rng, {din, dout}), random_param(rng, {dout})});
    CHECK(rep.max_rel < 1e-6);
  }
}

TEST_CASE("fused latent linear matches the explicit concatenation") {
  std::mt19937_64 rng(22);
  const Tensor pts = random_param(rng, {7, 3});
  const Tensor z = random_param(rng, {5});
  const Tensor w = random_param(rng, {8, 4});
  const Tensor b = random_param(rng, {4});
  Tape t;
  const Tensor fused = linear_with_latent(t, pts, z, w, b);
  const Tensor ref = linear(t, concat_latent(t, pts, z), w, b);
  for (std::size_t i = 0; i < fused.numel(); ++i) CHECK(fused[i] == doctest::Approx(ref[i]).epsilon(1e-14));
  const auto rep = gradcheck(
      [](Tape& tp, const std::vector<Tensor>& l) {
        const Tensor y = linear_with_latent(tp, l[0], l[1], l[2], l[3]);
        return sum(tp, mul(tp, y, y));
      },
      {pts, z, w, b});
  CHECK(rep.max_rel < 1e-6);
}

TEST_CASE("leaky relu") {
  Tape t;
  const Tensor y = leaky_relu(t, Tensor::constant({2}, {1.0, -1.0}));
  CHECK(y[0] == 1.0);
  CHECK(y[1] == doctest::Approx(-0.01));
  std::mt19937_64 rng(23);
  Tensor x = random_param(rng, {4, 3});
  for (auto& v : x.mutable_data())
    if (std::abs(v) < 0.05) v = 0.3;  // stay away from the kink
  const auto rep = gradcheck(
      [](Tape& tp, const std::vector<Tensor>& l) {
        const Tensor a = leaky_relu(tp, l[0]);
        return sum(tp, mul(tp, a, a));
      },
      {x});
  CHECK(rep.max_rel < 1e-6);
}

TEST_CASE("batch norm") {
  SUBCASE("constant column normalizes to zero") {
    Tape t;
    auto stats = BatchNormStats::fresh(1);
    const Tensor y = batch_norm(t, Tensor::constant({3, 1}, {2, 2, 2}), Tensor::constant({1}, {1}), Tensor::constant({1}, {0}),
                                stats, Mode::Train);
    for (std::size_t i = 0; i < 3; ++i) CHECK(y[i] == 0.0);
  }
  SUBCASE("two-value column") {
    Tape t;
    auto stats = BatchNormStats::fresh(1);
    const Tensor y = batch_norm(t, Tensor::constant({2, 1}, {-1, 1}), Tensor::constant({1}, {1}), Tensor::constant({1}, {0}),
                                stats, Mode::Train);
    CHECK(std::abs(y[0] + 1) < 1e-4);
    CHECK(std::abs(y[1] - 1) < 1e-4);
    // momentum 0.1 toward mean 0 and unbiased variance 2
    CHECK(stats.running_mean[0] == doctest::Approx(0.0));
    CHECK(stats.running_var[0] == doctest::Approx(0.9 + 0.1 * 2.0));
  }
  SUBCASE("n = 1 in train mode is rejected") {
    Tape t;
    auto stats = BatchNormStats::fresh(2);
    CHECK_THROWS_AS(batch_norm(t, Tensor::zeros({1, 2}), Tensor::zeros({2}), Tensor::zeros({2}), stats, Mode::Train),
                    ContractError);
  }
  SUBCASE("eval mode is pure") {
    Tape t;
    BatchNormStats stats{{0.5, -1.0}, {2.0, 0.5}};
    const auto before = stats.running_mean;
    const Tensor y = batch_norm(t, Tensor::constant({1, 2}, {1.5, 0.0}), Tensor::constant({2}, {1, 1}),
                                Tensor::constant({2}, {0, 0}), stats, Mode::Eval);
    CHECK(stats.running_mean == before);
    CHECK(y[0] == doctest::Approx(1.0 / std::sqrt(2.0 + kBatchNormEps)));
  }
  SUBCASE("gradients in train mode") {
    std::mt19937_64 rng(24);
    const auto rep = gradcheck(
        [](Tape& tp, const std::vector<Tensor>& l) {
          BatchNormStats s = BatchNormStats::fresh(3);
          const Tensor y = batch_norm(tp, l[0], l[1], l[2], s, Mode::Train);
          const Tensor w = Tensor::constant({4, 3}, {0.3, -1.2, 0.5, 0.9, 0.1, -0.4, 1.5, 0.7, -0.8, -0.2, 0.6, 1.1});
          return sum(tp, mul(tp, mul(tp, y, y), w));
        },
        {random_param(rng, {4, 3}), random_param(rng, {3}), random_param(rng, {3})});
    CHECK(rep.max_rel < 1e-5);
  }
}

TEST_CASE("max pool rows") {
  Tape t;
  const Tensor y = max_pool_rows(t, Tensor::constant({2, 2}, {1, 5, 3, 2}));
  CHECK(y[0] == 3.0);
  CHECK(y[1] == 5.0);
  const Tensor single = max_pool_rows(t, Tensor::constant({1, 3}, {4, -1, 2}));
  CHECK(single[1] == -1.0);

  // ties: gradient to the first argmax row only
  Tape t2;
  const Tensor x = Tensor::parameter({3, 1}, {2, 2, 1});
  t2.backward(sum(t2, max_pool_rows(t2, x)));
  CHECK(x.grad() == std::vector<double>{1, 0, 0});

  std::mt19937_64 rng(25);
  const auto rep = gradcheck(
      [](Tape& tp, const std::vector<Tensor>& l) {
        const Tensor m = max_pool_rows(tp, l[0]);
        return sum(tp, mul(tp, m, m));
      },
      {random_param(rng, {6, 4})});
  CHECK(rep.max_rel < 1e-6);
}

TEST_CASE("rotation and rigid apply gradients") {
  std::mt19937_64 rng(26);
  for (int k = 0; k < 10; ++k) {
    const auto rep = gradcheck(
        [](Tape& tp, const std::vector<Tensor>& l) {
          const Tensor moved = rigid_apply(tp, l[0], euler_rotation(tp, l[1]), l[2]);
          const Tensor w = Tensor::constant({5, 3}, {1, 2, 3, -1, 0.5, 2, 0.1, 0.2, -3, 1, 1, 1, -2, 0.3, 0.7});
          return sum(tp, mul(tp, mul(tp, moved, moved), w));
        },
        {random_param(rng, {5, 3}), random_param(rng, {3}, 3.0), random_param(rng, {3})});
    CHECK(rep.max_rel < 1e-4);
  }
}

TEST_CASE("backward basics") {
  {
    Tape t;
    const Tensor x = Tensor::scalar(3.0, true);
    t.backward(x);
    CHECK(x.grad() == std::vector<double>{1.0});
  }
  {
    Tape t;
    const Tensor x = Tensor::parameter({3}, {1, 2, 3});
    t.backward(sum(t, mul(t, x, x)));
    CHECK(x.grad() == std::vector<double>{2, 4, 6});
  }
  {
    Tape t;
    const Tensor x = Tensor::parameter({2}, {1, 2});
    CHECK_THROWS_AS(t.backward(scale(t, x, 2.0)), ContractError);
  }
  SUBCASE("using a tensor twice adds both contributions") {
    const Tensor x = Tensor::parameter({2}, {0.5, -1.5});
    Tape t1;
    t1.backward(sum(t1, scale(t1, x, 3.0)));
    const auto g1 = x.grad();
    x.zero_grad();
    Tape t2;
    t2.backward(sum(t2, mul(t2, x, x)));
    const auto g2 = x.grad();
    x.zero_grad();
    Tape t3;
    t3.backward(add(t3, sum(t3, scale(t3, x, 3.0)), sum(t3, mul(t3, x, x))));
    const auto g = x.grad();
    for (std::size_t i = 0; i < 2; ++i) CHECK(g[i] == g1[i] + g2[i]);
  }
}

TEST_CASE("forward is deterministic") {
  std::mt19937_64 rng(27);
  const Tensor x = random_param(rng, {8, 5}), w = random_param(rng, {5, 3}), b = random_param(rng, {3});
  Tape t1, t2;
  const Tensor a = leaky_relu(t1, linear(t1, x, w, b));
  const Tensor c = leaky_relu(t2, linear(t2, x, w, b));
  CHECK(std::equal(a.data().begin(), a.data().end(), c.data().begin()));
}

TEST_CASE("adam") {
  SUBCASE("zero gradient leaves parameters unchanged") {
    std::vector<double> p{1.0, -2.0};
    const std::size_t sizes[] = {2};
    AdamState s(sizes);
    adam_step(p, std::vector<double>{0.0, 0.0}, s, 0.1);
    CHECK(p == std::vector<double>{1.0, -2.0});
    CHECK(s.step() == 1);
  }
  SUBCASE("first step moves by lr against the gradient sign") {
    std::vector<double> p{0.0};
    const std::size_t sizes[] = {1};
    AdamState s(sizes);
    const double g = 0.37, lr = 0.01;
    adam_step(p, std::vector<double>{g}, s, lr);
    // m_hat = g, v_hat = g^2
    CHECK(p[0] == doctest::Approx(-lr * g / (std::abs(g) + 1e-8)).epsilon(1e-12));
  }
  SUBCASE("quadratic bowl converges") {
    std::vector<double> x{1.0};
    const std::size_t sizes[] = {1};
    AdamState s(sizes);
    for (int i = 0; i < 500; ++i) adam_step(x, std::vector<double>{2 * x[0]}, s, 0.01);
    CHECK(std::abs(x[0]) < 1e-3);
  }
  SUBCASE("non-finite gradient throws before touching anything") {
    std::vector<double> a{1.0}, b{2.0};
    const std::size_t sizes[] = {1, 1};
    AdamState s(sizes);
    std::vector<std::span<double>> ps{a, b};
    const std::vector<double> ga{0.5}, gb{NAN};
    std::vector<std::span<const double>> gs{ga, gb};
    CHECK_THROWS_AS(adam_step(ps, gs, s, 0.1), NumericalError);
    CHECK(a[0] == 1.0);
    CHECK(s.step() == 0);
  }
}
