#include <doctest.h>

#include <cmath>

#include "cbfn/fixed_layers.hpp"
#include "cbfn/ops.hpp"
#include "oracles.hpp"

using namespace cbfn;
using oracles::grad_check;
using oracles::rand_tensor;

TEST_CASE("backward of sum gives all-ones gradient") {
  Rng rng(1);
  auto w = rand_tensor<double>({1, 2, 3, 3}, rng);
  w.set_requires_grad(true);
  Graph<double> g;
  auto loss = sum_all(&g, w);
  g.backward(loss);
  for (const double v : w.grad()) CHECK(v == 1.0);

  SUBCASE("repeated backward accumulates") {
    g.backward(loss);
    for (const double v : w.grad()) CHECK(v == 2.0);
  }
}

TEST_CASE("l1 at exact equality gives zero gradient (tie convention)") {
  Rng rng(2);
  auto w = rand_tensor<double>({1, 1, 4, 4}, rng);
  w.set_requires_grad(true);
  Graph<double> g;
  auto loss = l1_loss(&g, w, w.detached_clone());
  g.backward(loss);
  for (const double v : w.grad()) CHECK(v == 0.0);
}

TEST_CASE("backward rejects non-scalar loss and foreign tensors") {
  Rng rng(3);
  auto x = rand_tensor<double>({1, 1, 2, 2}, rng);
  x.set_requires_grad(true);
  Graph<double> g;
  auto y = relu(&g, x);
  CHECK_THROWS_AS(g.backward(y), UsageError);

  auto stray = Tensor<double>::zeros({1, 1, 1, 1}, true);
  CHECK_THROWS_AS(g.backward(stray), UsageError);
}

// Finite-difference suite. Small shapes, >= 20 seeds per op, 64-bit,
// relative tolerance 1e-5.
namespace {

constexpr int kSeeds = 20;
constexpr double kTol = 1e-5;

}  // namespace

TEST_CASE("gradcheck: conv2d (input, weight, bias)") {
  for (int seed = 0; seed < kSeeds; ++seed) {
    Rng rng(seed);
    const int stride = (seed % 2 == 0) ? 1 : 2;
    // Stride 2 needs a padded span divisible by 2: use 6x6 with pad (1,0).
    auto x = (stride == 1) ? rand_tensor<double>({2, 2, 5, 5}, rng)
                           : rand_tensor<double>({2, 2, 6, 6}, rng);
    auto w = rand_tensor<double>({3, 2, 3, 3}, rng);
    auto b = rand_tensor<double>({1, 3, 1, 1}, rng);
    const Pad2 pb{1, 1};
    const Pad2 pe = (stride == 1) ? Pad2{1, 1} : Pad2{0, 0};
    auto res = grad_check(
        [&](Graph<double>* g) { return conv2d(g, x, w, b, stride, pb, pe); },
        {x, w, b}, 1000 + seed, kTol);
    CAPTURE(seed);
    CAPTURE(res.where);
    CHECK_MESSAGE(res.ok, "max rel err ", res.max_err);
  }
}

TEST_CASE("gradcheck: conv_transpose2d (input, weight, bias)") {
  for (int seed = 0; seed < kSeeds; ++seed) {
    Rng rng(40 + seed);
    auto x = rand_tensor<double>({1, 2, 4, 4}, rng);
    auto w = rand_tensor<double>({2, 3, 4, 4}, rng);
    auto b = rand_tensor<double>({1, 3, 1, 1}, rng);
    auto res = grad_check(
        [&](Graph<double>* g) { return conv_transpose2d(g, x, w, b, 2, 1); },
        {x, w, b}, 2000 + seed, kTol);
    CAPTURE(seed);
    CHECK_MESSAGE(res.ok, "max rel err ", res.max_err);
  }
}

TEST_CASE("gradcheck: batch_norm train mode (input, gamma, beta)") {
  for (int seed = 0; seed < kSeeds; ++seed) {
    Rng rng(80 + seed);
    auto x = rand_tensor<double>({3, 2, 4, 4}, rng, -2.0, 2.0);
    auto gamma = rand_tensor<double>({1, 2, 1, 1}, rng, 0.5, 1.5);
    auto beta = rand_tensor<double>({1, 2, 1, 1}, rng, -0.5, 0.5);
    auto rm = Tensor<double>::zeros({1, 2, 1, 1});
    auto rv = Tensor<double>::full({1, 2, 1, 1}, 1.0);
    auto res = grad_check(
        [&](Graph<double>* g) {
          return batch_norm(g, x, gamma, beta, rm, rv, true, 1e-5, 0.1);
        },
        {x, gamma, beta}, 3000 + seed, kTol);
    CAPTURE(seed);
    CHECK_MESSAGE(res.ok, "max rel err ", res.max_err);
  }
}

TEST_CASE("gradcheck: batch_norm eval mode (affine path)") {
  for (int seed = 0; seed < 5; ++seed) {
    Rng rng(120 + seed);
    auto x = rand_tensor<double>({2, 2, 3, 3}, rng);
    auto gamma = rand_tensor<double>({1, 2, 1, 1}, rng, 0.5, 1.5);
    auto beta = rand_tensor<double>({1, 2, 1, 1}, rng, -0.5, 0.5);
    auto rm = rand_tensor<double>({1, 2, 1, 1}, rng, -0.2, 0.2);
    auto rv = rand_tensor<double>({1, 2, 1, 1}, rng, 0.5, 2.0);
    auto res = grad_check(
        [&](Graph<double>* g) {
          return batch_norm(g, x, gamma, beta, rm, rv, false, 1e-5, 0.1);
        },
        {x, gamma, beta}, 4000 + seed, kTol);
    CAPTURE(seed);
    CHECK_MESSAGE(res.ok, "max rel err ", res.max_err);
  }
}

TEST_CASE("gradcheck: relu away from the kink") {
  for (int seed = 0; seed < kSeeds; ++seed) {
    Rng rng(160 + seed);
    auto x = rand_tensor<double>({2, 3, 4, 4}, rng);
    // Keep inputs clear of 0 so central differences see a smooth function.
    for (std::int64_t i = 0; i < x.numel(); ++i) {
      if (std::abs(x.data()[i]) < 0.05) x.data()[i] = 0.1;
    }
    auto res = grad_check([&](Graph<double>* g) { return relu(g, x); }, {x},
                          5000 + seed, kTol);
    CAPTURE(seed);
    CHECK_MESSAGE(res.ok, "max rel err ", res.max_err);
  }
}

TEST_CASE("relu all-negative input has zero output and zero input gradient") {
  Rng rng(200);
  auto x = rand_tensor<double>({1, 2, 3, 3}, rng, -3.0, -0.5);
  x.set_requires_grad(true);
  Graph<double> g;
  auto y = relu(&g, x);
  for (std::int64_t i = 0; i < y.numel(); ++i) CHECK(y.data()[i] == 0.0);
  auto loss = sum_all(&g, y);
  g.backward(loss);
  for (const double v : x.grad()) CHECK(v == 0.0);
}

TEST_CASE("gradcheck: concat_channels") {
  for (int seed = 0; seed < kSeeds; ++seed) {
    Rng rng(240 + seed);
    auto a = rand_tensor<double>({1, 2, 3, 3}, rng);
    auto b = rand_tensor<double>({1, 3, 3, 3}, rng);
    auto res = grad_check(
        [&](Graph<double>* g) { return concat_channels(g, a, b); }, {a, b},
        6000 + seed, kTol);
    CAPTURE(seed);
    CHECK_MESSAGE(res.ok, "max rel err ", res.max_err);
  }
}

TEST_CASE("gradcheck: l1_loss away from ties") {
  for (int seed = 0; seed < kSeeds; ++seed) {
    Rng rng(280 + seed);
    auto p = rand_tensor<double>({1, 2, 4, 4}, rng);
    auto t = rand_tensor<double>({1, 2, 4, 4}, rng);
    // Push pairs apart so |p - t| stays differentiable under the FD step.
    for (std::int64_t i = 0; i < p.numel(); ++i) {
      if (std::abs(p.data()[i] - t.data()[i]) < 0.05) p.data()[i] += 0.1;
    }
    auto res = grad_check([&](Graph<double>* g) { return l1_loss(g, p, t); },
                          {p, t}, 7000 + seed, kTol);
    CAPTURE(seed);
    CHECK_MESSAGE(res.ok, "max rel err ", res.max_err);
  }
}

TEST_CASE("gradcheck: broadcast_spatial") {
  for (int seed = 0; seed < kSeeds; ++seed) {
    Rng rng(320 + seed);
    auto x = rand_tensor<double>({2, 3, 1, 1}, rng);
    auto res = grad_check(
        [&](Graph<double>* g) { return broadcast_spatial(g, x, 4, 5); }, {x},
        8000 + seed, kTol);
    CAPTURE(seed);
    CHECK_MESSAGE(res.ok, "max rel err ", res.max_err);
  }
}

TEST_CASE("gradcheck: fixed_conv input and bias path") {
  for (int seed = 0; seed < kSeeds; ++seed) {
    Rng rng(360 + seed);
    auto x = rand_tensor<double>({1, 2, 5, 5}, rng);
    auto bias = rand_tensor<double>({1, 2, 1, 1}, rng);
    auto kernel = make_fixed_kernel<double>(2, seed % 3, KernelNorm::unit);
    auto res = grad_check(
        [&](Graph<double>* g) { return fixed_conv(g, x, kernel, bias); },
        {x, bias}, 9000 + seed, kTol);
    CAPTURE(seed);
    CHECK_MESSAGE(res.ok, "max rel err ", res.max_err);
  }
}

TEST_CASE("gradcheck: a composite op chain") {
  // conv -> fixed_down -> l1 against a far-away target (no kinks in range).
  for (int seed = 0; seed < 5; ++seed) {
    Rng rng(400 + seed);
    auto x = rand_tensor<double>({1, 2, 6, 6}, rng);
    auto w1 = rand_tensor<double>({2, 2, 3, 3}, rng, -0.5, 0.5);
    auto b1 = rand_tensor<double>({1, 2, 1, 1}, rng, -0.2, 0.2);
    auto fb = rand_tensor<double>({1, 2, 1, 1}, rng, -0.2, 0.2);
    auto w2 = rand_tensor<double>({3, 2, 3, 3}, rng, -0.5, 0.5);
    auto b2 = rand_tensor<double>({1, 3, 1, 1}, rng, -0.2, 0.2);
    auto kernel = make_fixed_kernel<double>(2, 0, KernelNorm::mean);
    auto target = rand_tensor<double>({1, 3, 3, 3}, rng, 50.0, 60.0);
    auto res = grad_check(
        [&](Graph<double>* g) {
          auto h1 = conv2d(g, x, w1, b1, 1, Pad2{1, 1}, Pad2{1, 1});
          auto h3 = fixed_down(g, h1, kernel, fb, w2, b2);
          return l1_loss(g, h3, target);
        },
        {x, w1, b1, fb, w2, b2}, 10000 + seed, kTol);
    CAPTURE(seed);
    CHECK_MESSAGE(res.ok, "max rel err ", res.max_err);
  }
}
