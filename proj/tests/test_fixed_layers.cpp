#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "cbfn/fixed_layers.hpp"
#include "cbfn/ops.hpp"
#include "oracles.hpp"

using namespace cbfn;
using oracles::rand_tensor;

namespace {

// Interior spread (max - min) over pixels at least `margin` from every border.
template <typename T>
double interior_spread(const Tensor<T>& t, int margin) {
  const Shape s = t.shape();
  double spread = 0.0;
  for (std::int64_t n = 0; n < s.n; ++n) {
    for (std::int64_t c = 0; c < s.c; ++c) {
      double lo = 1e300, hi = -1e300;
      for (std::int64_t y = margin; y < s.h - margin; ++y) {
        for (std::int64_t x = margin; x < s.w - margin; ++x) {
          const double v = t.at(n, c, y, x);
          lo = std::min(lo, v);
          hi = std::max(hi, v);
        }
      }
      spread = std::max(spread, hi - lo);
    }
  }
  return spread;
}

}  // namespace

TEST_CASE("zero-order hold kernel") {
  auto k2 = zoh_kernel(2);
  REQUIRE(k2.size() == 4);
  for (double v : k2) CHECK(v == 1.0);

  auto k3 = zoh_kernel(3);
  REQUIRE(k3.size() == 9);
  for (double v : k3) CHECK(v == 1.0);

  CHECK_THROWS_AS(zoh_kernel(1), ConfigError);

  SUBCASE("mean normalization scales to sum 1") {
    auto k = make_fixed_kernel<double>(2, 0, KernelNorm::mean);
    for (double v : k.taps) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));
  }
}

TEST_CASE("kernel recursion base and first order") {
  auto k0 = fixed_kernel_raw(2, 0);
  REQUIRE(k0.size() == 4);
  for (double v : k0) CHECK(v == 1.0);

  auto k1 = fixed_kernel_raw(2, 1);
  const double expect[9] = {1, 2, 1, 2, 4, 2, 1, 2, 1};
  REQUIRE(k1.size() == 9);
  for (int i = 0; i < 9; ++i) CHECK(k1[i] == expect[i]);

  CHECK_THROWS_AS(fixed_kernel_raw(2, -1), ConfigError);
}

TEST_CASE("kernel recursion matches the repeated-convolution oracle") {
  for (int rate : {2, 3}) {
    for (int order = 0; order <= 3; ++order) {
      CAPTURE(rate);
      CAPTURE(order);
      const int side = fixed_kernel_side(rate, order);
      CHECK(side == (order + 1) * (rate - 1) + 1);

      auto k = fixed_kernel_raw(rate, order);
      // Oracle: fold the hold onto itself `order` times with an
      // independently written full convolution.
      std::vector<double> ref(static_cast<std::size_t>(rate) * rate, 1.0);
      int ref_side = rate;
      const std::vector<double> hold(static_cast<std::size_t>(rate) * rate, 1.0);
      for (int d = 0; d < order; ++d) {
        ref = oracles::ref_conv_full(ref, ref_side, hold, rate);
        ref_side += rate - 1;
      }
      REQUIRE(ref_side == side);
      REQUIRE(k.size() == ref.size());
      for (std::size_t i = 0; i < k.size(); ++i) CHECK(k[i] == ref[i]);
    }
  }
}

TEST_CASE("fixed kernel invariants: symmetry, positivity, normalization") {
  for (int rate : {2, 3}) {
    for (int order = 0; order <= 3; ++order) {
      for (KernelNorm norm : {KernelNorm::unit, KernelNorm::mean}) {
        CAPTURE(rate);
        CAPTURE(order);
        auto k = make_fixed_kernel<double>(rate, order, norm);
        const int side = k.side;

        for (int r = 0; r < side; ++r)
          for (int c = 0; c < side; ++c) {
            CHECK(k.tap(r, c) > 0.0);
            CHECK(k.tap(r, c) == k.tap(side - 1 - r, c));  // vertical flip
            CHECK(k.tap(r, c) == k.tap(r, side - 1 - c));  // horizontal flip
          }

        if (norm == KernelNorm::unit) {
          // Every polyphase component sums to 1.
          for (int pr = 0; pr < rate; ++pr)
            for (int pc = 0; pc < rate; ++pc) {
              double s = 0.0;
              for (int r = pr; r < side; r += rate)
                for (int c = pc; c < side; c += rate) s += k.tap(r, c);
              CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
            }
        } else {
          double s = 0.0;
          for (double v : k.taps) s += v;
          CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
        }
      }
    }
  }
}

TEST_CASE("kernel text format") {
  auto raw = fixed_kernel_raw(2, 1);
  CHECK(format_kernel(raw, 3) == "1 2 1\n2 4 2\n1 2 1\n");
}

TEST_CASE("fixed_conv constant propagation with mean kernel") {
  auto x = Tensor<float>::full({1, 2, 6, 6}, 5.0f);
  auto bias = Tensor<float>::full({1, 2, 1, 1}, 0.5f);
  auto k = make_fixed_kernel<float>(2, 0, KernelNorm::mean);
  auto out = fixed_conv<float>(nullptr, x, k, bias);
  CHECK(out.shape() == x.shape());
  // Interior pixels see the whole kernel: 5 * 1 + 0.5.
  CHECK(interior_spread(out, 1) == 0.0);
  CHECK(out.at(0, 0, 3, 3) == doctest::Approx(5.5).epsilon(1e-6));
  CHECK(out.at(0, 1, 2, 4) == doctest::Approx(5.5).epsilon(1e-6));
}

TEST_CASE("fixed_conv impulse response stamps the kernel") {
  auto x = Tensor<float>::zeros({1, 1, 6, 6});
  x.at(0, 0, 3, 3) = 1.0f;
  auto k = make_fixed_kernel<float>(2, 0, KernelNorm::unit);
  auto out = fixed_conv<float>(nullptr, x, k, Tensor<float>{});
  // Pad is (1,0): output rows 3..4, cols 3..4 each receive one tap.
  for (int y = 0; y < 6; ++y)
    for (int z = 0; z < 6; ++z) {
      const float expect = (y >= 3 && y <= 4 && z >= 3 && z <= 4) ? 1.0f : 0.0f;
      CHECK(out.at(0, 0, y, z) == expect);
    }
}

TEST_CASE("fixed_conv matches the depthwise oracle") {
  Rng rng(71);
  auto x = rand_tensor<double>({1, 3, 6, 6}, rng);
  auto bias = rand_tensor<double>({1, 3, 1, 1}, rng);
  for (int order : {0, 1, 2}) {
    auto k = make_fixed_kernel<double>(2, order, KernelNorm::unit);
    auto out = fixed_conv<double>(nullptr, x, k, bias);
    auto ref = oracles::ref_depthwise(x, k.taps, k.side, bias, k.side / 2);
    double m = 0.0;
    for (std::int64_t i = 0; i < out.numel(); ++i) {
      m = std::max(m, std::abs(out.data()[i] - ref.data()[i]));
    }
    CHECK(m < 1e-6);
  }

  auto bad_bias = rand_tensor<double>({1, 2, 1, 1}, rng);
  auto k = make_fixed_kernel<double>(2, 0, KernelNorm::unit);
  CHECK_THROWS_AS(fixed_conv<double>(nullptr, x, k, bad_bias), ShapeError);
}

TEST_CASE("fixed_up doubles the spatial size") {
  Rng rng(91);
  for (int c : {1, 3}) {
    auto x = rand_tensor<float>({1, c, 8, 8}, rng);
    auto w = rand_tensor<float>({c, 2, 4, 4}, rng);
    auto b = Tensor<float>::zeros({1, 2, 1, 1});
    auto fb = Tensor<float>::zeros({1, 2, 1, 1});
    auto k = make_fixed_kernel<float>(2, 0, KernelNorm::unit);
    auto out = fixed_up<float>(nullptr, x, w, b, k, fb);
    CHECK(out.shape() == Shape{1, 2, 16, 16});
  }
}

TEST_CASE("fixed_up constant input gives constant interior output") {
  auto k = make_fixed_kernel<float>(2, 0, KernelNorm::unit);
  int worse = 0;
  std::vector<double> plain_spreads;
  for (int seed = 0; seed < 100; ++seed) {
    Rng rng(5000 + seed);
    auto x = Tensor<float>::full({1, 4, 8, 8}, 1.0f);
    auto w = rand_tensor<float>({4, 4, 4, 4}, rng, -0.5, 0.5);
    auto b = Tensor<float>::zeros({1, 4, 1, 1});
    auto fb = Tensor<float>::zeros({1, 4, 1, 1});

    auto smoothed = fixed_up<float>(nullptr, x, w, b, k, fb);
    const double s_fixed = interior_spread(smoothed, 2);
    CHECK(s_fixed <= 1e-5);

    auto plain = conv_transpose2d<float>(nullptr, x, w, b, 2, 1);
    plain_spreads.push_back(interior_spread(plain, 2));
    if (plain_spreads.back() <= s_fixed) ++worse;
  }
  std::sort(plain_spreads.begin(), plain_spreads.end());
  CHECK(plain_spreads[50] > 1e-3);  // median across seeds
  CHECK(worse == 0);
}

TEST_CASE("fixed_up zero input zero bias gives zero output") {
  Rng rng(99);
  auto x = Tensor<float>::zeros({1, 2, 4, 4});
  auto w = rand_tensor<float>({2, 3, 4, 4}, rng);
  auto b = Tensor<float>::zeros({1, 3, 1, 1});
  auto fb = Tensor<float>::zeros({1, 3, 1, 1});
  auto k = make_fixed_kernel<float>(2, 0, KernelNorm::unit);
  auto out = fixed_up<float>(nullptr, x, w, b, k, fb);
  for (std::int64_t i = 0; i < out.numel(); ++i) CHECK(out.data()[i] == 0.0f);
}

TEST_CASE("fixed_down halves the spatial size and doubles channels") {
  Rng rng(111);
  const int c = 2;
  auto x = rand_tensor<float>({1, c, 256, 256}, rng);
  auto w = rand_tensor<float>({2 * c, c, 3, 3}, rng);
  auto b = Tensor<float>::zeros({1, 2 * c, 1, 1});
  auto fb = Tensor<float>::zeros({1, c, 1, 1});
  auto k = make_fixed_kernel<float>(2, 0, KernelNorm::mean);
  auto out = fixed_down<float>(nullptr, x, k, fb, w, b);
  CHECK(out.shape() == Shape{1, 2 * c, 128, 128});

  SUBCASE("odd spatial dims are rejected") {
    auto odd = rand_tensor<float>({1, c, 7, 8}, rng);
    CHECK_THROWS_AS(fixed_down<float>(nullptr, odd, k, fb, w, b), ConfigError);
  }
}

TEST_CASE("fixed_down zero input zero biases gives zero output") {
  Rng rng(131);
  auto x = Tensor<float>::zeros({1, 2, 8, 8});
  auto w = rand_tensor<float>({4, 2, 3, 3}, rng);
  auto b = Tensor<float>::zeros({1, 4, 1, 1});
  auto fb = Tensor<float>::zeros({1, 2, 1, 1});
  auto k = make_fixed_kernel<float>(2, 0, KernelNorm::mean);
  auto out = fixed_down<float>(nullptr, x, k, fb, w, b);
  for (std::int64_t i = 0; i < out.numel(); ++i) CHECK(out.data()[i] == 0.0f);
}

TEST_CASE("fixed_down backward carries constant gradients to the input") {
  auto k = make_fixed_kernel<float>(2, 0, KernelNorm::mean);
  int worse = 0;
  std::vector<double> plain_spreads;
  for (int seed = 0; seed < 100; ++seed) {
    Rng rng(6000 + seed);
    auto x = rand_tensor<float>({1, 3, 12, 12}, rng);
    x.set_requires_grad(true);
    auto w = rand_tensor<float>({4, 3, 3, 3}, rng, -0.5, 0.5);
    auto b = Tensor<float>::zeros({1, 4, 1, 1});
    auto fb = Tensor<float>::zeros({1, 3, 1, 1});

    Graph<float> g;
    auto y = fixed_down<float>(&g, x, k, fb, w, b);
    auto loss = sum_all(&g, y);  // constant upstream gradient of ones
    g.backward(loss);
    auto grad = Tensor<float>::from_data(x.shape(), x.grad());
    const double s_fixed = interior_spread(grad, 2);
    CHECK(s_fixed <= 1e-5);

    // Same probe without the smoothing stage.
    auto x2 = rand_tensor<float>({1, 3, 12, 12}, rng);
    x2.set_requires_grad(true);
    Graph<float> g2;
    auto y2 = conv2d<float>(&g2, x2, w, b, 2, Pad2{1, 1}, Pad2{0, 0});
    auto loss2 = sum_all(&g2, y2);
    g2.backward(loss2);
    auto grad2 = Tensor<float>::from_data(x2.shape(), x2.grad());
    plain_spreads.push_back(interior_spread(grad2, 2));
    if (plain_spreads.back() <= s_fixed) ++worse;
  }
  std::sort(plain_spreads.begin(), plain_spreads.end());
  CHECK(plain_spreads[50] > 1e-3);
  CHECK(worse == 0);
}

TEST_CASE("fixed_up/fixed_down require rate 2") {
  Rng rng(141);
  auto x = rand_tensor<float>({1, 2, 8, 8}, rng);
  auto w_up = rand_tensor<float>({2, 2, 4, 4}, rng);
  auto w_dn = rand_tensor<float>({2, 2, 3, 3}, rng);
  auto b = Tensor<float>::zeros({1, 2, 1, 1});
  auto k3 = make_fixed_kernel<float>(3, 0, KernelNorm::unit);
  CHECK_THROWS_AS(fixed_up<float>(nullptr, x, w_up, b, k3, b), ConfigError);
  CHECK_THROWS_AS(fixed_down<float>(nullptr, x, k3, b, w_dn, b), ConfigError);
}
