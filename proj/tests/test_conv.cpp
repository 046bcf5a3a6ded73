#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <vector>

#include "iconpeft/conv.hpp"
#include "iconpeft/gradcheck.hpp"
#include "iconpeft/ops.hpp"

#include "support/oracles.hpp"

using namespace iconpeft;

namespace {

template <class S>
Tensor<S> randn_t(Shape shape, uint64_t seed, double sigma = 1.0) {
  return Tensor<S>::randn(std::move(shape), seed, sigma);
}

}  // namespace

TEST_CASE("one-hot center kernel is the identity") {
  Tensor<double> x = randn_t<double>({2, 3, 5, 5}, 5);
  Tensor<double> k = Tensor<double>::zeros({2, 3, 3, 3});
  for (int64_t bc = 0; bc < 6; ++bc) k.data()[bc * 9 + 4] = 1.0;
  Tensor<double> y = conv2d_depthwise_dynamic(x, k);
  for (int64_t i = 0; i < x.numel(); ++i) CHECK(y.data()[i] == x.data()[i]);
}

TEST_CASE("all-ones 3x3 kernel on constant input shows the zero padding") {
  const double c = 1.5;
  Tensor<double> x = Tensor<double>::full({1, 1, 5, 5}, c);
  Tensor<double> k = Tensor<double>::full({1, 1, 3, 3}, 1.0);
  Tensor<double> y = conv2d_depthwise_dynamic(x, k);
  auto at = [&](int64_t i, int64_t j) { return y.data()[i * 5 + j]; };
  CHECK(at(2, 2) == doctest::Approx(9 * c));  // interior
  CHECK(at(0, 0) == doctest::Approx(4 * c));  // corner
  CHECK(at(4, 4) == doctest::Approx(4 * c));
  CHECK(at(0, 2) == doctest::Approx(6 * c));  // edge
}

TEST_CASE("validation errors") {
  Tensor<float> x = Tensor<float>::zeros({2, 3, 4, 4});
  CHECK_THROWS_AS(
      (void)conv2d_depthwise_dynamic(x, Tensor<float>::zeros({2, 3, 2, 2})),
      ConfigError);  // even K
  CHECK_THROWS_AS(
      (void)conv2d_depthwise_dynamic(x, Tensor<float>::zeros({1, 3, 3, 3})),
      ShapeError);  // batch mismatch
  CHECK_THROWS_AS(
      (void)conv2d_depthwise_dynamic(x, Tensor<float>::zeros({2, 2, 3, 3})),
      ShapeError);  // channel mismatch
  CHECK_THROWS_AS(
      (void)conv2d_depthwise_dynamic(x, Tensor<float>::zeros({2, 3, 3, 5})),
      ShapeError);  // non-square
}

TEST_CASE("random case matches the six-loop oracle and finite differences") {
  Tensor<double> x = randn_t<double>({2, 3, 5, 5}, 21);
  Tensor<double> k = randn_t<double>({2, 3, 3, 3}, 22);
  Tensor<double> y = conv2d_depthwise_dynamic(x, k);
  const auto expect = oracles::depthwise_dynamic_conv(
      std::vector<double>(x.data().begin(), x.data().end()),
      std::vector<double>(k.data().begin(), k.data().end()), 2, 3, 5, 5, 3);
  for (size_t i = 0; i < expect.size(); ++i) {
    CHECK(y.data()[i] == doctest::Approx(expect[i]).epsilon(1e-5));
  }

  auto f = [&]() { return sum_all(gelu(conv2d_depthwise_dynamic(x, k))); };
  std::vector<Tensor<double>> params{x, k};
  CHECK(finite_diff_check<double>(f, params, 1e-6) <= 1e-5);
}

TEST_CASE("batch equivariance: kernels are genuinely per-sample") {
  Tensor<double> x = randn_t<double>({3, 2, 4, 4}, 31);
  Tensor<double> k = randn_t<double>({3, 2, 3, 3}, 32);
  Tensor<double> y = conv2d_depthwise_dynamic(x, k);

  // Swap samples 0 and 2 of both inputs.
  const std::vector<int64_t> perm{2, 1, 0};
  auto permute_batch = [&](const Tensor<double>& t) {
    Tensor<double> out = Tensor<double>::zeros(t.shape());
    const int64_t stride = t.numel() / t.dim(0);
    for (int64_t b = 0; b < t.dim(0); ++b) {
      for (int64_t i = 0; i < stride; ++i) {
        out.data()[b * stride + i] = t.data()[perm[static_cast<size_t>(b)] * stride + i];
      }
    }
    return out;
  };
  Tensor<double> y_perm = conv2d_depthwise_dynamic(permute_batch(x), permute_batch(k));
  Tensor<double> expect = permute_batch(y);
  for (int64_t i = 0; i < y.numel(); ++i) {
    CHECK(y_perm.data()[i] == expect.data()[i]);  // bit-exact
  }
}

TEST_CASE("channel independence: zeroed kernel channel zeroes only that channel") {
  Tensor<double> x = randn_t<double>({2, 3, 4, 4}, 41);
  Tensor<double> k = randn_t<double>({2, 3, 3, 3}, 42);
  Tensor<double> base = conv2d_depthwise_dynamic(x, k);

  Tensor<double> k2 = k.clone();
  const int64_t ch = 1;
  for (int64_t b = 0; b < 2; ++b) {
    for (int64_t i = 0; i < 9; ++i) k2.data()[(b * 3 + ch) * 9 + i] = 0.0;
  }
  Tensor<double> y = conv2d_depthwise_dynamic(x, k2);
  const int64_t plane = 16;
  for (int64_t b = 0; b < 2; ++b) {
    for (int64_t c = 0; c < 3; ++c) {
      for (int64_t i = 0; i < plane; ++i) {
        const double v = y.data()[(b * 3 + c) * plane + i];
        if (c == ch) {
          CHECK(v == 0.0);
        } else {
          CHECK(v == base.data()[(b * 3 + c) * plane + i]);  // bit-identical
        }
      }
    }
  }
}

TEST_CASE("property sweep against the oracle on small shapes") {
  // Spot sweep here; the exhaustive version lives in the acceptance suite.
  uint64_t seed = 1000;
  for (int64_t b : {1, 3}) {
    for (int64_t c : {1, 4}) {
      for (int64_t h : {1, 4, 7}) {
        for (int64_t w : {2, 8}) {
          for (int64_t k : {1, 3, 5, 7}) {
            Tensor<double> x = randn_t<double>({b, c, h, w}, ++seed);
            Tensor<double> kk = randn_t<double>({b, c, k, k}, ++seed);
            Tensor<double> y = conv2d_depthwise_dynamic(x, kk);
            const auto expect = oracles::depthwise_dynamic_conv(
                std::vector<double>(x.data().begin(), x.data().end()),
                std::vector<double>(kk.data().begin(), kk.data().end()), b, c, h,
                w, k);
            for (size_t i = 0; i < expect.size(); ++i) {
              REQUIRE(y.data()[i] == doctest::Approx(expect[i]).epsilon(1e-5));
            }
          }
        }
      }
    }
  }
}
