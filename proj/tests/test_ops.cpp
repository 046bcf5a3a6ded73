#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "iconpeft/gradcheck.hpp"
#include "iconpeft/ops.hpp"

#include "support/oracles.hpp"

using namespace iconpeft;

namespace {

template <class S>
std::vector<S> seeded_values(int64_t n, uint64_t seed, double sigma = 1.0) {
  SeededRng rng(seed);
  std::vector<S> v(static_cast<size_t>(n));
  for (auto& x : v) x = static_cast<S>(rng.normal() * sigma);
  return v;
}

}  // namespace

TEST_CASE("matmul identity and hand cases") {
  Tensor<double> id = Tensor<double>::from({2, 2}, {1, 0, 0, 1});
  Tensor<double> a = Tensor<double>::from({2, 2}, {1, 2, 3, 4});
  Tensor<double> out = matmul(id, a);
  for (int i = 0; i < 4; ++i) CHECK(out.data()[i] == a.data()[i]);

  Tensor<double> row = Tensor<double>::from({1, 2}, {1, 2});
  Tensor<double> col = Tensor<double>::from({2, 1}, {3, 4});
  CHECK(matmul(row, col).item() == doctest::Approx(11.0));
}

TEST_CASE("matmul matches the triple-loop oracle") {
  const auto av = seeded_values<double>(12, 101);
  const auto bv = seeded_values<double>(8, 102);
  Tensor<double> a = Tensor<double>::from({3, 4}, av);
  Tensor<double> b = Tensor<double>::from({4, 2}, bv);
  const auto expect = oracles::matmul(av, bv, 3, 4, 2);
  Tensor<double> out = matmul(a, b);
  for (size_t i = 0; i < expect.size(); ++i) {
    CHECK(out.data()[i] == doctest::Approx(expect[i]).epsilon(1e-6));
  }
}

TEST_CASE("matmul dimension error names both shapes") {
  Tensor<float> a = Tensor<float>::zeros({3, 4});
  Tensor<float> b = Tensor<float>::zeros({5, 2});
  try {
    (void)matmul(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[3, 4]") != std::string::npos);
    CHECK(msg.find("[5, 2]") != std::string::npos);
  }
}

TEST_CASE("matmul broadcasts batch dims and its gradients check out") {
  Tensor<double> x = Tensor<double>::from({2, 3, 4}, seeded_values<double>(24, 7));
  Tensor<double> w = Tensor<double>::from({4, 5}, seeded_values<double>(20, 8));
  Tensor<double> out = matmul(x, w);
  CHECK(out.shape() == Shape{2, 3, 5});
  // Batch b result equals the 2-D product of slice b.
  for (int64_t b = 0; b < 2; ++b) {
    std::vector<double> slice(x.data().begin() + b * 12,
                              x.data().begin() + (b + 1) * 12);
    const auto expect = oracles::matmul(
        slice, std::vector<double>(w.data().begin(), w.data().end()), 3, 4, 5);
    for (size_t i = 0; i < expect.size(); ++i) {
      CHECK(out.data()[b * 15 + static_cast<int64_t>(i)] ==
            doctest::Approx(expect[i]).epsilon(1e-9));
    }
  }

  auto f = [&]() { return sum_all(gelu(matmul(x, w))); };
  std::vector<Tensor<double>> params{x, w};
  CHECK(finite_diff_check<double>(f, params, 1e-6) <= 1e-6);
}

TEST_CASE("4-d batched matmul gradients (attention shape)") {
  Tensor<double> q = Tensor<double>::from({2, 2, 3, 4}, seeded_values<double>(48, 9));
  Tensor<double> k = Tensor<double>::from({2, 2, 4, 3}, seeded_values<double>(48, 10));
  auto f = [&]() {
    Tensor<double> z = matmul(q, k);
    return sum_all(mul(softmax(z), gelu(z)));
  };
  std::vector<Tensor<double>> params{q, k};
  CHECK(finite_diff_check<double>(f, params, 1e-6) <= 1e-6);
}

TEST_CASE("layer_norm hand examples") {
  Tensor<double> gamma = Tensor<double>::full({3}, 1.0);
  Tensor<double> beta = Tensor<double>::zeros({3});

  SUBCASE("constant vector standardizes to zero via eps") {
    Tensor<double> x = Tensor<double>::full({3}, 4.2);
    Tensor<double> y = layer_norm(x, gamma, beta, 1e-5);
    for (double v : y.data()) CHECK(v == doctest::Approx(0.0).epsilon(1e-9));
  }
  SUBCASE("[1,2,3] standardizes with population std") {
    Tensor<double> x = Tensor<double>::from({3}, {1, 2, 3});
    Tensor<double> y = layer_norm(x, gamma, beta, 1e-12);
    CHECK(y.data()[0] == doctest::Approx(-1.2247).epsilon(1e-3));
    CHECK(y.data()[1] == doctest::Approx(0.0).epsilon(1e-3));
    CHECK(y.data()[2] == doctest::Approx(1.2247).epsilon(1e-3));
  }
  SUBCASE("gamma 0, beta 5 collapses to the affine shift") {
    Tensor<double> x = Tensor<double>::from({3}, {1, 2, 3});
    Tensor<double> g0 = Tensor<double>::zeros({3});
    Tensor<double> b5 = Tensor<double>::full({3}, 5.0);
    Tensor<double> y = layer_norm(x, g0, b5, 1e-5);
    for (double v : y.data()) CHECK(v == doctest::Approx(5.0));
  }
  SUBCASE("pre-affine rows have mean 0 and variance 1") {
    Tensor<double> x = Tensor<double>::from({4, 3}, seeded_values<double>(12, 55));
    Tensor<double> y = layer_norm(x, gamma, beta, 1e-9);
    for (int64_t r = 0; r < 4; ++r) {
      double mu = 0;
      double var = 0;
      for (int64_t j = 0; j < 3; ++j) mu += y.data()[r * 3 + j];
      mu /= 3;
      for (int64_t j = 0; j < 3; ++j) {
        var += (y.data()[r * 3 + j] - mu) * (y.data()[r * 3 + j] - mu);
      }
      var /= 3;
      CHECK(mu == doctest::Approx(0.0).epsilon(1e-6));
      CHECK(var == doctest::Approx(1.0).epsilon(1e-4));
    }
  }
  SUBCASE("affine width mismatch raises a dimension error") {
    Tensor<double> x = Tensor<double>::zeros({4});
    CHECK_THROWS_AS((void)layer_norm(x, gamma, beta, 1e-5), ShapeError);
  }
  SUBCASE("eps must be positive") {
    Tensor<double> x = Tensor<double>::from({3}, {1, 2, 3});
    CHECK_THROWS_AS((void)layer_norm(x, gamma, beta, 0.0), ConfigError);
  }
}

TEST_CASE("layer_norm gradients against finite differences") {
  Tensor<double> x = Tensor<double>::from({3, 5}, seeded_values<double>(15, 31));
  Tensor<double> gamma = Tensor<double>::from({5}, seeded_values<double>(5, 32, 0.3));
  Tensor<double> beta = Tensor<double>::from({5}, seeded_values<double>(5, 33, 0.3));
  auto f = [&]() { return sum_all(gelu(layer_norm(x, gamma, beta, 1e-5))); };
  std::vector<Tensor<double>> params{x, gamma, beta};
  CHECK(finite_diff_check<double>(f, params, 1e-6) <= 1e-6);
}

TEST_CASE("softmax basics") {
  SUBCASE("symmetry") {
    Tensor<double> x = Tensor<double>::from({2}, {0, 0});
    Tensor<double> y = softmax(x);
    CHECK(y.data()[0] == doctest::Approx(0.5));
    CHECK(y.data()[1] == doctest::Approx(0.5));
  }
  SUBCASE("max subtraction survives magnitude 1000") {
    Tensor<double> x = Tensor<double>::from({2}, {1000, 0});
    Tensor<double> y = softmax(x);
    CHECK(y.data()[0] == doctest::Approx(1.0));
    CHECK(y.data()[1] == doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("matches the exp/sum oracle on a random length-7 vector") {
    const auto v = seeded_values<double>(7, 44);
    Tensor<double> x = Tensor<double>::from({7}, v);
    Tensor<double> y = softmax(x);
    double mx = v[0];
    for (double t : v) mx = std::max(mx, t);
    double sum = 0;
    for (double t : v) sum += std::exp(t - mx);
    for (size_t i = 0; i < v.size(); ++i) {
      CHECK(y.data()[i] ==
            doctest::Approx(std::exp(v[i] - mx) / sum).epsilon(1e-6));
    }
  }
  SUBCASE("rows sum to one for arbitrary finite input") {
    SeededRng rng(91);
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<double> v(6);
      for (double& t : v) t = rng.normal() * 1e3;
      Tensor<double> y = softmax(Tensor<double>::from({6}, v));
      double s = 0;
      for (double t : y.data()) {
        CHECK(t >= 0.0);
        s += t;
      }
      CHECK(std::abs(s - 1.0) <= 1e-6);
    }
  }
}

TEST_CASE("softmax gradients against finite differences") {
  Tensor<double> x = Tensor<double>::from({3, 4}, seeded_values<double>(12, 45));
  Tensor<double> w = Tensor<double>::from({4, 4}, seeded_values<double>(16, 46));
  auto f = [&]() { return sum_all(mul(softmax(x), matmul(x, w))); };
  std::vector<Tensor<double>> params{x, w};
  CHECK(finite_diff_check<double>(f, params, 1e-6) <= 1e-6);
}

TEST_CASE("broadcast add/sub/mul forward and backward") {
  Tensor<double> x = Tensor<double>::from({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor<double> b = Tensor<double>::from({3}, {10, 20, 30});
  Tensor<double> y = add(x, b);
  CHECK(y.data()[0] == 11);
  CHECK(y.data()[5] == 36);
  Tensor<double> s = Tensor<double>::scalar(2.0);
  Tensor<double> z = mul(x, s);
  CHECK(z.data()[4] == 10);
  CHECK_THROWS_AS((void)add(Tensor<double>::zeros({2, 3}), Tensor<double>::zeros({2, 4})),
                  ShapeError);

  Tensor<double> xx = Tensor<double>::from({2, 3}, seeded_values<double>(6, 61));
  Tensor<double> bb = Tensor<double>::from({3}, seeded_values<double>(3, 62));
  Tensor<double> gg = Tensor<double>::from({1}, {0.7});
  auto f = [&]() { return sum_all(gelu(mul(add(xx, bb), gg))); };
  std::vector<Tensor<double>> params{xx, bb, gg};
  CHECK(finite_diff_check<double>(f, params, 1e-6) <= 1e-6);
}

TEST_CASE("reshape and permute round-trip and backward") {
  const auto v = seeded_values<double>(24, 71);
  Tensor<double> x = Tensor<double>::from({2, 3, 4}, v);
  Tensor<double> p = permute(x, {2, 0, 1});
  CHECK(p.shape() == Shape{4, 2, 3});
  Tensor<double> back = permute(p, {1, 2, 0});
  for (size_t i = 0; i < v.size(); ++i) CHECK(back.data()[i] == v[i]);

  CHECK_THROWS_AS((void)reshape(x, {5, 5}), ShapeError);
  CHECK_THROWS_AS((void)permute(x, {0, 0, 1}), ShapeError);

  auto f = [&]() {
    Tensor<double> r = reshape(permute(x, {1, 0, 2}), {6, 4});
    return sum_all(mul(r, r));
  };
  std::vector<Tensor<double>> params{x};
  CHECK(finite_diff_check<double>(f, params, 1e-6) <= 1e-6);
}

TEST_CASE("mean_axis and scale backward") {
  Tensor<double> x = Tensor<double>::from({2, 4, 3}, seeded_values<double>(24, 81));
  Tensor<double> m = mean_axis(x, 1);
  CHECK(m.shape() == Shape{2, 3});
  double expect = 0;
  for (int64_t j = 0; j < 4; ++j) expect += x.data()[j * 3];
  CHECK(m.data()[0] == doctest::Approx(expect / 4));

  auto f = [&]() { return sum_all(gelu(scale(mean_axis(x, 1), 3.0))); };
  std::vector<Tensor<double>> params{x};
  CHECK(finite_diff_check<double>(f, params, 1e-6) <= 1e-6);
}
