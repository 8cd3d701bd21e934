#include <cmath>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "mimoseg/rng.hpp"
#include "mimoseg/tensor.hpp"
#include "mimoseg/uncertainty.hpp"

using namespace mimoseg;

namespace {

// independent per-pixel summation oracle at 64-bit
double entropy_oracle(const std::vector<double>& p) {
  double u = 0.0;
  for (double v : p)
    if (v > 0.0) u -= v * std::log(v);
  return u;
}

Tensor<double> one_pixel(const std::vector<double>& p) {
  Tensor<double> t({1, static_cast<int>(p.size()), 1, 1});
  for (size_t c = 0; c < p.size(); ++c) t.data[c] = p[c];
  return t;
}

}  // namespace

TEST_CASE("entropy of a one-hot pixel is exactly zero") {
  Tensor<double> u = shannon_entropy(one_pixel({1.0, 0.0}));
  CHECK(u.data[0] == 0.0);
}

TEST_CASE("entropy of the two-class uniform pixel is ln 2") {
  Tensor<double> u = shannon_entropy(one_pixel({0.5, 0.5}));
  CHECK(u.data[0] == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("entropy of (0.7, 0.2, 0.1) matches the summation oracle") {
  Tensor<double> u = shannon_entropy(one_pixel({0.7, 0.2, 0.1}));
  CHECK(u.data[0] == doctest::Approx(entropy_oracle({0.7, 0.2, 0.1})).epsilon(1e-12));
}

TEST_CASE("entropy matches the oracle on many random distributions") {
  Rng rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    const int C = 2 + static_cast<int>(rng.uniform_int(5));
    std::vector<double> p(static_cast<size_t>(C));
    double sum = 0.0;
    for (auto& v : p) {
      v = rng.uniform(0.01, 1.0);
      sum += v;
    }
    for (auto& v : p) v /= sum;
    Tensor<double> u = shannon_entropy(one_pixel(p));
    CHECK(std::abs(u.data[0] - entropy_oracle(p)) < 1e-12);
  }
}

TEST_CASE("entropy is invariant under class permutation and maximal at uniform") {
  Rng rng(7);
  const double ln3 = std::log(3.0);
  for (int trial = 0; trial < 200; ++trial) {
    double a = rng.uniform(0.01, 1.0), b = rng.uniform(0.01, 1.0), c = rng.uniform(0.01, 1.0);
    const double s = a + b + c;
    a /= s;
    b /= s;
    c /= s;
    const double u = shannon_entropy(one_pixel({a, b, c})).data[0];
    CHECK(shannon_entropy(one_pixel({c, a, b})).data[0] == doctest::Approx(u).epsilon(1e-12));
    CHECK(u <= ln3 + 1e-12);
  }
  CHECK(shannon_entropy(one_pixel({1.0 / 3, 1.0 / 3, 1.0 / 3})).data[0] ==
        doctest::Approx(ln3).epsilon(1e-12));
}

TEST_CASE("non-normalized and negative distributions are rejected") {
  CHECK_THROWS_AS(shannon_entropy(one_pixel({0.5, 0.4})), std::invalid_argument);
  CHECK_THROWS_AS(shannon_entropy(one_pixel({0.6, 0.6})), std::invalid_argument);
  CHECK_THROWS_AS(shannon_entropy(one_pixel({1.2, -0.2})), std::invalid_argument);
  // a 1e-6 wobble around 1 is tolerated
  CHECK_NOTHROW(shannon_entropy(one_pixel({0.5, 0.5 + 5e-7})));
}

TEST_CASE("entropy rejects inputs that are not N,C,H,W") {
  Tensor<double> bad({2, 3});
  bad.fill(0.5);
  CHECK_THROWS_AS(shannon_entropy(bad), std::invalid_argument);
}

TEST_CASE("confidence maps one-hot to 1 and uniform to 0") {
  for (int C = 2; C <= 8; ++C) {
    std::vector<double> onehot(static_cast<size_t>(C), 0.0);
    onehot[0] = 1.0;
    std::vector<double> uniform(static_cast<size_t>(C), 1.0 / C);
    Tensor<double> u1 = shannon_entropy(one_pixel(onehot));
    Tensor<double> u2 = shannon_entropy(one_pixel(uniform));
    CHECK(confidence(u1, C).data[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(confidence(u2, C).data[0] == doctest::Approx(0.0).epsilon(1e-9));
  }
}

TEST_CASE("confidence of (0.85, 0.05, 0.05, 0.05) composes the two oracles") {
  const std::vector<double> p = {0.85, 0.05, 0.05, 0.05};
  Tensor<double> u = shannon_entropy(one_pixel(p));
  const double expected = 1.0 - entropy_oracle(p) / std::log(4.0);
  CHECK(confidence(u, 4).data[0] == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("confidence clamps to [0,1] and rejects fewer than two classes") {
  Tensor<double> u({1, 1, 1});
  u.data[0] = 10.0;  // far above ln C
  CHECK(confidence(u, 3).data[0] == 0.0);
  CHECK_THROWS_AS(confidence(u, 1), std::invalid_argument);
  CHECK_THROWS_AS(confidence(u, 0), std::invalid_argument);
}

TEST_CASE("weight mask follows the piecewise rule") {
  Tensor<double> conf({1, 1, 3});
  conf.data = {0.7, 0.25, 0.5};
  WeightMask<double> m = weight_mask(conf, 0.5);
  CHECK(m.w.data[0] == 1.0);   // 0.7 >= 0.5
  CHECK(m.w.data[1] == 0.5);   // 0.25 / 0.5
  CHECK(m.w.data[2] == 1.0);   // boundary belongs to the confident branch
  CHECK(m.gamma == 0.5);
}

TEST_CASE("weight mask rejects gamma outside (0,1]") {
  Tensor<double> conf({1, 1, 1});
  conf.data[0] = 0.5;
  CHECK_THROWS_AS(weight_mask(conf, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(weight_mask(conf, -0.1), std::invalid_argument);
  CHECK_THROWS_AS(weight_mask(conf, 1.5), std::invalid_argument);
  CHECK_NOTHROW(weight_mask(conf, 1.0));
}

TEST_CASE("weight mask is monotone in confidence and continuous at the threshold") {
  const double gamma = 0.5;
  double prev = -1.0;
  for (int i = 0; i <= 100; ++i) {
    Tensor<double> conf({1, 1, 1});
    conf.data[0] = i / 100.0;
    const double w = weight_mask(conf, gamma).w.data[0];
    CHECK(w >= prev);
    CHECK(w >= 0.0);
    CHECK(w <= 1.0);
    prev = w;
  }
  Tensor<double> just_below({1, 1, 1}), at({1, 1, 1});
  just_below.data[0] = gamma - 1e-9;
  at.data[0] = gamma;
  CHECK(weight_mask(at, gamma).w.data[0] == 1.0);
  CHECK(weight_mask(just_below, gamma).w.data[0] == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("raising gamma never raises a weight") {
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    Tensor<double> conf({1, 2, 2});
    for (auto& v : conf.data) v = rng.uniform01();
    const double g1 = rng.uniform(0.05, 0.95);
    const double g2 = rng.uniform(g1, 1.0);
    auto w1 = weight_mask(conf, g1).w;
    auto w2 = weight_mask(conf, g2).w;
    for (size_t i = 0; i < w1.data.size(); ++i) CHECK(w2.data[i] <= w1.data[i] + 1e-15);
  }
}

TEST_CASE("full confidence always gets weight 1") {
  Tensor<double> conf({1, 1, 1});
  conf.data[0] = 1.0;
  for (double g : {0.1, 0.5, 1.0}) CHECK(weight_mask(conf, g).w.data[0] == 1.0);
}
