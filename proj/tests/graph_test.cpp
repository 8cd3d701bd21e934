#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "mimoseg/graph.hpp"
#include "mimoseg/rng.hpp"

using namespace mimoseg;

namespace {

Tensor<double> random_tensor(std::vector<int> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(std::move(shape));
  for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

// Reference convolution written independently of the graph implementation:
// plain six-loop definition, no bounds precomputation.
Tensor<double> conv_oracle(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>& b,
                           int stride, int pad) {
  const int N = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int Cout = w.dim(0), K = w.dim(2);
  const int Hout = (H + 2 * pad - K) / stride + 1;
  const int Wout = (W + 2 * pad - K) / stride + 1;
  Tensor<double> out({N, Cout, Hout, Wout});
  for (int n = 0; n < N; ++n)
    for (int co = 0; co < Cout; ++co)
      for (int oh = 0; oh < Hout; ++oh)
        for (int ow = 0; ow < Wout; ++ow) {
          double acc = b[co];
          for (int ci = 0; ci < Cin; ++ci)
            for (int kh = 0; kh < K; ++kh)
              for (int kw = 0; kw < K; ++kw) {
                const int ih = oh * stride + kh - pad;
                const int iw = ow * stride + kw - pad;
                if (ih >= 0 && ih < H && iw >= 0 && iw < W) acc += w.at4(co, ci, kh, kw) * x.at4(n, ci, ih, iw);
              }
          out.at4(n, co, oh, ow) = acc;
        }
  return out;
}

// Finite-difference sweep for a single-input primitive: loss = weighted
// random projection of op(x), gradient of loss w.r.t. x checked elementwise.
double fd_check_unary(const std::function<Value(Graph<double>&, Value)>& op, Tensor<double> x,
                      Rng& rng) {
  Tensor<double> proj;
  {
    Graph<double> g;
    Value xv = g.leaf(x, true);
    Value ov = op(g, xv);
    proj = random_tensor(g.value(ov).shape, rng);
  }
  auto eval = [&]() {
    Graph<double> g;
    Value xv = g.leaf(x, true);
    Value ov = op(g, xv);
    const Tensor<double>& o = g.value(ov);
    double s = 0.0;
    for (std::int64_t i = 0; i < o.numel(); ++i) s += o[i] * proj[i];
    return s;
  };
  Tensor<double> analytic;
  {
    Graph<double> g;
    Value xv = g.leaf(x, true);
    Value ov = op(g, xv);
    Value lv = g.weighted_mean(g.mul(ov, g.leaf(proj, false)), Tensor<double>::full(proj.shape, 1.0));
    g.backward(lv);
    analytic = g.grad(xv);
    const double scale = static_cast<double>(proj.numel());
    for (std::int64_t i = 0; i < analytic.numel(); ++i) analytic[i] *= scale;
  }
  Tensor<double>* params[] = {&x};
  const Tensor<double>* grads[] = {&analytic};
  return finite_diff_check(eval, params, grads, 1e-5);
}

}  // namespace

TEST_CASE("op registry lists every primitive once") {
  auto ops = op_set();
  REQUIRE(ops.size() == 14);
  int diff = 0;
  for (const auto& o : ops) {
    CHECK(op_name(o.kind) == o.name);
    if (o.differentiable) ++diff;
  }
  CHECK(diff == 13);  // stop_gradient is the only non-differentiable node
}

TEST_CASE("conv of all-ones 3x3 image with all-ones 3x3 kernel, padding 1") {
  Graph<double> g;
  Value x = g.leaf(Tensor<double>::full({1, 1, 3, 3}, 1.0), false);
  Value w = g.leaf(Tensor<double>::full({1, 1, 3, 3}, 1.0), false);
  Value b = g.leaf(Tensor<double>::zeros({1}), false);
  Value y = g.conv2d(x, w, b, 1, 1);
  const auto& out = g.value(y);
  REQUIRE(out.shape == std::vector<int>({1, 1, 3, 3}));
  CHECK(out.at4(0, 0, 1, 1) == 9.0);  // center sees the full kernel
  CHECK(out.at4(0, 0, 0, 0) == 4.0);  // corner sees a 2x2 window
  CHECK(out.at4(0, 0, 0, 1) == 6.0);  // edge sees a 2x3 window
}

TEST_CASE("conv matches the six-loop oracle over random shapes") {
  Rng rng(101);
  for (int trial = 0; trial < 20; ++trial) {
    const int N = 1 + static_cast<int>(rng.uniform_int(2));
    const int Cin = 1 + static_cast<int>(rng.uniform_int(3));
    const int Cout = 1 + static_cast<int>(rng.uniform_int(3));
    const int K = rng.bernoulli(0.5) ? 3 : 1;
    const int stride = 1 + static_cast<int>(rng.uniform_int(2));
    const int pad = K == 3 ? static_cast<int>(rng.uniform_int(2)) : 0;
    const int H = K + stride * (2 + static_cast<int>(rng.uniform_int(4)));
    const int W = K + stride * (2 + static_cast<int>(rng.uniform_int(4)));
    Tensor<double> x = random_tensor({N, Cin, H, W}, rng);
    Tensor<double> w = random_tensor({Cout, Cin, K, K}, rng);
    Tensor<double> b = random_tensor({Cout}, rng);
    Graph<double> g;
    Value y = g.conv2d(g.leaf(x, false), g.leaf(w, false), g.leaf(b, false), stride, pad);
    Tensor<double> ref = conv_oracle(x, w, b, stride, pad);
    REQUIRE(g.value(y).same_shape(ref));
    for (std::int64_t i = 0; i < ref.numel(); ++i) REQUIRE(g.value(y)[i] == doctest::Approx(ref[i]).epsilon(1e-12));
  }
}

TEST_CASE("conv rejects mismatched shapes with both shapes reported") {
  Graph<double> g;
  Value x = g.leaf(Tensor<double>::zeros({1, 2, 4, 4}), false);
  Value w = g.leaf(Tensor<double>::zeros({1, 3, 3, 3}), false);
  Value b = g.leaf(Tensor<double>::zeros({1}), false);
  try {
    (void)g.conv2d(x, w, b, 1, 1);
    FAIL("expected throw");
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[1,2,4,4]") != std::string::npos);
    CHECK(msg.find("[1,3,3,3]") != std::string::npos);
  }
}

TEST_CASE("relu of [-1, 0, 2] is [0, 0, 2]") {
  Graph<double> g;
  Value x = g.leaf(Tensor<double>({3}, {-1.0, 0.0, 2.0}), false);
  const auto& out = g.value(g.relu(x));
  CHECK(out[0] == 0.0);
  CHECK(out[1] == 0.0);
  CHECK(out[2] == 2.0);
}

TEST_CASE("softmax of [0, 0] is [0.5, 0.5]") {
  Graph<double> g;
  Value x = g.leaf(Tensor<double>({1, 2, 1, 1}, {0.0, 0.0}), false);
  const auto& out = g.value(g.softmax_channels(x));
  CHECK(out[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(out[1] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("softmax outputs are non-negative and sum to 1 per pixel within 1e-9") {
  Rng rng(7);
  Tensor<double> x = random_tensor({2, 5, 4, 4}, rng, -30.0, 30.0);
  Graph<double> g;
  const auto& p = g.value(g.softmax_channels(g.leaf(x, false)));
  for (int n = 0; n < 2; ++n)
    for (int h = 0; h < 4; ++h)
      for (int w = 0; w < 4; ++w) {
        double s = 0.0;
        for (int c = 0; c < 5; ++c) {
          REQUIRE(p.at4(n, c, h, w) >= 0.0);
          s += p.at4(n, c, h, w);
        }
        REQUIRE(std::abs(s - 1.0) < 1e-9);
      }
}

TEST_CASE("upsampling doubles extents with the expected kernels") {
  Graph<double> g;
  Value x = g.leaf(Tensor<double>({1, 1, 2, 2}, {1.0, 2.0, 3.0, 4.0}), false);
  SUBCASE("nearest replicates each source pixel into a 2x2 block") {
    const auto& o = g.value(g.upsample_nearest2x(x));
    REQUIRE(o.shape == std::vector<int>({1, 1, 4, 4}));
    CHECK(o.at4(0, 0, 0, 0) == 1.0);
    CHECK(o.at4(0, 0, 0, 1) == 1.0);
    CHECK(o.at4(0, 0, 1, 1) == 1.0);
    CHECK(o.at4(0, 0, 0, 2) == 2.0);
    CHECK(o.at4(0, 0, 3, 3) == 4.0);
  }
  SUBCASE("bilinear interpolates with half-pixel centers and preserves corners") {
    const auto& o = g.value(g.upsample_bilinear2x(x));
    REQUIRE(o.shape == std::vector<int>({1, 1, 4, 4}));
    CHECK(o.at4(0, 0, 0, 0) == doctest::Approx(1.0));
    CHECK(o.at4(0, 0, 3, 3) == doctest::Approx(4.0));
    // interior sample at (1,1): src (0.25, 0.25) -> 0.75^2*1 + 0.75*0.25*(2+3) + 0.25^2*4
    CHECK(o.at4(0, 0, 1, 1) == doctest::Approx(0.5625 * 1 + 0.1875 * 2 + 0.1875 * 3 + 0.0625 * 4));
  }
}

TEST_CASE("elementwise ops and reductions compute their definitions") {
  Graph<double> g;
  Value a = g.leaf(Tensor<double>({3}, {1.0, 2.0, 3.0}), false);
  Value b = g.leaf(Tensor<double>({3}, {4.0, 5.0, 6.0}), false);
  CHECK(g.value(g.add(a, b))[1] == 7.0);
  CHECK(g.value(g.sub(a, b))[2] == -3.0);
  CHECK(g.value(g.mul(a, b))[0] == 4.0);
  CHECK(g.value(g.scale(a, 2.5))[1] == 5.0);
  CHECK(g.value(g.mean_all(b))[0] == 5.0);
  CHECK(g.value(g.log(a))[0] == doctest::Approx(0.0));
  CHECK(g.value(g.log(a))[2] == doctest::Approx(std::log(3.0)));
  CHECK_THROWS_AS(g.add(a, g.leaf(Tensor<double>::zeros({4}), false)), std::invalid_argument);
}

TEST_CASE("log of zero stays finite via the floor") {
  Graph<double> g;
  Value x = g.leaf(Tensor<double>({1}, {0.0}), false);
  const double v = g.value(g.log(x))[0];
  CHECK(std::isfinite(v));
  CHECK(v == doctest::Approx(std::log(1e-12)));
}

TEST_CASE("weighted_mean is sum(v*w)/sum(w), zero when all weights vanish") {
  Graph<double> g;
  Value v = g.leaf(Tensor<double>({4}, {1.0, 2.0, 3.0, 4.0}), false);
  Value m1 = g.weighted_mean(v, Tensor<double>({4}, {1.0, 0.0, 0.0, 1.0}));
  CHECK(g.value(m1)[0] == doctest::Approx(2.5));
  Value m2 = g.weighted_mean(v, Tensor<double>({4}, {0.5, 0.5, 0.5, 0.5}));
  CHECK(g.value(m2)[0] == doctest::Approx(2.5));
  Value m3 = g.weighted_mean(v, Tensor<double>::zeros({4}));
  CHECK(g.value(m3)[0] == 0.0);
}

TEST_CASE("f(x) = x*x at x=3 has gradient 6") {
  Graph<double> g;
  Value x = g.leaf(Tensor<double>({1}, {3.0}), true);
  Value y = g.mean_all(g.mul(x, x));
  g.backward(y);
  CHECK(g.grad(x)[0] == doctest::Approx(6.0));
}

TEST_CASE("backward rejects a non-scalar loss") {
  Graph<double> g;
  Value x = g.leaf(Tensor<double>({2}, {1.0, 2.0}), true);
  Value y = g.mul(x, x);
  CHECK_THROWS_AS(g.backward(y), std::invalid_argument);
}

TEST_CASE("stop-gradient treats its argument as a constant") {
  // loss = mean(stop_gradient(y) * y): gradient w.r.t. y is stop_gradient(y)/n,
  // not 2y/n.
  Graph<double> g;
  Value y = g.leaf(Tensor<double>({2}, {3.0, -4.0}), true);
  Value loss = g.mean_all(g.mul(g.stop_gradient(y), y));
  g.backward(loss);
  const auto gy = g.grad(y);
  CHECK(gy[0] == doctest::Approx(1.5));
  CHECK(gy[1] == doctest::Approx(-2.0));
}

TEST_CASE("parameters reachable only through stop-gradient get exactly zero") {
  Graph<double> g;
  Value w = g.leaf(Tensor<double>({1, 1, 1, 1}, {2.0}), true);
  Value x = g.leaf(Tensor<double>::full({1, 1, 2, 2}, 1.0), false);
  Value b = g.leaf(Tensor<double>::zeros({1}), false);
  Value y = g.conv2d(x, w, b, 1, 0);
  Value blocked = g.stop_gradient(y);
  Value loss = g.mean_all(blocked);
  g.backward(loss);
  const auto gw = g.grad(w);
  CHECK(gw[0] == 0.0);
  CHECK_FALSE(g.requires_grad(blocked));
}

TEST_CASE("finite_diff_check validates its epsilon range") {
  Tensor<double> p({1}, {1.0});
  Tensor<double> a({1}, {1.0});
  Tensor<double>* params[] = {&p};
  const Tensor<double>* grads[] = {&a};
  auto f = [&]() { return p[0]; };
  CHECK_THROWS_AS(finite_diff_check(f, params, grads, 1e-7), std::invalid_argument);
  CHECK_THROWS_AS(finite_diff_check(f, params, grads, 1e-2), std::invalid_argument);
}

TEST_CASE("finite differences are exact for a linear map") {
  Tensor<double> x({3}, {1.0, -2.0, 0.5});
  auto eval = [&]() {
    Graph<double> g;
    Value xv = g.leaf(x, true);
    return g.value(g.mean_all(g.scale(xv, 3.0)))[0];
  };
  Tensor<double> analytic = Tensor<double>::full({3}, 1.0);
  {
    Graph<double> g;
    Value xv = g.leaf(x, true);
    Value l = g.mean_all(g.scale(xv, 3.0));
    g.backward(l);
    analytic = g.grad(xv);
  }
  Tensor<double>* params[] = {&x};
  const Tensor<double>* grads[] = {&analytic};
  CHECK(finite_diff_check(eval, params, grads, 1e-4) < 1e-9);
}

TEST_CASE("per-primitive gradients match finite differences at non-degenerate points") {
  Rng rng(2024);
  // relu probed away from the kink: |x| > 10*eps
  {
    Tensor<double> x({2, 3, 4, 4});
    for (std::int64_t i = 0; i < x.numel(); ++i) {
      double v = rng.uniform(0.01, 1.0);
      x[i] = rng.bernoulli(0.5) ? v : -v;
    }
    CHECK(fd_check_unary([](Graph<double>& g, Value v) { return g.relu(v); }, x, rng) < 1e-6);
  }
  Tensor<double> x = random_tensor({2, 3, 4, 4}, rng);
  CHECK(fd_check_unary([](Graph<double>& g, Value v) { return g.softmax_channels(v); }, x, rng) < 1e-5);
  CHECK(fd_check_unary([](Graph<double>& g, Value v) { return g.upsample_nearest2x(v); }, x, rng) < 1e-5);
  CHECK(fd_check_unary([](Graph<double>& g, Value v) { return g.upsample_bilinear2x(v); }, x, rng) < 1e-5);
  CHECK(fd_check_unary([](Graph<double>& g, Value v) { return g.scale(v, -1.7); }, x, rng) < 1e-5);
  CHECK(fd_check_unary([](Graph<double>& g, Value v) { return g.mul(v, g.relu(v)); },
                       random_tensor({2, 3, 4, 4}, rng, 0.05, 1.0), rng) < 1e-5);
  Tensor<double> pos = random_tensor({2, 3, 4, 4}, rng, 0.1, 2.0);
  CHECK(fd_check_unary([](Graph<double>& g, Value v) { return g.log(v); }, pos, rng) < 1e-5);
  Tensor<double> wts = random_tensor({2, 3, 4, 4}, rng, 0.0, 1.0);
  CHECK(fd_check_unary([&](Graph<double>& g, Value v) { return g.weighted_mean(v, wts); }, x, rng) < 1e-5);
}

TEST_CASE("conv gradients (input, kernel, bias) match finite differences") {
  Rng rng(31);
  Tensor<double> x = random_tensor({2, 2, 6, 6}, rng);
  Tensor<double> w = random_tensor({3, 2, 3, 3}, rng);
  Tensor<double> b = random_tensor({3}, rng);
  for (auto [stride, pad] : {std::pair{1, 1}, std::pair{2, 1}, std::pair{1, 0}}) {
    auto build = [&](Graph<double>& g, Value& xv, Value& wv, Value& bv) {
      xv = g.leaf(x, true);
      wv = g.leaf(w, true);
      bv = g.leaf(b, true);
      return g.mean_all(g.relu(g.conv2d(xv, wv, bv, stride, pad)));
    };
    auto eval = [&]() {
      Graph<double> g;
      Value xv, wv, bv;
      return g.value(build(g, xv, wv, bv))[0];
    };
    Graph<double> g;
    Value xv, wv, bv;
    Value loss = build(g, xv, wv, bv);
    g.backward(loss);
    Tensor<double> gx = g.grad(xv), gw = g.grad(wv), gb = g.grad(bv);
    Tensor<double>* params[] = {&x, &w, &b};
    const Tensor<double>* grads[] = {&gx, &gw, &gb};
    CHECK(finite_diff_check(eval, params, grads, 1e-5) < 1e-5);
  }
}

TEST_CASE("three-layer conv net with softmax cross-entropy head passes the gradient check") {
  Rng rng(55);
  const int C = 3;
  Tensor<double> x = random_tensor({1, 2, 8, 8}, rng);
  Tensor<double> w1 = random_tensor({4, 2, 3, 3}, rng, -0.5, 0.5);
  Tensor<double> b1 = random_tensor({4}, rng, -0.1, 0.1);
  Tensor<double> w2 = random_tensor({4, 4, 3, 3}, rng, -0.5, 0.5);
  Tensor<double> b2 = random_tensor({4}, rng, -0.1, 0.1);
  Tensor<double> w3 = random_tensor({C, 4, 1, 1}, rng, -0.5, 0.5);
  Tensor<double> b3 = random_tensor({C}, rng, -0.1, 0.1);
  // one-hot targets as weights on -log p: a full softmax-CE
  Tensor<double> onehot({1, C, 8, 8});
  for (int h = 0; h < 8; ++h)
    for (int w = 0; w < 8; ++w) onehot.at4(0, static_cast<int>(rng.uniform_int(C)), h, w) = 1.0;

  std::vector<Tensor<double>*> params = {&w1, &b1, &w2, &b2, &w3, &b3};
  auto build = [&](Graph<double>& g, std::vector<Value>& pv) {
    pv.clear();
    for (auto* p : params) pv.push_back(g.leaf(*p, true));
    Value h1 = g.relu(g.conv2d(g.leaf(x, false), pv[0], pv[1], 1, 1));
    Value h2 = g.relu(g.conv2d(h1, pv[2], pv[3], 1, 1));
    Value logits = g.conv2d(h2, pv[4], pv[5], 1, 0);
    Value nll = g.scale(g.log(g.softmax_channels(logits)), -1.0);
    return g.weighted_mean(nll, onehot);
  };
  auto eval = [&]() {
    Graph<double> g;
    std::vector<Value> pv;
    return g.value(build(g, pv))[0];
  };
  Graph<double> g;
  std::vector<Value> pv;
  Value loss = build(g, pv);
  g.backward(loss);
  std::vector<Tensor<double>> gstore;
  for (Value v : pv) gstore.push_back(g.grad(v));
  std::vector<const Tensor<double>*> grads;
  for (const auto& t : gstore) grads.push_back(&t);
  CHECK(finite_diff_check(eval, params, grads, 1e-5) < 1e-5);
}

TEST_CASE("forward evaluation is deterministic and macs accumulate per conv") {
  Rng rng(77);
  Tensor<double> x = random_tensor({1, 3, 8, 8}, rng);
  Tensor<double> w = random_tensor({5, 3, 3, 3}, rng);
  Tensor<double> b = random_tensor({5}, rng);
  Tensor<double> first;
  for (int i = 0; i < 2; ++i) {
    Graph<double> g;
    Value y = g.relu(g.conv2d(g.leaf(x, false), g.leaf(w, false), g.leaf(b, false), 2, 1));
    // Hout = Wout = (8+2-3)/2+1 = 4
    CHECK(g.conv_macs() == 1LL * 5 * 3 * 3 * 3 * 4 * 4);
    if (i == 0)
      first = g.value(y);
    else
      for (std::int64_t k = 0; k < first.numel(); ++k) REQUIRE(g.value(y)[k] == first[k]);
  }
}
