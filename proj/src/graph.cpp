#include "mimoseg/graph.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace mimoseg {

namespace {

constexpr std::array<OpInfo, 14> kOps = {{
    {OpKind::Leaf, "leaf", true},
    {OpKind::Conv2d, "conv2d", true},
    {OpKind::Relu, "relu", true},
    {OpKind::UpsampleNearest2x, "upsample_nearest2x", true},
    {OpKind::UpsampleBilinear2x, "upsample_bilinear2x", true},
    {OpKind::SoftmaxChannels, "softmax_channels", true},
    {OpKind::Log, "log", true},
    {OpKind::Add, "add", true},
    {OpKind::Sub, "sub", true},
    {OpKind::Mul, "mul", true},
    {OpKind::Scale, "scale", true},
    {OpKind::MeanAll, "mean_all", true},
    {OpKind::WeightedMean, "weighted_mean", true},
    {OpKind::StopGradient, "stop_gradient", false},
}};

// log floor: keeps exact zeros finite (entropy and CE see zero probabilities
// in 32-bit mode)
constexpr double kLogFloor = 1e-12;

inline int ceil_div(int a, int b) { return a >= 0 ? (a + b - 1) / b : -((-a) / b); }
inline int floor_div(int a, int b) { return a >= 0 ? a / b : -((-a + b - 1) / b); }

}  // namespace

std::span<const OpInfo> op_set() { return {kOps.data(), kOps.size()}; }

std::string_view op_name(OpKind k) {
  for (const auto& o : kOps)
    if (o.kind == k) return o.name;
  return "?";
}

template <typename T>
std::size_t Graph<T>::check(Value v) const {
  if (v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size())
    throw std::invalid_argument("Graph: value does not belong to this graph");
  return static_cast<std::size_t>(v.id);
}

template <typename T>
int Graph<T>::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

template <typename T>
Value Graph<T>::leaf(Tensor<T> v, bool requires_grad) {
  Node n;
  n.kind = OpKind::Leaf;
  n.out = std::move(v);
  n.requires_grad = requires_grad;
  return Value{push(std::move(n))};
}

template <typename T>
Value Graph<T>::conv2d(Value xv, Value wv, Value bv, int stride, int pad) {
  const Tensor<T>& x = nodes_[check(xv)].out;
  const Tensor<T>& w = nodes_[check(wv)].out;
  const Tensor<T>& b = nodes_[check(bv)].out;
  if (x.ndim() != 4 || w.ndim() != 4)
    throw std::invalid_argument("conv2d: expected 4-d input and kernel, got " +
                                shape_str(x.shape) + " and " + shape_str(w.shape));
  if (w.dim(2) != w.dim(3)) throw std::invalid_argument("conv2d: kernel must be square, got " + shape_str(w.shape));
  if (x.dim(1) != w.dim(1))
    throw std::invalid_argument("conv2d: channel mismatch, input " + shape_str(x.shape) +
                                " vs kernel " + shape_str(w.shape));
  if (b.ndim() != 1 || b.dim(0) != w.dim(0))
    throw std::invalid_argument("conv2d: bias shape " + shape_str(b.shape) +
                                " does not match kernel " + shape_str(w.shape));
  if (stride < 1 || pad < 0) throw std::invalid_argument("conv2d: bad stride/pad");

  const int N = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int Cout = w.dim(0), K = w.dim(2);
  const int Hout = (H + 2 * pad - K) / stride + 1;
  const int Wout = (W + 2 * pad - K) / stride + 1;
  if (Hout < 1 || Wout < 1)
    throw std::invalid_argument("conv2d: kernel " + shape_str(w.shape) + " too large for input " + shape_str(x.shape));

  Node n;
  n.kind = OpKind::Conv2d;
  n.in0 = xv.id;
  n.in1 = wv.id;
  n.in2 = bv.id;
  n.stride = stride;
  n.pad = pad;
  n.requires_grad = nodes_[xv.id].requires_grad || nodes_[wv.id].requires_grad || nodes_[bv.id].requires_grad;
  n.out = Tensor<T>({N, Cout, Hout, Wout});

  Tensor<T>& out = n.out;
#ifdef _OPENMP
#pragma omp parallel for collapse(2) schedule(static) if (static_cast<std::int64_t>(N) * Cout > 1)
#endif
  for (int ni = 0; ni < N; ++ni)
    for (int co = 0; co < Cout; ++co) {
      T* oplane = &out.at4(ni, co, 0, 0);
      const T bias = b[co];
      for (std::int64_t i = 0; i < static_cast<std::int64_t>(Hout) * Wout; ++i) oplane[i] = bias;
      for (int ci = 0; ci < Cin; ++ci)
        for (int kh = 0; kh < K; ++kh) {
          const int oh_lo = std::max(0, ceil_div(pad - kh, stride));
          const int oh_hi = std::min(Hout - 1, floor_div(H - 1 + pad - kh, stride));
          for (int kw = 0; kw < K; ++kw) {
            const T wval = w.at4(co, ci, kh, kw);
            const int ow_lo = std::max(0, ceil_div(pad - kw, stride));
            const int ow_hi = std::min(Wout - 1, floor_div(W - 1 + pad - kw, stride));
            const int xoff = kw - pad;
            for (int oh = oh_lo; oh <= oh_hi; ++oh) {
              const int ih = oh * stride + kh - pad;
              const T* xrow = &x.at4(ni, ci, ih, 0);
              T* orow = oplane + static_cast<std::int64_t>(oh) * Wout;
              if (stride == 1) {
                const T* xs = xrow + xoff;
                for (int ow = ow_lo; ow <= ow_hi; ++ow) orow[ow] += wval * xs[ow];
              } else {
                for (int ow = ow_lo; ow <= ow_hi; ++ow) orow[ow] += wval * xrow[ow * stride + xoff];
              }
            }
          }
        }
    }

  conv_macs_ += static_cast<std::int64_t>(N) * Cout * Cin * K * K * Hout * Wout;
  return Value{push(std::move(n))};
}

template <typename T>
Value Graph<T>::relu(Value xv) {
  const Tensor<T>& x = nodes_[check(xv)].out;
  Node n;
  n.kind = OpKind::Relu;
  n.in0 = xv.id;
  n.requires_grad = nodes_[xv.id].requires_grad;
  n.out = Tensor<T>(x.shape);
  for (std::int64_t i = 0; i < x.numel(); ++i) n.out[i] = x[i] > T(0) ? x[i] : T(0);
  return Value{push(std::move(n))};
}

template <typename T>
Value Graph<T>::upsample_nearest2x(Value xv) {
  const Tensor<T>& x = nodes_[check(xv)].out;
  if (x.ndim() != 4) throw std::invalid_argument("upsample_nearest2x: expected N,C,H,W, got " + shape_str(x.shape));
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  Node n;
  n.kind = OpKind::UpsampleNearest2x;
  n.in0 = xv.id;
  n.requires_grad = nodes_[xv.id].requires_grad;
  n.out = Tensor<T>({N, C, 2 * H, 2 * W});
  for (int ni = 0; ni < N; ++ni)
    for (int c = 0; c < C; ++c)
      for (int h = 0; h < 2 * H; ++h) {
        const T* xrow = &x.at4(ni, c, h / 2, 0);
        T* orow = &n.out.at4(ni, c, h, 0);
        for (int w = 0; w < 2 * W; ++w) orow[w] = xrow[w / 2];
      }
  return Value{push(std::move(n))};
}

namespace {
// half-pixel-center source coordinate for 2x upsampling
inline void bilinear2x_coeffs(int o, int extent, int& i0, int& i1, double& frac) {
  const double src = 0.5 * o - 0.25;
  const double fl = std::floor(src);
  i0 = static_cast<int>(fl);
  frac = src - fl;
  i1 = std::min(i0 + 1, extent - 1);
  if (i0 < 0) i0 = 0;
}
}  // namespace

template <typename T>
Value Graph<T>::upsample_bilinear2x(Value xv) {
  const Tensor<T>& x = nodes_[check(xv)].out;
  if (x.ndim() != 4) throw std::invalid_argument("upsample_bilinear2x: expected N,C,H,W, got " + shape_str(x.shape));
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  Node n;
  n.kind = OpKind::UpsampleBilinear2x;
  n.in0 = xv.id;
  n.requires_grad = nodes_[xv.id].requires_grad;
  n.out = Tensor<T>({N, C, 2 * H, 2 * W});
  for (int ni = 0; ni < N; ++ni)
    for (int c = 0; c < C; ++c)
      for (int oh = 0; oh < 2 * H; ++oh) {
        int y0, y1;
        double fy;
        bilinear2x_coeffs(oh, H, y0, y1, fy);
        for (int ow = 0; ow < 2 * W; ++ow) {
          int x0, x1;
          double fx;
          bilinear2x_coeffs(ow, W, x0, x1, fx);
          const double v = (1 - fy) * ((1 - fx) * x.at4(ni, c, y0, x0) + fx * x.at4(ni, c, y0, x1)) +
                           fy * ((1 - fx) * x.at4(ni, c, y1, x0) + fx * x.at4(ni, c, y1, x1));
          n.out.at4(ni, c, oh, ow) = static_cast<T>(v);
        }
      }
  return Value{push(std::move(n))};
}

template <typename T>
Value Graph<T>::softmax_channels(Value xv) {
  const Tensor<T>& x = nodes_[check(xv)].out;
  if (x.ndim() != 4) throw std::invalid_argument("softmax_channels: expected N,C,H,W, got " + shape_str(x.shape));
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  Node n;
  n.kind = OpKind::SoftmaxChannels;
  n.in0 = xv.id;
  n.requires_grad = nodes_[xv.id].requires_grad;
  n.out = Tensor<T>(x.shape);
  const std::int64_t hw = static_cast<std::int64_t>(H) * W;
  for (int ni = 0; ni < N; ++ni) {
    const T* xp = &x.at4(ni, 0, 0, 0);
    T* op = &n.out.at4(ni, 0, 0, 0);
    for (std::int64_t i = 0; i < hw; ++i) {
      T m = xp[i];
      for (int c = 1; c < C; ++c) m = std::max(m, xp[c * hw + i]);
      T s = T(0);
      for (int c = 0; c < C; ++c) {
        const T e = std::exp(xp[c * hw + i] - m);
        op[c * hw + i] = e;
        s += e;
      }
      const T inv = T(1) / s;
      for (int c = 0; c < C; ++c) op[c * hw + i] *= inv;
    }
  }
  return Value{push(std::move(n))};
}

template <typename T>
Value Graph<T>::log(Value xv) {
  const Tensor<T>& x = nodes_[check(xv)].out;
  Node n;
  n.kind = OpKind::Log;
  n.in0 = xv.id;
  n.requires_grad = nodes_[xv.id].requires_grad;
  n.out = Tensor<T>(x.shape);
  const T floor = static_cast<T>(kLogFloor);
  for (std::int64_t i = 0; i < x.numel(); ++i) n.out[i] = std::log(std::max(x[i], floor));
  return Value{push(std::move(n))};
}

template <typename T>
Value Graph<T>::add(Value av, Value bv) {
  const Tensor<T>& a = nodes_[check(av)].out;
  const Tensor<T>& b = nodes_[check(bv)].out;
  require_same_shape(a, b, "add");
  Node n;
  n.kind = OpKind::Add;
  n.in0 = av.id;
  n.in1 = bv.id;
  n.requires_grad = nodes_[av.id].requires_grad || nodes_[bv.id].requires_grad;
  n.out = Tensor<T>(a.shape);
  for (std::int64_t i = 0; i < a.numel(); ++i) n.out[i] = a[i] + b[i];
  return Value{push(std::move(n))};
}

template <typename T>
Value Graph<T>::sub(Value av, Value bv) {
  const Tensor<T>& a = nodes_[check(av)].out;
  const Tensor<T>& b = nodes_[check(bv)].out;
  require_same_shape(a, b, "sub");
  Node n;
  n.kind = OpKind::Sub;
  n.in0 = av.id;
  n.in1 = bv.id;
  n.requires_grad = nodes_[av.id].requires_grad || nodes_[bv.id].requires_grad;
  n.out = Tensor<T>(a.shape);
  for (std::int64_t i = 0; i < a.numel(); ++i) n.out[i] = a[i] - b[i];
  return Value{push(std::move(n))};
}

template <typename T>
Value Graph<T>::mul(Value av, Value bv) {
  const Tensor<T>& a = nodes_[check(av)].out;
  const Tensor<T>& b = nodes_[check(bv)].out;
  require_same_shape(a, b, "mul");
  Node n;
  n.kind = OpKind::Mul;
  n.in0 = av.id;
  n.in1 = bv.id;
  n.requires_grad = nodes_[av.id].requires_grad || nodes_[bv.id].requires_grad;
  n.out = Tensor<T>(a.shape);
  for (std::int64_t i = 0; i < a.numel(); ++i) n.out[i] = a[i] * b[i];
  return Value{push(std::move(n))};
}

template <typename T>
Value Graph<T>::scale(Value av, T factor) {
  const Tensor<T>& a = nodes_[check(av)].out;
  Node n;
  n.kind = OpKind::Scale;
  n.in0 = av.id;
  n.scalar = factor;
  n.requires_grad = nodes_[av.id].requires_grad;
  n.out = Tensor<T>(a.shape);
  for (std::int64_t i = 0; i < a.numel(); ++i) n.out[i] = a[i] * factor;
  return Value{push(std::move(n))};
}

template <typename T>
Value Graph<T>::mean_all(Value xv) {
  const Tensor<T>& x = nodes_[check(xv)].out;
  Node n;
  n.kind = OpKind::MeanAll;
  n.in0 = xv.id;
  n.requires_grad = nodes_[xv.id].requires_grad;
  T s = T(0);
  for (std::int64_t i = 0; i < x.numel(); ++i) s += x[i];
  n.out = Tensor<T>({1});
  n.out[0] = s / static_cast<T>(x.numel());
  return Value{push(std::move(n))};
}

template <typename T>
Value Graph<T>::weighted_mean(Value xv, Tensor<T> weights) {
  const Tensor<T>& x = nodes_[check(xv)].out;
  require_same_shape(x, weights, "weighted_mean");
  Node n;
  n.kind = OpKind::WeightedMean;
  n.in0 = xv.id;
  n.requires_grad = nodes_[xv.id].requires_grad;
  T sw = T(0), sv = T(0);
  for (std::int64_t i = 0; i < x.numel(); ++i) {
    sw += weights[i];
    sv += x[i] * weights[i];
  }
  n.aux = std::move(weights);
  n.aux_scalar = sw == T(0) ? T(0) : T(1) / sw;
  n.out = Tensor<T>({1});
  n.out[0] = sw == T(0) ? T(0) : sv * n.aux_scalar;
  return Value{push(std::move(n))};
}

template <typename T>
Value Graph<T>::stop_gradient(Value xv) {
  const Tensor<T>& x = nodes_[check(xv)].out;
  Node n;
  n.kind = OpKind::StopGradient;
  n.in0 = xv.id;
  n.requires_grad = false;  // blocks every upstream path
  n.out = x;
  return Value{push(std::move(n))};
}

template <typename T>
const Tensor<T>& Graph<T>::value(Value v) const {
  return nodes_[check(v)].out;
}

template <typename T>
Tensor<T> Graph<T>::grad(Value v) const {
  const std::size_t id = check(v);
  if (id < grads_.size() && !grads_[id].data.empty()) return grads_[id];
  return Tensor<T>(nodes_[id].out.shape);
}

template <typename T>
void Graph<T>::backward(Value loss) {
  const std::size_t lid = check(loss);
  if (nodes_[lid].out.numel() != 1)
    throw std::invalid_argument("backward: loss must be scalar, got " + shape_str(nodes_[lid].out.shape));

  grads_.assign(nodes_.size(), Tensor<T>{});
  if (!nodes_[lid].requires_grad) return;
  grads_[lid] = Tensor<T>({1});
  grads_[lid][0] = T(1);

  auto accum = [&](int id) -> Tensor<T>& {
    if (grads_[static_cast<std::size_t>(id)].data.empty())
      grads_[static_cast<std::size_t>(id)] = Tensor<T>(nodes_[static_cast<std::size_t>(id)].out.shape);
    return grads_[static_cast<std::size_t>(id)];
  };
  auto wants = [&](int id) { return id >= 0 && nodes_[static_cast<std::size_t>(id)].requires_grad; };

  for (std::int64_t idl = static_cast<std::int64_t>(lid); idl >= 0; --idl) {
    const std::size_t id = static_cast<std::size_t>(idl);
    Node& n = nodes_[id];
    if (!n.requires_grad || grads_[id].data.empty()) continue;
    const Tensor<T>& g = grads_[id];

    switch (n.kind) {
      case OpKind::Leaf:
      case OpKind::StopGradient:
        break;
      case OpKind::Relu: {
        if (!wants(n.in0)) break;
        const Tensor<T>& x = nodes_[n.in0].out;
        Tensor<T>& gx = accum(n.in0);
        for (std::int64_t i = 0; i < x.numel(); ++i)
          if (x[i] > T(0)) gx[i] += g[i];
        break;
      }
      case OpKind::Conv2d: {
        const Tensor<T>& x = nodes_[n.in0].out;
        const Tensor<T>& w = nodes_[n.in1].out;
        const int N = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
        const int Cout = w.dim(0), K = w.dim(2);
        const int Hout = n.out.dim(2), Wout = n.out.dim(3);
        const int stride = n.stride, pad = n.pad;
        if (wants(n.in2)) {
          Tensor<T>& gb = accum(n.in2);
          for (int co = 0; co < Cout; ++co) {
            T s = T(0);
            for (int ni = 0; ni < N; ++ni) {
              const T* gp = &g.at4(ni, co, 0, 0);
              for (std::int64_t i = 0; i < static_cast<std::int64_t>(Hout) * Wout; ++i) s += gp[i];
            }
            gb[co] += s;
          }
        }
        if (wants(n.in1)) {
          Tensor<T>& gw = accum(n.in1);
#ifdef _OPENMP
#pragma omp parallel for collapse(2) schedule(static) if (static_cast<std::int64_t>(Cout) * Cin > 1)
#endif
          for (int co = 0; co < Cout; ++co)
            for (int ci = 0; ci < Cin; ++ci)
              for (int kh = 0; kh < K; ++kh) {
                const int oh_lo = std::max(0, ceil_div(pad - kh, stride));
                const int oh_hi = std::min(Hout - 1, floor_div(H - 1 + pad - kh, stride));
                for (int kw = 0; kw < K; ++kw) {
                  const int ow_lo = std::max(0, ceil_div(pad - kw, stride));
                  const int ow_hi = std::min(Wout - 1, floor_div(W - 1 + pad - kw, stride));
                  const int xoff = kw - pad;
                  T s = T(0);
                  for (int ni = 0; ni < N; ++ni)
                    for (int oh = oh_lo; oh <= oh_hi; ++oh) {
                      const int ih = oh * stride + kh - pad;
                      const T* grow = &g.at4(ni, co, oh, 0);
                      const T* xrow = &x.at4(ni, ci, ih, 0);
                      if (stride == 1) {
                        const T* xs = xrow + xoff;
                        for (int ow = ow_lo; ow <= ow_hi; ++ow) s += grow[ow] * xs[ow];
                      } else {
                        for (int ow = ow_lo; ow <= ow_hi; ++ow) s += grow[ow] * xrow[ow * stride + xoff];
                      }
                    }
                  gw.at4(co, ci, kh, kw) += s;
                }
              }
        }
        if (wants(n.in0)) {
          Tensor<T>& gx = accum(n.in0);
#ifdef _OPENMP
#pragma omp parallel for collapse(2) schedule(static) if (static_cast<std::int64_t>(N) * Cin > 1)
#endif
          for (int ni = 0; ni < N; ++ni)
            for (int ci = 0; ci < Cin; ++ci)
              for (int co = 0; co < Cout; ++co)
                for (int kh = 0; kh < K; ++kh) {
                  const int oh_lo = std::max(0, ceil_div(pad - kh, stride));
                  const int oh_hi = std::min(Hout - 1, floor_div(H - 1 + pad - kh, stride));
                  for (int kw = 0; kw < K; ++kw) {
                    const T wval = w.at4(co, ci, kh, kw);
                    const int ow_lo = std::max(0, ceil_div(pad - kw, stride));
                    const int ow_hi = std::min(Wout - 1, floor_div(W - 1 + pad - kw, stride));
                    const int xoff = kw - pad;
                    for (int oh = oh_lo; oh <= oh_hi; ++oh) {
                      const int ih = oh * stride + kh - pad;
                      const T* grow = &g.at4(ni, co, oh, 0);
                      T* xgrow = &gx.at4(ni, ci, ih, 0);
                      if (stride == 1) {
                        T* xs = xgrow + xoff;
                        for (int ow = ow_lo; ow <= ow_hi; ++ow) xs[ow] += wval * grow[ow];
                      } else {
                        for (int ow = ow_lo; ow <= ow_hi; ++ow) xgrow[ow * stride + xoff] += wval * grow[ow];
                      }
                    }
                  }
                }
        }
        break;
      }
      case OpKind::UpsampleNearest2x: {
        if (!wants(n.in0)) break;
        const Tensor<T>& x = nodes_[n.in0].out;
        Tensor<T>& gx = accum(n.in0);
        const int N = x.dim(0), C = x.dim(1), H2 = n.out.dim(2), W2 = n.out.dim(3);
        for (int ni = 0; ni < N; ++ni)
          for (int c = 0; c < C; ++c)
            for (int h = 0; h < H2; ++h) {
              const T* grow = &g.at4(ni, c, h, 0);
              T* xgrow = &gx.at4(ni, c, h / 2, 0);
              for (int w = 0; w < W2; ++w) xgrow[w / 2] += grow[w];
            }
        break;
      }
      case OpKind::UpsampleBilinear2x: {
        if (!wants(n.in0)) break;
        const Tensor<T>& x = nodes_[n.in0].out;
        Tensor<T>& gx = accum(n.in0);
        const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
        for (int ni = 0; ni < N; ++ni)
          for (int c = 0; c < C; ++c)
            for (int oh = 0; oh < 2 * H; ++oh) {
              int y0, y1;
              double fy;
              bilinear2x_coeffs(oh, H, y0, y1, fy);
              for (int ow = 0; ow < 2 * W; ++ow) {
                int x0, x1;
                double fx;
                bilinear2x_coeffs(ow, W, x0, x1, fx);
                const T gv = g.at4(ni, c, oh, ow);
                gx.at4(ni, c, y0, x0) += static_cast<T>((1 - fy) * (1 - fx)) * gv;
                gx.at4(ni, c, y0, x1) += static_cast<T>((1 - fy) * fx) * gv;
                gx.at4(ni, c, y1, x0) += static_cast<T>(fy * (1 - fx)) * gv;
                gx.at4(ni, c, y1, x1) += static_cast<T>(fy * fx) * gv;
              }
            }
        break;
      }
      case OpKind::SoftmaxChannels: {
        if (!wants(n.in0)) break;
        Tensor<T>& gx = accum(n.in0);
        const Tensor<T>& p = n.out;
        const int N = p.dim(0), C = p.dim(1);
        const std::int64_t hw = static_cast<std::int64_t>(p.dim(2)) * p.dim(3);
        for (int ni = 0; ni < N; ++ni) {
          const T* pp = &p.at4(ni, 0, 0, 0);
          const T* gp = &g.at4(ni, 0, 0, 0);
          T* xp = &gx.at4(ni, 0, 0, 0);
          for (std::int64_t i = 0; i < hw; ++i) {
            T dot = T(0);
            for (int c = 0; c < C; ++c) dot += gp[c * hw + i] * pp[c * hw + i];
            for (int c = 0; c < C; ++c) xp[c * hw + i] += pp[c * hw + i] * (gp[c * hw + i] - dot);
          }
        }
        break;
      }
      case OpKind::Log: {
        if (!wants(n.in0)) break;
        const Tensor<T>& x = nodes_[n.in0].out;
        Tensor<T>& gx = accum(n.in0);
        const T floor = static_cast<T>(kLogFloor);
        for (std::int64_t i = 0; i < x.numel(); ++i)
          if (x[i] >= floor) gx[i] += g[i] / x[i];
        break;
      }
      case OpKind::Add: {
        if (wants(n.in0)) {
          Tensor<T>& ga = accum(n.in0);
          for (std::int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
        }
        if (wants(n.in1)) {
          Tensor<T>& gb = accum(n.in1);
          for (std::int64_t i = 0; i < g.numel(); ++i) gb[i] += g[i];
        }
        break;
      }
      case OpKind::Sub: {
        if (wants(n.in0)) {
          Tensor<T>& ga = accum(n.in0);
          for (std::int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
        }
        if (wants(n.in1)) {
          Tensor<T>& gb = accum(n.in1);
          for (std::int64_t i = 0; i < g.numel(); ++i) gb[i] -= g[i];
        }
        break;
      }
      case OpKind::Mul: {
        const Tensor<T>& a = nodes_[n.in0].out;
        const Tensor<T>& b = nodes_[n.in1].out;
        if (wants(n.in0)) {
          Tensor<T>& ga = accum(n.in0);
          for (std::int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * b[i];
        }
        if (wants(n.in1)) {
          Tensor<T>& gb = accum(n.in1);
          for (std::int64_t i = 0; i < g.numel(); ++i) gb[i] += g[i] * a[i];
        }
        break;
      }
      case OpKind::Scale: {
        if (!wants(n.in0)) break;
        Tensor<T>& gx = accum(n.in0);
        for (std::int64_t i = 0; i < g.numel(); ++i) gx[i] += g[i] * n.scalar;
        break;
      }
      case OpKind::MeanAll: {
        if (!wants(n.in0)) break;
        Tensor<T>& gx = accum(n.in0);
        const T gv = g[0] / static_cast<T>(gx.numel());
        for (std::int64_t i = 0; i < gx.numel(); ++i) gx[i] += gv;
        break;
      }
      case OpKind::WeightedMean: {
        if (!wants(n.in0)) break;
        Tensor<T>& gx = accum(n.in0);
        const T g0 = g[0];
        if (n.aux_scalar != T(0))
          for (std::int64_t i = 0; i < gx.numel(); ++i) gx[i] += g0 * n.aux[i] * n.aux_scalar;
        break;
      }
    }
  }
}

double finite_diff_check(const std::function<double()>& loss_fn,
                         std::span<Tensor<double>* const> params,
                         std::span<const Tensor<double>* const> analytic_grads,
                         double eps) {
  if (!(eps >= 1e-6 && eps <= 1e-3))
    throw std::invalid_argument("finite_diff_check: eps must lie in [1e-6, 1e-3]");
  if (params.size() != analytic_grads.size())
    throw std::invalid_argument("finite_diff_check: params/grads count mismatch");
  double worst = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor<double>& p = *params[pi];
    const Tensor<double>& a = *analytic_grads[pi];
    if (!p.same_shape(a))
      throw std::invalid_argument("finite_diff_check: gradient shape mismatch at parameter " + std::to_string(pi));
    for (std::int64_t i = 0; i < p.numel(); ++i) {
      const double keep = p[i];
      p[i] = keep + eps;
      const double lp = loss_fn();
      p[i] = keep - eps;
      const double lm = loss_fn();
      p[i] = keep;
      const double numeric = (lp - lm) / (2.0 * eps);
      const double denom = std::max({std::abs(a[i]), std::abs(numeric), 1e-12});
      worst = std::max(worst, std::abs(a[i] - numeric) / denom);
    }
  }
  return worst;
}

template class Graph<float>;
template class Graph<double>;

}  // namespace mimoseg
