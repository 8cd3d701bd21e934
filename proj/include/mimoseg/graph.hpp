#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "mimoseg/tensor.hpp"

namespace mimoseg {

enum class OpKind {
  Leaf,
  Conv2d,
  Relu,
  UpsampleNearest2x,
  UpsampleBilinear2x,
  SoftmaxChannels,
  Log,
  Add,
  Sub,
  Mul,
  Scale,
  MeanAll,
  WeightedMean,
  StopGradient,
};

struct OpInfo {
  OpKind kind;
  std::string_view name;
  bool differentiable;
};

// The primitive set the graph provides. Hard channel argmax is forward-only
// and lives in tensor.hpp (argmax_channels).
std::span<const OpInfo> op_set();
std::string_view op_name(OpKind k);

struct Value {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Define-by-run reverse-mode tape. Nodes are appended in execution order,
// which is a topological order by construction; backward() walks the tape
// once in reverse. A graph lives for one forward/backward cycle.
template <typename T>
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Value leaf(Tensor<T> v, bool requires_grad);
  Value leaf(const Tensor<T>& v) { return leaf(v, v.requires_grad); }

  // x: N,Cin,H,W; w: Cout,Cin,K,K; b: Cout
  Value conv2d(Value x, Value w, Value b, int stride, int pad);
  Value relu(Value x);
  Value upsample_nearest2x(Value x);
  Value upsample_bilinear2x(Value x);
  Value softmax_channels(Value x);
  // log with a 1e-12 floor so exact zeros stay finite in 32-bit mode
  Value log(Value x);
  Value add(Value a, Value b);
  Value sub(Value a, Value b);
  Value mul(Value a, Value b);
  Value scale(Value a, T factor);
  Value mean_all(Value x);
  // sum(v*w)/sum(w), 0 when sum(w)==0. Weights are constants: no gradient
  // ever flows into them.
  Value weighted_mean(Value v, Tensor<T> weights);
  Value stop_gradient(Value x);

  const Tensor<T>& value(Value v) const;
  // Gradient of the last backward() target w.r.t. v. Zeros if no path.
  Tensor<T> grad(Value v) const;

  // Reverse sweep from a scalar loss. Rejects non-scalar targets.
  void backward(Value loss);

  std::size_t size() const { return nodes_.size(); }
  OpKind kind_of(Value v) const { return nodes_[check(v)].kind; }
  bool requires_grad(Value v) const { return nodes_[check(v)].requires_grad; }

  // multiply-accumulate count of all conv2d forwards recorded on this tape
  std::int64_t conv_macs() const { return conv_macs_; }

 private:
  struct Node {
    OpKind kind = OpKind::Leaf;
    int in0 = -1, in1 = -1, in2 = -1;
    Tensor<T> out;
    bool requires_grad = false;
    int stride = 1, pad = 0;  // conv
    T scalar{};               // scale
    Tensor<T> aux;            // weighted_mean weights
    T aux_scalar{};           // weighted_mean: cached 1/sum(w), 0 when degenerate
  };

  std::size_t check(Value v) const;
  int push(Node n);

  std::vector<Node> nodes_;
  std::vector<Tensor<T>> grads_;  // parallel to nodes_ after backward
  std::int64_t conv_macs_ = 0;
};

// Central finite differences over every element of every listed parameter
// tensor, against the analytic gradients already stored alongside them.
// loss_fn must re-evaluate the objective from the parameters' current
// values. 64-bit only: 32-bit arithmetic makes the comparison meaningless.
// Returns max over elements of |analytic-numeric| / max(|analytic|,|numeric|,1e-12).
double finite_diff_check(const std::function<double()>& loss_fn,
                         std::span<Tensor<double>* const> params,
                         std::span<const Tensor<double>* const> analytic_grads,
                         double eps);

extern template class Graph<float>;
extern template class Graph<double>;

}  // namespace mimoseg
