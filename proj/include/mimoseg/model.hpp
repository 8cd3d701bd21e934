#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mimoseg/graph.hpp"
#include "mimoseg/params.hpp"
#include "mimoseg/rng.hpp"
#include "mimoseg/tensor.hpp"

namespace mimoseg {

// Encoder: one 3x3 conv+ReLU stage per width; the first len(decoder_widths)
// stages use stride 2, the rest stride 1. Decoder: one 3x3 conv+ReLU+2x
// upsample stage per width, returning to input resolution. Heads: 1x1 conv
// to num_classes at full resolution.
struct MimoConfig {
  int in_channels = 3;
  int num_classes = 4;
  std::vector<int> encoder_widths = {16, 32, 64};
  std::vector<int> decoder_widths = {32, 16};
  int grid_size = 1;
  bool gridmix_fusion = true;  // false: elementwise summing fusion
  bool bilinear_upsample = false;
  int height = 64;
  int width = 64;

  int stride2_stages() const { return static_cast<int>(decoder_widths.size()); }
  int total_stride() const { return 1 << stride2_stages(); }
  // throws listing every violated constraint
  void validate() const;
};

// Binary spatial field, constant on g x g cells. Cells at the right/bottom
// border may be truncated but share their cell's single draw.
struct GridMask {
  int g = 1;
  Tensor<std::int32_t> cells;  // shape {H, W}, values in {0, 1}
};

// Each cell is an independent Bernoulli(0.5) draw.
GridMask sample_grid_mask(int height, int width, int g, Rng& rng);

// out = mask ? f1 : f2, pure per-pixel selection (never interpolation).
// f1, f2 are N,C,H,W; the mask is broadcast over batch and channels.
template <typename T>
Tensor<T> gridmix(const Tensor<T>& f1, const Tensor<T>& f2, const GridMask& m);

template <typename T>
Tensor<T> summing_fusion(const Tensor<T>& f1, const Tensor<T>& f2);

// Differentiable form of the same selection: f1*m + f2*(1-m).
template <typename T>
Value gridmix_node(Graph<T>& g, Value f1, Value f2, const GridMask& m);

// Two-input two-output segmentation net: one shared encoder applied to both
// inputs, fused features, one shared decoder trunk, two independent 1x1
// heads. Subnetwork k = (encoder, decoder, head k).
template <typename T>
class MimoSegNet {
 public:
  MimoSegNet(MimoConfig cfg, Rng init_rng);

  // Parameter leaves bound into one graph; indices parallel store().items.
  struct Bound {
    std::vector<Value> values;
  };
  Bound bind(Graph<T>& g, bool with_grad) const;

  struct ForwardResult {
    Value logits1, logits2;  // N,C,H,W at input resolution
    GridMask mask;
  };
  // Encodes both inputs with the shared encoder, fuses with a freshly
  // sampled grid mask (or summing, per config), decodes once, applies both
  // heads. Head k predicts input k's content.
  ForwardResult forward(Graph<T>& g, const Bound& bp, const Tensor<T>& x1, const Tensor<T>& x2,
                        Rng& rng);

  // forward(x, x) without gradients; returns the mean of the two softmax
  // maps. With identical inputs the fusion mask is irrelevant (both branch
  // features coincide), so this is mask-independent and deterministic.
  Tensor<T> forward_inference(const Tensor<T>& x);

  ParamStore<T>& store() { return store_; }
  const ParamStore<T>& store() const { return store_; }
  const MimoConfig& config() const { return cfg_; }

  // instrumentation
  std::int64_t encoder_invocations() const { return encoder_invocations_; }
  std::int64_t head_invocations() const { return head_invocations_; }
  std::int64_t forward_count() const { return forward_count_; }
  void reset_counters() {
    encoder_invocations_ = 0;
    head_invocations_ = 0;
    forward_count_ = 0;
  }

 private:
  Value encode(Graph<T>& g, const Bound& bp, Value x);
  Value decode(Graph<T>& g, const Bound& bp, Value fused);
  Value head(Graph<T>& g, const Bound& bp, int which, Value trunk);

  MimoConfig cfg_;
  ParamStore<T> store_;
  // param index ranges, in store order
  int enc_begin_ = 0, enc_end_ = 0;
  int dec_begin_ = 0, dec_end_ = 0;
  int head1_begin_ = 0, head1_end_ = 0;
  int head2_begin_ = 0, head2_end_ = 0;
  std::int64_t encoder_invocations_ = 0;
  std::int64_t head_invocations_ = 0;
  std::int64_t forward_count_ = 0;
};

// Single-branch counterpart (encoder, decoder, one head) with the same
// layer recipe; the baseline and two-model reference pipelines use it.
template <typename T>
class SingleSegNet {
 public:
  SingleSegNet(MimoConfig cfg, Rng init_rng);

  struct Bound {
    std::vector<Value> values;
  };
  Bound bind(Graph<T>& g, bool with_grad) const;
  Value forward(Graph<T>& g, const Bound& bp, const Tensor<T>& x);  // logits N,C,H,W

  ParamStore<T>& store() { return store_; }
  const ParamStore<T>& store() const { return store_; }
  const MimoConfig& config() const { return cfg_; }
  std::int64_t forward_count() const { return forward_count_; }
  void reset_counters() { forward_count_ = 0; }

 private:
  MimoConfig cfg_;
  ParamStore<T> store_;
  std::int64_t forward_count_ = 0;
};

// He-style init: kernel entries normal(0, sqrt(2/fan_in)), biases zero.
template <typename T>
Tensor<T> init_conv_kernel(int cout, int cin, int k, Rng& rng);

extern template class MimoSegNet<float>;
extern template class MimoSegNet<double>;
extern template class SingleSegNet<float>;
extern template class SingleSegNet<double>;
extern template Tensor<float> gridmix(const Tensor<float>&, const Tensor<float>&, const GridMask&);
extern template Tensor<double> gridmix(const Tensor<double>&, const Tensor<double>&, const GridMask&);

}  // namespace mimoseg
