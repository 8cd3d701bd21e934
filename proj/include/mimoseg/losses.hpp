#pragma once

#include <cstdint>

#include "mimoseg/graph.hpp"
#include "mimoseg/model.hpp"
#include "mimoseg/transforms.hpp"
#include "mimoseg/tensor.hpp"

namespace mimoseg {

inline constexpr int kIgnoreLabel = -1;

// Per-pixel weights folded into one N,C,H,W tensor: weight at the target
// channel, zero elsewhere and at ignored pixels. Combined with
// -log(softmax(logits)) under a weighted mean this is exactly cross
// entropy, and the same assembly serves the supervised loss (unit weights)
// and the uncertainty-weighted loss (W weights) bit for bit.
template <typename T>
Tensor<T> onehot_weights(const Tensor<std::int32_t>& labels, int num_classes,
                         const Tensor<T>* pixel_weights);

// Graph node for mean_{weights}( -log softmax(logits)[label] ). Zero when
// every weight vanishes.
template <typename T>
Value ce_node(Graph<T>& g, Value logits, const Tensor<T>& class_weights);

// Supervised CE: mean over non-ignored pixels. all_ignored (when
// non-null) flags the degenerate everything-ignored batch, whose loss is 0.
template <typename T>
Value sup_loss_node(Graph<T>& g, Value logits, const Tensor<std::int32_t>& labels,
                    bool* all_ignored = nullptr);
template <typename T>
T sup_loss(const Tensor<T>& logits, const Tensor<std::int32_t>& labels, bool* all_ignored = nullptr);

// Weighted pseudo-label CE: sum_i W(i) ce(i) / sum_i W(i), or with
// literal_norm, sum_i W(i) ce(i) / (|omega| * |sum W|), the doubly
// normalized variant kept for fidelity experiments. omega is the pixel
// count of the supervision region; 0 means every pseudo pixel. It matters
// when the logits cover a concatenated batch whose labeled half is masked
// out by ignore labels and zero weights.
template <typename T>
Value uscs_loss_node(Graph<T>& g, Value logits, const Tensor<std::int32_t>& pseudo,
                     const Tensor<T>& w, bool literal_norm = false, std::int64_t omega = 0);
template <typename T>
T uscs_loss(const Tensor<T>& logits, const Tensor<std::int32_t>& pseudo, const Tensor<T>& w,
            bool literal_norm = false, std::int64_t omega = 0);

// One no-gradient MIMO forward on (x_ul, x_ul), then branch-crossed
// transformed distributions: dist1 = T1(softmax(head2)), dist2 =
// T2(softmax(head1)). Hard labels are the argmax of each distribution.
template <typename T>
struct PseudoPair {
  Tensor<T> dist1, dist2;          // N,C,H,W
  Tensor<std::int32_t> hard1, hard2;  // N,H,W
  // each head's own untransformed argmax, kept for the branch-diversity metric
  Tensor<std::int32_t> raw1, raw2;
};
template <typename T>
PseudoPair<T> make_pseudo(MimoSegNet<T>& model, const Tensor<T>& x_ul, const CutMixSpec& t1,
                          const CutMixSpec& t2, Rng& rng);

template <typename T>
struct LossReport {
  T sup1{}, sup2{}, uscs1{}, uscs2{}, total{};
  T lambda{};
};

// total = sup1 + sup2 + lambda * (uscs1 + uscs2)
template <typename T>
LossReport<T> total_loss(T sup1, T sup2, T uscs1, T uscs2, T lambda);

extern template Tensor<float> onehot_weights(const Tensor<std::int32_t>&, int, const Tensor<float>*);
extern template Tensor<double> onehot_weights(const Tensor<std::int32_t>&, int, const Tensor<double>*);

}  // namespace mimoseg
