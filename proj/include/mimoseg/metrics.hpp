#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mimoseg/model.hpp"
#include "mimoseg/tensor.hpp"

namespace mimoseg {

// C x C pixel counts, entry (truth, predicted). Merging is entrywise
// addition, so evaluation can be sharded and recombined in any order.
struct ConfusionMatrix {
  int num_classes = 0;
  std::vector<std::int64_t> counts;

  explicit ConfusionMatrix(int c);
  std::int64_t& at(int truth, int pred) { return counts[static_cast<size_t>(truth) * num_classes + pred]; }
  std::int64_t at(int truth, int pred) const { return counts[static_cast<size_t>(truth) * num_classes + pred]; }

  // truth pixels labeled -1 are skipped
  void add(const Tensor<std::int32_t>& truth, const Tensor<std::int32_t>& pred);
  void merge(const ConfusionMatrix& o);
  std::int64_t total() const;

  // TP / (TP + FP + FN); classes absent from both truth and prediction get 0
  double iou(int c) const;
  std::vector<double> per_class_iou() const;
  // mean IoU over classes present in the ground truth
  double miou() const;
};

// Fraction of pixels where two hard label maps disagree.
double non_overlap_ratio(const Tensor<std::int32_t>& a, const Tensor<std::int32_t>& b);

// MACs of one KxK convolution output map.
std::int64_t conv_macs_count(std::int64_t cout, std::int64_t cin, std::int64_t k, std::int64_t hout,
                             std::int64_t wout);

struct LayerCost {
  std::string name;
  std::int64_t macs;
};

// Per-image per-layer MACs of one single-branch forward (upsampling is
// MAC-free). The MIMO forward costs 2*encoder + decoder + 2*heads.
std::vector<LayerCost> layer_macs(const MimoConfig& cfg);
std::int64_t macs_encoder(const MimoConfig& cfg);
std::int64_t macs_decoder(const MimoConfig& cfg);
std::int64_t macs_head(const MimoConfig& cfg);
std::int64_t macs_single_forward(const MimoConfig& cfg, int batch);
std::int64_t macs_mimo_forward(const MimoConfig& cfg, int batch);  // per dual-input call

// analytic parameter counts, matching ParamStore::count() on built nets
std::int64_t params_single(const MimoConfig& cfg);
std::int64_t params_mimo(const MimoConfig& cfg);

// Training-cost rows for the three pipelines at labeled batch B (the
// unlabeled batch has the same size):
//   supervised-only: one single-net forward on the labeled batch;
//   two-model cross supervision: two no-gradient single-net forwards on the
//     unlabeled batch plus two gradient forwards on 2B concat batches;
//   uscs: one no-gradient MIMO forward on the unlabeled batch plus one
//     gradient MIMO forward on 2B concat branch inputs.
struct CostReport {
  std::int64_t params_sup = 0, params_cps = 0, params_uscs = 0;
  std::int64_t iter_macs_sup = 0, iter_macs_cps = 0, iter_macs_uscs = 0;
  int passes_sup = 1, passes_cps = 4, passes_uscs = 2;
  double param_ratio = 0.0;  // uscs / cps
  double macs_ratio = 0.0;   // uscs iteration / cps iteration
};
CostReport cost_report(const MimoConfig& cfg, int batch);

}  // namespace mimoseg
