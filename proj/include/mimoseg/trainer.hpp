#pragma once

#include <cstdint>
#include <vector>

#include "mimoseg/data_synth.hpp"
#include "mimoseg/losses.hpp"
#include "mimoseg/metrics.hpp"
#include "mimoseg/model.hpp"
#include "mimoseg/params.hpp"

namespace mimoseg {

// base * (1 - iter/max_iter)^0.9
double poly_lr(double base, std::int64_t iter, std::int64_t max_iter);

template <typename T>
struct SgdState {
  std::vector<Tensor<T>> velocity;  // parallel to the param store
  explicit SgdState(const ParamStore<T>& store);
};

// v <- momentum*v + grad + weight_decay*param; param <- param - lr*v.
// Encoder parameters use lr_encoder, decoder and head parameters lr_rest.
// A non-finite gradient anywhere rejects the whole step: parameters and
// velocities stay untouched and the call returns false.
template <typename T>
bool sgd_step(ParamStore<T>& params, const std::vector<Tensor<T>>& grads, SgdState<T>& state,
              double lr_encoder, double lr_rest, double momentum, double weight_decay);

struct StepOptions {
  double lambda = 1.0;
  double gamma = 0.5;
  bool uncertainty = true;  // false: every pseudo-label weight is 1
  bool literal_norm = false;
  bool supervised_only = false;
  double base_lr = 0.01;
  double head_lr_multiplier = 10.0;  // decoder and heads train faster than the encoder
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::int64_t max_iterations = 3000;

  // throws listing every violated constraint
  void validate() const;
};

struct StepMetrics {
  std::int64_t iter = 0;
  double lr = 0.0;
  double sup1 = 0.0, sup2 = 0.0, uscs1 = 0.0, uscs2 = 0.0, total = 0.0;
  double mean_w = 1.0;        // mean pseudo-label weight; 1 when unweighted
  double non_overlap = -1.0;  // teacher-branch argmax disagreement; -1 when no teacher pass ran
  double wall_ms = 0.0;
  bool step_ok = true;  // false: non-finite gradients, parameters untouched
};

// One training iteration: no-gradient teacher pass on the unlabeled batch,
// confidence weight masks from the branch-crossed teacher distributions,
// one gradient pass on (labeled ++ transformed-unlabeled) branch batches,
// one backward, one SGD step under poly decay. Exactly two dual-branch
// forwards. lambda = 0 or supervised_only reduces the step to the two
// supervised branches alone and never reads the unlabeled tensors. A
// non-finite loss aborts with an exception; non-finite gradients merely
// skip the update and mark the row.
template <typename T>
StepMetrics train_iteration(MimoSegNet<T>& model, SgdState<T>& opt,
                            const typename GroupSampler<T>::Groups& groups, const StepOptions& opts,
                            std::int64_t iter, Rng& rng);

struct EvalResult {
  double miou = 0.0;
  std::vector<double> per_class;
  double branch_non_overlap = 0.0;  // head disagreement when both branches see the same image
  ConfusionMatrix confusion{1};
};

// Each image enters both branches; the two softmax maps are averaged and
// argmaxed; IoU accumulates over the whole set, so image order is
// irrelevant.
template <typename T>
EvalResult evaluate(MimoSegNet<T>& model, const Dataset& ds, const std::vector<int>& indices);

// Two-model cross supervision reference iteration: one no-gradient teacher
// forward per model on the unlabeled batch plus one gradient forward per
// model on concatenated batches, four single-net passes total. Supervision
// crossing and transforms mirror the main step; no uncertainty weighting.
template <typename T>
StepMetrics cps_reference_step(SingleSegNet<T>& net1, SingleSegNet<T>& net2, SgdState<T>& opt1,
                               SgdState<T>& opt2, const typename GroupSampler<T>::Groups& groups,
                               const StepOptions& opts, std::int64_t iter);

// Supervised baseline iteration on a single net: one gradient pass.
template <typename T>
StepMetrics sup_reference_step(SingleSegNet<T>& net, SgdState<T>& opt,
                               const typename GroupSampler<T>::Groups& groups,
                               const StepOptions& opts, std::int64_t iter);

extern template struct SgdState<float>;
extern template struct SgdState<double>;
extern template bool sgd_step(ParamStore<float>&, const std::vector<Tensor<float>>&,
                              SgdState<float>&, double, double, double, double);
extern template bool sgd_step(ParamStore<double>&, const std::vector<Tensor<double>>&,
                              SgdState<double>&, double, double, double, double);
extern template StepMetrics train_iteration(MimoSegNet<float>&, SgdState<float>&,
                                            const GroupSampler<float>::Groups&, const StepOptions&,
                                            std::int64_t, Rng&);
extern template StepMetrics train_iteration(MimoSegNet<double>&, SgdState<double>&,
                                            const GroupSampler<double>::Groups&, const StepOptions&,
                                            std::int64_t, Rng&);
extern template EvalResult evaluate(MimoSegNet<float>&, const Dataset&, const std::vector<int>&);
extern template EvalResult evaluate(MimoSegNet<double>&, const Dataset&, const std::vector<int>&);
extern template StepMetrics cps_reference_step(SingleSegNet<float>&, SingleSegNet<float>&,
                                               SgdState<float>&, SgdState<float>&,
                                               const GroupSampler<float>::Groups&,
                                               const StepOptions&, std::int64_t);
extern template StepMetrics cps_reference_step(SingleSegNet<double>&, SingleSegNet<double>&,
                                               SgdState<double>&, SgdState<double>&,
                                               const GroupSampler<double>::Groups&,
                                               const StepOptions&, std::int64_t);
extern template StepMetrics sup_reference_step(SingleSegNet<float>&, SgdState<float>&,
                                               const GroupSampler<float>::Groups&,
                                               const StepOptions&, std::int64_t);
extern template StepMetrics sup_reference_step(SingleSegNet<double>&, SgdState<double>&,
                                               const GroupSampler<double>::Groups&,
                                               const StepOptions&, std::int64_t);

}  // namespace mimoseg
