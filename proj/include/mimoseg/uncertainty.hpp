#pragma once

#include "mimoseg/tensor.hpp"

namespace mimoseg {

// U(i) = -sum_c p(c) log p(c), natural log, 0*log(0) = 0 (realized by the
// 1e-12 floor inside the log). Input N,C,H,W; each pixel must sum to 1
// within 1e-6 with non-negative entries, otherwise rejected. Output N,H,W.
template <typename T>
Tensor<T> shannon_entropy(const Tensor<T>& p);

// Confidence = 1 - U/ln(C), clamped to [0,1]. 1 is fully confident
// (one-hot), 0 is uniform. C < 2 rejected.
template <typename T>
Tensor<T> confidence(const Tensor<T>& entropy, int num_classes);

template <typename T>
struct WeightMask {
  Tensor<T> w;  // per-pixel in [0,1]
  T gamma;
};

// W(i) = 1 where conf(i) >= gamma (boundary included), conf(i)/gamma below.
// gamma must lie in (0, 1].
template <typename T>
WeightMask<T> weight_mask(const Tensor<T>& conf, T gamma);

extern template Tensor<float> shannon_entropy(const Tensor<float>&);
extern template Tensor<double> shannon_entropy(const Tensor<double>&);
extern template Tensor<float> confidence(const Tensor<float>&, int);
extern template Tensor<double> confidence(const Tensor<double>&, int);
extern template WeightMask<float> weight_mask(const Tensor<float>&, float);
extern template WeightMask<double> weight_mask(const Tensor<double>&, double);

}  // namespace mimoseg
