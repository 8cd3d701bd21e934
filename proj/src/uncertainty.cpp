#include "mimoseg/uncertainty.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace mimoseg {

template <typename T>
Tensor<T> shannon_entropy(const Tensor<T>& p) {
  if (p.ndim() != 4) throw std::invalid_argument("shannon_entropy: expected N,C,H,W, got " + shape_str(p.shape));
  const int N = p.dim(0), C = p.dim(1), H = p.dim(2), W = p.dim(3);
  Tensor<T> u({N, H, W});
  const std::int64_t hw = static_cast<std::int64_t>(H) * W;
  for (int n = 0; n < N; ++n) {
    const T* pp = &p.at4(n, 0, 0, 0);
    T* up = &u.at3(n, 0, 0);
    for (std::int64_t i = 0; i < hw; ++i) {
      T sum = T(0), ent = T(0);
      for (int c = 0; c < C; ++c) {
        const T v = pp[c * hw + i];
        if (v < T(0))
          throw std::invalid_argument("shannon_entropy: negative probability " + std::to_string(static_cast<double>(v)));
        sum += v;
        if (v > T(0)) ent -= v * std::log(std::max(v, static_cast<T>(1e-12)));
      }
      if (std::abs(sum - T(1)) > static_cast<T>(1e-6))
        throw std::invalid_argument("shannon_entropy: pixel distribution sums to " +
                                    std::to_string(static_cast<double>(sum)) + ", not 1");
      up[i] = ent;
    }
  }
  return u;
}

template <typename T>
Tensor<T> confidence(const Tensor<T>& entropy, int num_classes) {
  if (num_classes < 2) throw std::invalid_argument("confidence: need at least 2 classes");
  const T inv_log_c = T(1) / std::log(static_cast<T>(num_classes));
  Tensor<T> out(entropy.shape);
  for (std::int64_t i = 0; i < entropy.numel(); ++i) {
    const T v = T(1) - entropy[i] * inv_log_c;
    out[i] = v < T(0) ? T(0) : (v > T(1) ? T(1) : v);
  }
  return out;
}

template <typename T>
WeightMask<T> weight_mask(const Tensor<T>& conf, T gamma) {
  if (!(gamma > T(0)) || gamma > T(1))
    throw std::invalid_argument("weight_mask: gamma must lie in (0,1], got " +
                                std::to_string(static_cast<double>(gamma)));
  WeightMask<T> m{Tensor<T>(conf.shape), gamma};
  for (std::int64_t i = 0; i < conf.numel(); ++i)
    m.w[i] = conf[i] >= gamma ? T(1) : conf[i] / gamma;
  return m;
}

template Tensor<float> shannon_entropy(const Tensor<float>&);
template Tensor<double> shannon_entropy(const Tensor<double>&);
template Tensor<float> confidence(const Tensor<float>&, int);
template Tensor<double> confidence(const Tensor<double>&, int);
template WeightMask<float> weight_mask(const Tensor<float>&, float);
template WeightMask<double> weight_mask(const Tensor<double>&, double);

}  // namespace mimoseg
