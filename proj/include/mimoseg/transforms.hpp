#pragma once

#include <cstdint>
#include <vector>

#include "mimoseg/rng.hpp"
#include "mimoseg/tensor.hpp"

namespace mimoseg {

// One box per batch element plus the partner permutation (batch rotation by
// one). The transform: element i's box region is overwritten with the same
// region from partner(i).
struct CutMixSpec {
  int batch = 0, height = 0, width = 0;
  struct Box {
    int top = 0, left = 0, h = 0, w = 0;
  };
  std::vector<int> partner;
  std::vector<Box> boxes;
};

// Box area ratio uniform in [0.25, 0.5] of the image, aspect (h/w) uniform
// in [0.5, 2], position uniform subject to full containment.
CutMixSpec sample_cutmix(int batch, int height, int width, Rng& rng);

// Pure pixel selection; serves images and probability maps (N,C,H,W) and
// hard label maps (N,H,W) identically. Output pixels are read from the
// input batch, never from partially transformed elements.
template <typename T>
Tensor<T> apply_cutmix(const Tensor<T>& field, const CutMixSpec& spec);

struct AugmentConfig {
  int crop = 64;
  double flip_prob = 0.5;
  double scale_min = 0.5;
  double scale_max = 2.0;
};

// Identical geometry for image (C,H,W, bilinear) and label (H,W, nearest):
// scale by a uniform factor, crop to cfg.crop (upscaling first if the
// scaled image is smaller than the crop), then horizontal flip with
// cfg.flip_prob. Draw order: scale, crop top, crop left, flip.
template <typename T>
void augment_labeled(Tensor<T>& image, Tensor<std::int32_t>& label, const AugmentConfig& cfg, Rng& rng);

// general-ratio resamplers shared with augmentation internals
template <typename T>
Tensor<T> resize_bilinear(const Tensor<T>& chw, int out_h, int out_w);
Tensor<std::int32_t> resize_nearest(const Tensor<std::int32_t>& hw, int out_h, int out_w);

extern template Tensor<float> apply_cutmix(const Tensor<float>&, const CutMixSpec&);
extern template Tensor<double> apply_cutmix(const Tensor<double>&, const CutMixSpec&);
extern template Tensor<std::int32_t> apply_cutmix(const Tensor<std::int32_t>&, const CutMixSpec&);

}  // namespace mimoseg
