#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "mimoseg/rng.hpp"
#include "mimoseg/tensor.hpp"
#include "mimoseg/transforms.hpp"

namespace mimoseg {

// Scenes are layered shape stacks over a textured background. The shape
// KIND is tied to the class id ((c-1) mod 4: disk, rectangle, triangle,
// ring) while colors of all classes are jittered around nearby bases and
// buried in shared noise, so color alone underdetermines the class and
// segmentation must use shape context. min_color_confusion is the floor on
// the error of a nearest-mean color classifier (the Bayes-error probe);
// datasets whose probe error falls below it are rejected as too easy.
struct SceneSpec {
  int canvas = 64;
  int channels = 3;
  int num_classes = 4;  // background + num_classes-1 shape classes
  int shapes_min = 2;
  int shapes_max = 5;
  double noise_amplitude = 0.25;
  double color_jitter = 0.25;
  double min_color_confusion = 0.05;
};

struct Scene {
  Tensor<float> image;         // C,H,W in [0,1]
  Tensor<std::int32_t> label;  // H,W in [0, num_classes)
};

// Deterministic in the rng state; later shapes occlude earlier ones; pixel
// (x,y) is rasterized at its center (x+0.5, y+0.5).
Scene generate_scene(Rng& rng, const SceneSpec& spec);

// Paints one shape onto a label map: kind 0 disk of radius r, 1 rectangle
// with half-extents (r, r*aux), 2 isoceles triangle, 3 ring with inner
// radius r*aux. Exposed so rasterized geometry can be audited against
// analytic areas.
void rasterize_shape(Tensor<std::int32_t>& label, int cls, int kind, double cx, double cy, double r,
                     double aux);

// Error rate of a nearest-class-mean color classifier over freshly
// generated scenes (class means estimated from the same sample).
double color_probe_error(const SceneSpec& spec, std::uint64_t seed, int num_scenes);

// Scenes regenerated on demand from (seed, index); nothing is stored.
// Access counts per index back the never-reads-unlabeled-labels audit.
class Dataset {
 public:
  Dataset(SceneSpec spec, int count, std::uint64_t seed, bool audit_colors = true);

  int size() const { return count_; }
  const SceneSpec& spec() const { return spec_; }
  Scene scene(int index) const;
  std::int64_t accesses(int index) const { return accesses_[static_cast<size_t>(index)]; }

 private:
  std::uint64_t splitmix_probe() const;

  SceneSpec spec_;
  int count_;
  std::uint64_t seed_;
  mutable std::vector<std::int64_t> accesses_;
};

// Disjoint, exhaustive, seed-deterministic labeled/unlabeled id split.
// Rejected when rounding leaves either side empty.
std::pair<std::vector<int>, std::vector<int>> make_splits(int n, double labeled_ratio,
                                                          std::uint64_t seed);

// Per-step group pair: two labeled batches coupled by the input-repetition
// coin (batch 2 is a copy of batch 1 with probability rho, drawn from its
// own independently shuffled stream otherwise; the second stream does not
// advance on coincident steps), plus one shared unlabeled batch with two
// independent CutMix draws. Unlabeled scenes carry no label tensor at all.
template <typename T>
class GroupSampler {
 public:
  struct Groups {
    Tensor<T> xl1, xl2;
    Tensor<std::int32_t> yl1, yl2;
    std::vector<int> idx1, idx2;
    bool coincident = false;
    bool has_unlabeled = false;
    Tensor<T> x_ul, x_ul_t1, x_ul_t2;
    CutMixSpec t1, t2;
    std::vector<int> idx_ul;
  };

  GroupSampler(const Dataset& ds, std::vector<int> labeled, std::vector<int> unlabeled, int batch,
               double rho, bool with_unlabeled, bool augment, AugmentConfig aug, Rng rng);

  Groups next();

 private:
  struct Stream {
    std::vector<int> order;
    std::size_t pos = 0;
    Rng rng;  // shuffle + augment draws for this stream
  };
  std::vector<int> draw(Stream& s, int n);
  void load_labeled(const std::vector<int>& ids, Tensor<T>& x, Tensor<std::int32_t>& y, Rng& rng);

  const Dataset& ds_;
  int batch_;
  double rho_;
  bool with_unlabeled_;
  bool augment_;
  AugmentConfig aug_;
  Stream l1_, l2_, ul_;
  Rng coin_rng_;
  Rng cutmix_rng_;
};

extern template class GroupSampler<float>;
extern template class GroupSampler<double>;

}  // namespace mimoseg
