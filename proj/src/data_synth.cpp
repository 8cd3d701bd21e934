#include "mimoseg/data_synth.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mimoseg {

namespace {

// deliberately close base colors; channel j beyond 3 reuses j mod 3
constexpr double kPalette[8][3] = {
    {0.42, 0.40, 0.38},  // background
    {0.58, 0.38, 0.36},  // class 1 (disks)
    {0.36, 0.56, 0.40},  // class 2 (rectangles)
    {0.38, 0.40, 0.58},  // class 3 (triangles)
    {0.56, 0.54, 0.36},  // class 4 (rings)
    {0.54, 0.38, 0.54},
    {0.36, 0.54, 0.54},
    {0.50, 0.46, 0.42},
};

double base_color(int cls, int channel) { return kPalette[cls % 8][channel % 3]; }

struct ShapeColor {
  std::vector<double> rgb;
};

ShapeColor draw_color(int cls, int channels, double jitter, Rng& rng) {
  ShapeColor c;
  c.rgb.resize(static_cast<size_t>(channels));
  for (int j = 0; j < channels; ++j)
    c.rgb[static_cast<size_t>(j)] = std::clamp(base_color(cls, j) + jitter * rng.normal(), 0.02, 0.98);
  return c;
}

struct Tri {
  double x0, y0, x1, y1, x2, y2;
};

bool in_triangle(const Tri& t, double px, double py) {
  auto side = [&](double ax, double ay, double bx, double by) {
    return (bx - ax) * (py - ay) - (by - ay) * (px - ax);
  };
  const double d0 = side(t.x0, t.y0, t.x1, t.y1);
  const double d1 = side(t.x1, t.y1, t.x2, t.y2);
  const double d2 = side(t.x2, t.y2, t.x0, t.y0);
  const bool has_neg = d0 < 0 || d1 < 0 || d2 < 0;
  const bool has_pos = d0 > 0 || d1 > 0 || d2 > 0;
  return !(has_neg && has_pos);
}

bool inside_shape(int kind, double cx, double cy, double r, double aux, double px, double py) {
  const double dx = px - cx, dy = py - cy;
  switch (kind) {
    case 0: return dx * dx + dy * dy <= r * r;
    case 1: return std::abs(dx) <= r && std::abs(dy) <= r * aux;
    case 2: {
      Tri tri{cx, cy - r, cx - r * aux * 1.2, cy + r * aux, cx + r * aux * 1.2, cy + r * aux};
      return in_triangle(tri, px, py);
    }
    case 3: {
      const double d2 = dx * dx + dy * dy;
      return d2 <= r * r && d2 >= (r * aux) * (r * aux);
    }
  }
  return false;
}

}  // namespace

void rasterize_shape(Tensor<std::int32_t>& label, int cls, int kind, double cx, double cy, double r,
                     double aux) {
  if (label.ndim() != 2) throw std::invalid_argument("rasterize_shape: label must be H,W");
  if (kind < 0 || kind > 3) throw std::invalid_argument("rasterize_shape: kind must lie in [0,3]");
  const int H = label.dim(0), W = label.dim(1);
  const double reach = r + 1.0;
  const int x_lo = std::max(0, static_cast<int>(std::floor(cx - reach)));
  const int x_hi = std::min(W - 1, static_cast<int>(std::ceil(cx + reach)));
  const int y_lo = std::max(0, static_cast<int>(std::floor(cy - reach)));
  const int y_hi = std::min(H - 1, static_cast<int>(std::ceil(cy + reach)));
  for (int y = y_lo; y <= y_hi; ++y)
    for (int x = x_lo; x <= x_hi; ++x)
      if (inside_shape(kind, cx, cy, r, aux, x + 0.5, y + 0.5))
        label.data[static_cast<size_t>(y) * W + x] = cls;
}

Scene generate_scene(Rng& rng, const SceneSpec& spec) {
  const int S = spec.canvas, C = spec.channels;
  Scene scene;
  scene.image = Tensor<float>({C, S, S});
  scene.label = Tensor<std::int32_t>({S, S});

  std::vector<double> img(static_cast<size_t>(C) * S * S);
  ShapeColor bg = draw_color(0, C, spec.color_jitter, rng);
  for (int j = 0; j < C; ++j)
    std::fill(img.begin() + static_cast<std::ptrdiff_t>(j) * S * S,
              img.begin() + static_cast<std::ptrdiff_t>(j + 1) * S * S, bg.rgb[static_cast<size_t>(j)]);

  const int nshapes =
      spec.shapes_min + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(spec.shapes_max - spec.shapes_min + 1)));
  for (int s = 0; s < nshapes; ++s) {
    const int cls = 1 + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(spec.num_classes - 1)));
    const int kind = (cls - 1) % 4;
    const double cx = rng.uniform(0.0, static_cast<double>(S));
    const double cy = rng.uniform(0.0, static_cast<double>(S));
    const double r = rng.uniform(0.10 * S, 0.24 * S);
    const double aux = rng.uniform(0.45, 0.80);  // rect aspect / ring hole / triangle squash
    ShapeColor col = draw_color(cls, C, spec.color_jitter, rng);

    int x_lo = 0, x_hi = S - 1, y_lo = 0, y_hi = S - 1;
    const double reach = r + 1.0;
    x_lo = std::max(0, static_cast<int>(std::floor(cx - reach)));
    x_hi = std::min(S - 1, static_cast<int>(std::ceil(cx + reach)));
    y_lo = std::max(0, static_cast<int>(std::floor(cy - reach)));
    y_hi = std::min(S - 1, static_cast<int>(std::ceil(cy + reach)));

    for (int y = y_lo; y <= y_hi; ++y)
      for (int x = x_lo; x <= x_hi; ++x) {
        if (!inside_shape(kind, cx, cy, r, aux, x + 0.5, y + 0.5)) continue;
        scene.label.data[static_cast<size_t>(y) * S + x] = cls;
        for (int j = 0; j < C; ++j)
          img[(static_cast<size_t>(j) * S + y) * S + x] = col.rgb[static_cast<size_t>(j)];
      }
  }

  for (std::size_t i = 0; i < img.size(); ++i)
    scene.image.data[i] = static_cast<float>(std::clamp(img[i] + spec.noise_amplitude * rng.normal(), 0.0, 1.0));
  return scene;
}

double color_probe_error(const SceneSpec& spec, std::uint64_t seed, int num_scenes) {
  if (num_scenes < 1) throw std::invalid_argument("color_probe_error: need at least one scene");
  Rng root(seed);
  std::vector<Scene> scenes;
  scenes.reserve(static_cast<size_t>(num_scenes));
  for (int i = 0; i < num_scenes; ++i) {
    Rng r = root.fork(static_cast<std::uint64_t>(i));
    scenes.push_back(generate_scene(r, spec));
  }
  const int C = spec.channels, S = spec.canvas;
  std::vector<double> mean(static_cast<size_t>(spec.num_classes) * C, 0.0);
  std::vector<std::int64_t> n(static_cast<size_t>(spec.num_classes), 0);
  for (const auto& sc : scenes)
    for (int y = 0; y < S; ++y)
      for (int x = 0; x < S; ++x) {
        const int cls = sc.label.data[static_cast<size_t>(y) * S + x];
        ++n[static_cast<size_t>(cls)];
        for (int j = 0; j < C; ++j)
          mean[static_cast<size_t>(cls) * C + j] += sc.image.data[(static_cast<size_t>(j) * S + y) * S + x];
      }
  for (int cls = 0; cls < spec.num_classes; ++cls)
    if (n[static_cast<size_t>(cls)] > 0)
      for (int j = 0; j < C; ++j) mean[static_cast<size_t>(cls) * C + j] /= static_cast<double>(n[static_cast<size_t>(cls)]);
  std::int64_t wrong = 0, total = 0;
  for (const auto& sc : scenes)
    for (int y = 0; y < S; ++y)
      for (int x = 0; x < S; ++x) {
        int best = -1;
        double best_d = 0.0;
        for (int cls = 0; cls < spec.num_classes; ++cls) {
          if (n[static_cast<size_t>(cls)] == 0) continue;
          double d = 0.0;
          for (int j = 0; j < C; ++j) {
            const double diff = sc.image.data[(static_cast<size_t>(j) * S + y) * S + x] -
                                mean[static_cast<size_t>(cls) * C + j];
            d += diff * diff;
          }
          if (best < 0 || d < best_d) {
            best = cls;
            best_d = d;
          }
        }
        ++total;
        if (best != sc.label.data[static_cast<size_t>(y) * S + x]) ++wrong;
      }
  return static_cast<double>(wrong) / static_cast<double>(total);
}

Dataset::Dataset(SceneSpec spec, int count, std::uint64_t seed, bool audit_colors)
    : spec_(spec), count_(count), seed_(seed), accesses_(static_cast<size_t>(count), 0) {
  if (count < 1) throw std::invalid_argument("Dataset: count must be >= 1");
  if (spec.num_classes < 2 || spec.num_classes > 8)
    throw std::invalid_argument("Dataset: num_classes must lie in [2,8]");
  if (spec.shapes_min < 0 || spec.shapes_max < spec.shapes_min)
    throw std::invalid_argument("Dataset: bad shapes range");
  if (audit_colors && spec.min_color_confusion > 0.0) {
    const double err = color_probe_error(spec, splitmix_probe(), 16);
    if (err < spec.min_color_confusion)
      throw std::invalid_argument("Dataset: color probe error " + std::to_string(err) +
                                  " below the configured floor " + std::to_string(spec.min_color_confusion) +
                                  "; the task is color-separable");
  }
}

std::uint64_t Dataset::splitmix_probe() const {
  std::uint64_t s = seed_ ^ 0x9e3779b97f4a7c15ull;
  return splitmix64(s);
}

Scene Dataset::scene(int index) const {
  if (index < 0 || index >= count_)
    throw std::out_of_range("Dataset: index " + std::to_string(index) + " outside [0," +
                            std::to_string(count_) + ")");
  ++accesses_[static_cast<size_t>(index)];
  Rng r = Rng(seed_).fork(static_cast<std::uint64_t>(index));
  return generate_scene(r, spec_);
}

std::pair<std::vector<int>, std::vector<int>> make_splits(int n, double labeled_ratio,
                                                          std::uint64_t seed) {
  if (!(labeled_ratio > 0.0 && labeled_ratio < 1.0))
    throw std::invalid_argument("make_splits: labeled_ratio must lie in (0,1)");
  const int labeled = static_cast<int>(std::lround(labeled_ratio * n));
  if (labeled < 1) throw std::invalid_argument("make_splits: labeled count rounds to zero");
  if (labeled >= n) throw std::invalid_argument("make_splits: labeled count rounds to the full set");
  std::vector<int> ids(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) ids[static_cast<size_t>(i)] = i;
  Rng rng(seed);
  rng.shuffle(ids);
  std::vector<int> l(ids.begin(), ids.begin() + labeled);
  std::vector<int> u(ids.begin() + labeled, ids.end());
  std::sort(l.begin(), l.end());
  std::sort(u.begin(), u.end());
  return {std::move(l), std::move(u)};
}

template <typename T>
GroupSampler<T>::GroupSampler(const Dataset& ds, std::vector<int> labeled, std::vector<int> unlabeled,
                              int batch, double rho, bool with_unlabeled, bool augment,
                              AugmentConfig aug, Rng rng)
    : ds_(ds),
      batch_(batch),
      rho_(rho),
      with_unlabeled_(with_unlabeled),
      augment_(augment),
      aug_(aug),
      l1_{std::move(labeled), 0, rng.fork("labeled1")},
      l2_{l1_.order, 0, rng.fork("labeled2")},
      ul_{std::move(unlabeled), 0, rng.fork("unlabeled")},
      coin_rng_(rng.fork("coin")),
      cutmix_rng_(rng.fork("cutmix")) {
  if (batch_ < 1) throw std::invalid_argument("GroupSampler: batch must be >= 1");
  if (!(rho_ >= 0.0 && rho_ <= 1.0)) throw std::invalid_argument("GroupSampler: rho must lie in [0,1]");
  if (static_cast<int>(l1_.order.size()) < batch_)
    throw std::invalid_argument("GroupSampler: labeled pool smaller than the batch");
  if (with_unlabeled_ && static_cast<int>(ul_.order.size()) < batch_)
    throw std::invalid_argument("GroupSampler: unlabeled pool smaller than the batch");
  l1_.rng.shuffle(l1_.order);
  l2_.rng.shuffle(l2_.order);
  if (with_unlabeled_) ul_.rng.shuffle(ul_.order);
}

template <typename T>
std::vector<int> GroupSampler<T>::draw(Stream& s, int n) {
  if (s.pos + static_cast<std::size_t>(n) > s.order.size()) {
    s.rng.shuffle(s.order);
    s.pos = 0;
  }
  std::vector<int> out(s.order.begin() + static_cast<std::ptrdiff_t>(s.pos),
                       s.order.begin() + static_cast<std::ptrdiff_t>(s.pos) + n);
  s.pos += static_cast<std::size_t>(n);
  return out;
}

template <typename T>
void GroupSampler<T>::load_labeled(const std::vector<int>& ids, Tensor<T>& x, Tensor<std::int32_t>& y,
                                   Rng& rng) {
  const SceneSpec& sp = ds_.spec();
  x = Tensor<T>({static_cast<int>(ids.size()), sp.channels, sp.canvas, sp.canvas});
  y = Tensor<std::int32_t>({static_cast<int>(ids.size()), sp.canvas, sp.canvas});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    Scene sc = ds_.scene(ids[i]);
    if (augment_) augment_labeled(sc.image, sc.label, aug_, rng);
    const std::int64_t chw = sc.image.numel();
    for (std::int64_t k = 0; k < chw; ++k)
      x[static_cast<std::int64_t>(i) * chw + k] = static_cast<T>(sc.image[k]);
    const std::int64_t hw = sc.label.numel();
    for (std::int64_t k = 0; k < hw; ++k) y[static_cast<std::int64_t>(i) * hw + k] = sc.label[k];
  }
}

template <typename T>
typename GroupSampler<T>::Groups GroupSampler<T>::next() {
  Groups g;
  g.idx1 = draw(l1_, batch_);
  load_labeled(g.idx1, g.xl1, g.yl1, l1_.rng);
  g.coincident = coin_rng_.bernoulli(rho_);
  if (g.coincident) {
    g.idx2 = g.idx1;
    g.xl2 = g.xl1;
    g.yl2 = g.yl1;
  } else {
    g.idx2 = draw(l2_, batch_);
    load_labeled(g.idx2, g.xl2, g.yl2, l2_.rng);
  }
  if (with_unlabeled_) {
    g.has_unlabeled = true;
    g.idx_ul = draw(ul_, batch_);
    const SceneSpec& sp = ds_.spec();
    g.x_ul = Tensor<T>({batch_, sp.channels, sp.canvas, sp.canvas});
    for (std::size_t i = 0; i < g.idx_ul.size(); ++i) {
      Scene sc = ds_.scene(g.idx_ul[i]);  // label discarded: unlabeled records carry no label
      const std::int64_t chw = sc.image.numel();
      for (std::int64_t k = 0; k < chw; ++k)
        g.x_ul[static_cast<std::int64_t>(i) * chw + k] = static_cast<T>(sc.image[k]);
    }
    g.t1 = sample_cutmix(batch_, sp.canvas, sp.canvas, cutmix_rng_);
    g.t2 = sample_cutmix(batch_, sp.canvas, sp.canvas, cutmix_rng_);
    g.x_ul_t1 = apply_cutmix(g.x_ul, g.t1);
    g.x_ul_t2 = apply_cutmix(g.x_ul, g.t2);
  }
  return g;
}

template class GroupSampler<float>;
template class GroupSampler<double>;

}  // namespace mimoseg
