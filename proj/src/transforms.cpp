#include "mimoseg/transforms.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mimoseg {

CutMixSpec sample_cutmix(int batch, int height, int width, Rng& rng) {
  if (batch < 1 || height < 1 || width < 1)
    throw std::invalid_argument("sample_cutmix: batch and extents must be >= 1");
  CutMixSpec s;
  s.batch = batch;
  s.height = height;
  s.width = width;
  s.partner.resize(static_cast<size_t>(batch));
  s.boxes.resize(static_cast<size_t>(batch));
  for (int i = 0; i < batch; ++i) {
    s.partner[static_cast<size_t>(i)] = (i + 1) % batch;
    const double ratio = rng.uniform(0.25, 0.5);
    const double aspect = rng.uniform(0.5, 2.0);  // box h / box w
    const double area = ratio * height * width;
    // ratio*aspect <= 1 and ratio/aspect <= 1, so both extents fit a square
    // canvas before rounding; clamping covers rounding and non-square cases
    int bh = std::clamp(static_cast<int>(std::lround(std::sqrt(area * aspect))), 1, height);
    int bw = std::clamp(static_cast<int>(std::lround(std::sqrt(area / aspect))), 1, width);
    const int top = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(height - bh + 1)));
    const int left = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(width - bw + 1)));
    s.boxes[static_cast<size_t>(i)] = {top, left, bh, bw};
  }
  return s;
}

namespace {

void check_geometry(int batch, int height, int width, const CutMixSpec& s, const char* who) {
  if (batch != s.batch || height != s.height || width != s.width)
    throw std::invalid_argument(std::string(who) + ": field geometry " + std::to_string(batch) + "x" +
                                std::to_string(height) + "x" + std::to_string(width) +
                                " does not match spec " + std::to_string(s.batch) + "x" +
                                std::to_string(s.height) + "x" + std::to_string(s.width));
}

}  // namespace

template <typename T>
Tensor<T> apply_cutmix(const Tensor<T>& field, const CutMixSpec& spec) {
  if (field.ndim() != 4 && field.ndim() != 3)
    throw std::invalid_argument("apply_cutmix: expected N,C,H,W or N,H,W, got " + shape_str(field.shape));
  const bool channels = field.ndim() == 4;
  const int N = field.dim(0);
  const int C = channels ? field.dim(1) : 1;
  const int H = field.dim(channels ? 2 : 1);
  const int W = field.dim(channels ? 3 : 2);
  check_geometry(N, H, W, spec, "apply_cutmix");
  Tensor<T> out = field;
  const std::int64_t chw = static_cast<std::int64_t>(C) * H * W;
  for (int i = 0; i < N; ++i) {
    const auto& b = spec.boxes[static_cast<size_t>(i)];
    const int src = spec.partner[static_cast<size_t>(i)];
    for (int c = 0; c < C; ++c) {
      const std::int64_t dst_base = i * chw + static_cast<std::int64_t>(c) * H * W;
      const std::int64_t src_base = src * chw + static_cast<std::int64_t>(c) * H * W;
      for (int y = b.top; y < b.top + b.h; ++y)
        for (int x = b.left; x < b.left + b.w; ++x)
          out[dst_base + static_cast<std::int64_t>(y) * W + x] =
              field[src_base + static_cast<std::int64_t>(y) * W + x];
    }
  }
  return out;
}

namespace {
// half-pixel-center source coordinate for an arbitrary resize ratio
inline double src_coord(int dst, int dst_extent, int src_extent) {
  return (dst + 0.5) * static_cast<double>(src_extent) / dst_extent - 0.5;
}
}  // namespace

template <typename T>
Tensor<T> resize_bilinear(const Tensor<T>& chw, int out_h, int out_w) {
  if (chw.ndim() != 3) throw std::invalid_argument("resize_bilinear: expected C,H,W, got " + shape_str(chw.shape));
  const int C = chw.dim(0), H = chw.dim(1), W = chw.dim(2);
  if (out_h == H && out_w == W) return chw;
  Tensor<T> out({C, out_h, out_w});
  for (int oy = 0; oy < out_h; ++oy) {
    const double sy = std::clamp(src_coord(oy, out_h, H), 0.0, static_cast<double>(H - 1));
    const int y0 = static_cast<int>(sy);
    const int y1 = std::min(y0 + 1, H - 1);
    const double fy = sy - y0;
    for (int ox = 0; ox < out_w; ++ox) {
      const double sx = std::clamp(src_coord(ox, out_w, W), 0.0, static_cast<double>(W - 1));
      const int x0 = static_cast<int>(sx);
      const int x1 = std::min(x0 + 1, W - 1);
      const double fx = sx - x0;
      for (int c = 0; c < C; ++c) {
        const double v00 = chw.data[(static_cast<size_t>(c) * H + y0) * W + x0];
        const double v01 = chw.data[(static_cast<size_t>(c) * H + y0) * W + x1];
        const double v10 = chw.data[(static_cast<size_t>(c) * H + y1) * W + x0];
        const double v11 = chw.data[(static_cast<size_t>(c) * H + y1) * W + x1];
        out.data[(static_cast<size_t>(c) * out_h + oy) * out_w + ox] =
            static_cast<T>((1 - fy) * ((1 - fx) * v00 + fx * v01) + fy * ((1 - fx) * v10 + fx * v11));
      }
    }
  }
  return out;
}

Tensor<std::int32_t> resize_nearest(const Tensor<std::int32_t>& hw, int out_h, int out_w) {
  if (hw.ndim() != 2) throw std::invalid_argument("resize_nearest: expected H,W, got " + shape_str(hw.shape));
  const int H = hw.dim(0), W = hw.dim(1);
  if (out_h == H && out_w == W) return hw;
  Tensor<std::int32_t> out({out_h, out_w});
  for (int oy = 0; oy < out_h; ++oy) {
    const int sy = std::clamp(static_cast<int>(std::floor(src_coord(oy, out_h, H) + 0.5)), 0, H - 1);
    for (int ox = 0; ox < out_w; ++ox) {
      const int sx = std::clamp(static_cast<int>(std::floor(src_coord(ox, out_w, W) + 0.5)), 0, W - 1);
      out.data[static_cast<size_t>(oy) * out_w + ox] = hw.data[static_cast<size_t>(sy) * W + sx];
    }
  }
  return out;
}

template <typename T>
void augment_labeled(Tensor<T>& image, Tensor<std::int32_t>& label, const AugmentConfig& cfg, Rng& rng) {
  if (image.ndim() != 3) throw std::invalid_argument("augment_labeled: image must be C,H,W, got " + shape_str(image.shape));
  if (label.ndim() != 2 || label.dim(0) != image.dim(1) || label.dim(1) != image.dim(2))
    throw std::invalid_argument("augment_labeled: label " + shape_str(label.shape) +
                                " not aligned with image " + shape_str(image.shape));
  const int H = image.dim(1), W = image.dim(2);
  const double s = rng.uniform(cfg.scale_min, cfg.scale_max);
  // scaled size, raised to the crop so the crop always fits
  const int sh = std::max(cfg.crop, static_cast<int>(std::lround(H * s)));
  const int sw = std::max(cfg.crop, static_cast<int>(std::lround(W * s)));
  Tensor<T> img = resize_bilinear(image, sh, sw);
  Tensor<std::int32_t> lab = resize_nearest(label, sh, sw);
  const int top = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(sh - cfg.crop + 1)));
  const int left = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(sw - cfg.crop + 1)));
  const bool flip = rng.bernoulli(cfg.flip_prob);
  const int C = image.dim(0);
  Tensor<T> oimg({C, cfg.crop, cfg.crop});
  Tensor<std::int32_t> olab({cfg.crop, cfg.crop});
  for (int y = 0; y < cfg.crop; ++y)
    for (int x = 0; x < cfg.crop; ++x) {
      const int sx = left + (flip ? cfg.crop - 1 - x : x);
      const int sy = top + y;
      for (int c = 0; c < C; ++c)
        oimg.data[(static_cast<size_t>(c) * cfg.crop + y) * cfg.crop + x] =
            img.data[(static_cast<size_t>(c) * sh + sy) * sw + sx];
      olab.data[static_cast<size_t>(y) * cfg.crop + x] = lab.data[static_cast<size_t>(sy) * sw + sx];
    }
  image = std::move(oimg);
  label = std::move(olab);
}

template Tensor<float> apply_cutmix(const Tensor<float>&, const CutMixSpec&);
template Tensor<double> apply_cutmix(const Tensor<double>&, const CutMixSpec&);
template Tensor<std::int32_t> apply_cutmix(const Tensor<std::int32_t>&, const CutMixSpec&);
template Tensor<float> resize_bilinear(const Tensor<float>&, int, int);
template Tensor<double> resize_bilinear(const Tensor<double>&, int, int);
template void augment_labeled(Tensor<float>&, Tensor<std::int32_t>&, const AugmentConfig&, Rng&);
template void augment_labeled(Tensor<double>&, Tensor<std::int32_t>&, const AugmentConfig&, Rng&);

}  // namespace mimoseg
