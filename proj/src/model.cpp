#include "mimoseg/model.hpp"

#include <cmath>
#include <stdexcept>

namespace mimoseg {

void MimoConfig::validate() const {
  std::string problems;
  auto bad = [&](const std::string& p) { problems += (problems.empty() ? "" : "; ") + p; };
  if (in_channels < 1) bad("in_channels must be >= 1");
  if (num_classes < 2) bad("num_classes must be >= 2");
  if (encoder_widths.empty()) bad("encoder_widths must be non-empty");
  if (decoder_widths.empty()) bad("decoder_widths must be non-empty");
  for (int w : encoder_widths)
    if (w < 1) bad("encoder_widths entries must be positive");
  for (int w : decoder_widths)
    if (w < 1) bad("decoder_widths entries must be positive");
  if (decoder_widths.size() > encoder_widths.size())
    bad("decoder stage count exceeds encoder stage count");
  if (grid_size < 1) bad("grid_size must be >= 1");
  const int stride = total_stride();
  if (height < stride || height % stride != 0)
    bad("height " + std::to_string(height) + " not divisible by total stride " + std::to_string(stride));
  if (width < stride || width % stride != 0)
    bad("width " + std::to_string(width) + " not divisible by total stride " + std::to_string(stride));
  if (!problems.empty()) throw std::invalid_argument("MimoConfig: " + problems);
}

GridMask sample_grid_mask(int height, int width, int g, Rng& rng) {
  if (g < 1) throw std::invalid_argument("sample_grid_mask: g must be >= 1");
  GridMask m;
  m.g = g;
  m.cells = Tensor<std::int32_t>({height, width});
  const int ch = (height + g - 1) / g;
  const int cw = (width + g - 1) / g;
  for (int cy = 0; cy < ch; ++cy)
    for (int cx = 0; cx < cw; ++cx) {
      const std::int32_t bit = rng.bernoulli(0.5) ? 1 : 0;
      const int y1 = std::min(height, (cy + 1) * g);
      const int x1 = std::min(width, (cx + 1) * g);
      for (int y = cy * g; y < y1; ++y)
        for (int x = cx * g; x < x1; ++x) m.cells.data[static_cast<size_t>(y) * width + x] = bit;
    }
  return m;
}

template <typename T>
Tensor<T> gridmix(const Tensor<T>& f1, const Tensor<T>& f2, const GridMask& m) {
  require_same_shape(f1, f2, "gridmix");
  if (f1.ndim() != 4) throw std::invalid_argument("gridmix: expected N,C,H,W, got " + shape_str(f1.shape));
  if (m.cells.dim(0) != f1.dim(2) || m.cells.dim(1) != f1.dim(3))
    throw std::invalid_argument("gridmix: mask " + shape_str(m.cells.shape) + " does not cover features " +
                                shape_str(f1.shape));
  Tensor<T> out(f1.shape);
  const int N = f1.dim(0), C = f1.dim(1), H = f1.dim(2), W = f1.dim(3);
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c)
      for (int h = 0; h < H; ++h)
        for (int w = 0; w < W; ++w)
          out.at4(n, c, h, w) = m.cells.data[static_cast<size_t>(h) * W + w] ? f1.at4(n, c, h, w)
                                                                             : f2.at4(n, c, h, w);
  return out;
}

template <typename T>
Tensor<T> summing_fusion(const Tensor<T>& f1, const Tensor<T>& f2) {
  require_same_shape(f1, f2, "summing_fusion");
  Tensor<T> out(f1.shape);
  for (std::int64_t i = 0; i < f1.numel(); ++i) out[i] = f1[i] + f2[i];
  return out;
}

template <typename T>
Value gridmix_node(Graph<T>& g, Value f1, Value f2, const GridMask& m) {
  const Tensor<T>& a = g.value(f1);
  if (m.cells.dim(0) != a.dim(2) || m.cells.dim(1) != a.dim(3))
    throw std::invalid_argument("gridmix: mask " + shape_str(m.cells.shape) + " does not cover features " +
                                shape_str(a.shape));
  Tensor<T> mask(a.shape), inv(a.shape);
  const int N = a.dim(0), C = a.dim(1), H = a.dim(2), W = a.dim(3);
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c)
      for (int h = 0; h < H; ++h)
        for (int w = 0; w < W; ++w) {
          const T bit = static_cast<T>(m.cells.data[static_cast<size_t>(h) * W + w]);
          mask.at4(n, c, h, w) = bit;
          inv.at4(n, c, h, w) = T(1) - bit;
        }
  return g.add(g.mul(f1, g.leaf(std::move(mask), false)), g.mul(f2, g.leaf(std::move(inv), false)));
}

template <typename T>
Tensor<T> init_conv_kernel(int cout, int cin, int k, Rng& rng) {
  Tensor<T> w({cout, cin, k, k});
  const double sd = std::sqrt(2.0 / (static_cast<double>(cin) * k * k));
  for (std::int64_t i = 0; i < w.numel(); ++i) w[i] = static_cast<T>(rng.normal() * sd);
  return w;
}

namespace {

// shared layer recipe: one store entry pair (kernel, bias) per conv
template <typename T>
void build_params(const MimoConfig& cfg, ParamStore<T>& store, Rng& rng, bool two_heads,
                  int* enc_end, int* dec_end, int* head1_end, int* head2_end) {
  int cin = cfg.in_channels;
  for (std::size_t i = 0; i < cfg.encoder_widths.size(); ++i) {
    const int cout = cfg.encoder_widths[i];
    store.add("encoder." + std::to_string(i) + ".kernel", ParamGroup::Encoder,
              init_conv_kernel<T>(cout, cin, 3, rng));
    store.add("encoder." + std::to_string(i) + ".bias", ParamGroup::Encoder, Tensor<T>({cout}));
    cin = cout;
  }
  *enc_end = static_cast<int>(store.size());
  for (std::size_t i = 0; i < cfg.decoder_widths.size(); ++i) {
    const int cout = cfg.decoder_widths[i];
    store.add("decoder." + std::to_string(i) + ".kernel", ParamGroup::Decoder,
              init_conv_kernel<T>(cout, cin, 3, rng));
    store.add("decoder." + std::to_string(i) + ".bias", ParamGroup::Decoder, Tensor<T>({cout}));
    cin = cout;
  }
  *dec_end = static_cast<int>(store.size());
  store.add("head1.kernel", ParamGroup::Head, init_conv_kernel<T>(cfg.num_classes, cin, 1, rng));
  store.add("head1.bias", ParamGroup::Head, Tensor<T>({cfg.num_classes}));
  *head1_end = static_cast<int>(store.size());
  if (two_heads) {
    store.add("head2.kernel", ParamGroup::Head, init_conv_kernel<T>(cfg.num_classes, cin, 1, rng));
    store.add("head2.bias", ParamGroup::Head, Tensor<T>({cfg.num_classes}));
  }
  *head2_end = static_cast<int>(store.size());
}

template <typename T, typename Bound>
Value run_encoder(Graph<T>& g, const Bound& bp, Value x, const MimoConfig& cfg, int enc_begin) {
  Value h = x;
  for (std::size_t i = 0; i < cfg.encoder_widths.size(); ++i) {
    const int stride = static_cast<int>(i) < cfg.stride2_stages() ? 2 : 1;
    h = g.relu(g.conv2d(h, bp.values[enc_begin + 2 * i], bp.values[enc_begin + 2 * i + 1], stride, 1));
  }
  return h;
}

template <typename T, typename Bound>
Value run_decoder(Graph<T>& g, const Bound& bp, Value fused, const MimoConfig& cfg, int dec_begin) {
  Value h = fused;
  for (std::size_t i = 0; i < cfg.decoder_widths.size(); ++i) {
    h = g.relu(g.conv2d(h, bp.values[dec_begin + 2 * i], bp.values[dec_begin + 2 * i + 1], 1, 1));
    h = cfg.bilinear_upsample ? g.upsample_bilinear2x(h) : g.upsample_nearest2x(h);
  }
  return h;
}

}  // namespace

template <typename T>
MimoSegNet<T>::MimoSegNet(MimoConfig cfg, Rng init_rng) : cfg_(std::move(cfg)) {
  cfg_.validate();
  build_params(cfg_, store_, init_rng, true, &enc_end_, &dec_end_, &head1_end_, &head2_end_);
  dec_begin_ = enc_end_;
  head1_begin_ = dec_end_;
  head2_begin_ = head1_end_;
}

template <typename T>
typename MimoSegNet<T>::Bound MimoSegNet<T>::bind(Graph<T>& g, bool with_grad) const {
  Bound bp;
  bp.values.reserve(store_.size());
  for (const auto& p : store_.items) bp.values.push_back(g.leaf(p.value, with_grad));
  return bp;
}

template <typename T>
Value MimoSegNet<T>::encode(Graph<T>& g, const Bound& bp, Value x) {
  ++encoder_invocations_;
  return run_encoder<T>(g, bp, x, cfg_, enc_begin_);
}

template <typename T>
Value MimoSegNet<T>::decode(Graph<T>& g, const Bound& bp, Value fused) {
  return run_decoder<T>(g, bp, fused, cfg_, dec_begin_);
}

template <typename T>
Value MimoSegNet<T>::head(Graph<T>& g, const Bound& bp, int which, Value trunk) {
  ++head_invocations_;
  const int base = which == 1 ? head1_begin_ : head2_begin_;
  return g.conv2d(trunk, bp.values[base], bp.values[base + 1], 1, 0);
}

template <typename T>
typename MimoSegNet<T>::ForwardResult MimoSegNet<T>::forward(Graph<T>& g, const Bound& bp,
                                                             const Tensor<T>& x1, const Tensor<T>& x2,
                                                             Rng& rng) {
  require_same_shape(x1, x2, "MimoSegNet::forward");
  ++forward_count_;
  Value f1 = encode(g, bp, g.leaf(x1, false));
  Value f2 = encode(g, bp, g.leaf(x2, false));
  const Tensor<T>& feat = g.value(f1);
  ForwardResult r;
  r.mask = sample_grid_mask(feat.dim(2), feat.dim(3), cfg_.grid_size, rng);
  Value fused = cfg_.gridmix_fusion ? gridmix_node(g, f1, f2, r.mask) : g.add(f1, f2);
  Value trunk = decode(g, bp, fused);
  r.logits1 = head(g, bp, 1, trunk);
  r.logits2 = head(g, bp, 2, trunk);
  return r;
}

template <typename T>
Tensor<T> MimoSegNet<T>::forward_inference(const Tensor<T>& x) {
  Graph<T> g;
  Bound bp = bind(g, false);
  Rng rng(0);  // mask-independent path: both branch features coincide
  ForwardResult r = forward(g, bp, x, x, rng);
  Value avg = g.scale(g.add(g.softmax_channels(r.logits1), g.softmax_channels(r.logits2)), T(0.5));
  return g.value(avg);
}

template <typename T>
SingleSegNet<T>::SingleSegNet(MimoConfig cfg, Rng init_rng) : cfg_(std::move(cfg)) {
  cfg_.validate();
  int enc_end, dec_end, head1_end, head2_end;
  build_params(cfg_, store_, init_rng, false, &enc_end, &dec_end, &head1_end, &head2_end);
}

template <typename T>
typename SingleSegNet<T>::Bound SingleSegNet<T>::bind(Graph<T>& g, bool with_grad) const {
  Bound bp;
  bp.values.reserve(store_.size());
  for (const auto& p : store_.items) bp.values.push_back(g.leaf(p.value, with_grad));
  return bp;
}

template <typename T>
Value SingleSegNet<T>::forward(Graph<T>& g, const Bound& bp, const Tensor<T>& x) {
  ++forward_count_;
  const int enc_begin = 0;
  const int dec_begin = 2 * static_cast<int>(cfg_.encoder_widths.size());
  const int head_begin = dec_begin + 2 * static_cast<int>(cfg_.decoder_widths.size());
  Value f = run_encoder<T>(g, bp, g.leaf(x, false), cfg_, enc_begin);
  Value trunk = run_decoder<T>(g, bp, f, cfg_, dec_begin);
  return g.conv2d(trunk, bp.values[head_begin], bp.values[head_begin + 1], 1, 0);
}

template class MimoSegNet<float>;
template class MimoSegNet<double>;
template class SingleSegNet<float>;
template class SingleSegNet<double>;
template Tensor<float> gridmix(const Tensor<float>&, const Tensor<float>&, const GridMask&);
template Tensor<double> gridmix(const Tensor<double>&, const Tensor<double>&, const GridMask&);
template Tensor<float> summing_fusion(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> summing_fusion(const Tensor<double>&, const Tensor<double>&);
template Value gridmix_node(Graph<float>&, Value, Value, const GridMask&);
template Value gridmix_node(Graph<double>&, Value, Value, const GridMask&);
template Tensor<float> init_conv_kernel<float>(int, int, int, Rng&);
template Tensor<double> init_conv_kernel<double>(int, int, int, Rng&);

}  // namespace mimoseg
