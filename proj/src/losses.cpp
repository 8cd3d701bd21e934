#include "mimoseg/losses.hpp"

#include <stdexcept>

namespace mimoseg {

template <typename T>
Tensor<T> onehot_weights(const Tensor<std::int32_t>& labels, int num_classes,
                         const Tensor<T>* pixel_weights) {
  if (labels.ndim() != 3)
    throw std::invalid_argument("onehot_weights: labels must be N,H,W, got " + shape_str(labels.shape));
  if (pixel_weights && pixel_weights->shape != labels.shape)
    throw std::invalid_argument("onehot_weights: weights " + shape_str(pixel_weights->shape) +
                                " not aligned with labels " + shape_str(labels.shape));
  const int N = labels.dim(0), H = labels.dim(1), W = labels.dim(2);
  Tensor<T> out({N, num_classes, H, W});
  const std::int64_t hw = static_cast<std::int64_t>(H) * W;
  for (int n = 0; n < N; ++n)
    for (std::int64_t i = 0; i < hw; ++i) {
      const std::int32_t lab = labels.data[static_cast<size_t>(n * hw + i)];
      if (lab == kIgnoreLabel) continue;
      if (lab < 0 || lab >= num_classes)
        throw std::invalid_argument("onehot_weights: label " + std::to_string(lab) + " outside [0," +
                                    std::to_string(num_classes) + ")");
      out.data[static_cast<size_t>((n * num_classes + lab) * hw + i)] =
          pixel_weights ? pixel_weights->data[static_cast<size_t>(n * hw + i)] : T(1);
    }
  return out;
}

template <typename T>
Value ce_node(Graph<T>& g, Value logits, const Tensor<T>& class_weights) {
  Value nll = g.scale(g.log(g.softmax_channels(logits)), T(-1));
  return g.weighted_mean(nll, class_weights);
}

template <typename T>
Value sup_loss_node(Graph<T>& g, Value logits, const Tensor<std::int32_t>& labels, bool* all_ignored) {
  const Tensor<T>& lg = g.value(logits);
  Tensor<T> w = onehot_weights<T>(labels, lg.dim(1), nullptr);
  if (all_ignored) {
    bool any = false;
    for (std::int64_t i = 0; i < w.numel() && !any; ++i) any = w[i] != T(0);
    *all_ignored = !any;
  }
  return ce_node(g, logits, w);
}

template <typename T>
T sup_loss(const Tensor<T>& logits, const Tensor<std::int32_t>& labels, bool* all_ignored) {
  Graph<T> g;
  return g.value(sup_loss_node(g, g.leaf(logits, false), labels, all_ignored))[0];
}

template <typename T>
Value uscs_loss_node(Graph<T>& g, Value logits, const Tensor<std::int32_t>& pseudo, const Tensor<T>& w,
                     bool literal_norm, std::int64_t omega) {
  const Tensor<T>& lg = g.value(logits);
  Tensor<T> cw = onehot_weights<T>(pseudo, lg.dim(1), &w);
  Value weighted = ce_node(g, logits, cw);
  if (!literal_norm) return weighted;
  // sum(W*ce)/(|omega| * |sum W|) == weighted/|omega| whenever sum W > 0
  if (omega == 0) omega = static_cast<std::int64_t>(pseudo.numel());
  if (omega < 0) throw std::invalid_argument("uscs loss: negative region size");
  return g.scale(weighted, T(1) / static_cast<T>(omega));
}

template <typename T>
T uscs_loss(const Tensor<T>& logits, const Tensor<std::int32_t>& pseudo, const Tensor<T>& w,
            bool literal_norm, std::int64_t omega) {
  Graph<T> g;
  return g.value(uscs_loss_node(g, g.leaf(logits, false), pseudo, w, literal_norm, omega))[0];
}

template <typename T>
PseudoPair<T> make_pseudo(MimoSegNet<T>& model, const Tensor<T>& x_ul, const CutMixSpec& t1,
                          const CutMixSpec& t2, Rng& rng) {
  Graph<T> g;
  auto bp = model.bind(g, false);
  auto fr = model.forward(g, bp, x_ul, x_ul, rng);
  const Tensor<T> soft1 = g.value(g.softmax_channels(fr.logits1));
  const Tensor<T> soft2 = g.value(g.softmax_channels(fr.logits2));
  PseudoPair<T> p;
  p.dist1 = apply_cutmix(soft2, t1);  // head 2 teaches branch 1
  p.dist2 = apply_cutmix(soft1, t2);  // head 1 teaches branch 2
  p.hard1 = argmax_channels(p.dist1);
  p.hard2 = argmax_channels(p.dist2);
  p.raw1 = argmax_channels(soft1);
  p.raw2 = argmax_channels(soft2);
  return p;
}

template <typename T>
LossReport<T> total_loss(T sup1, T sup2, T uscs1, T uscs2, T lambda) {
  LossReport<T> r;
  r.sup1 = sup1;
  r.sup2 = sup2;
  r.uscs1 = uscs1;
  r.uscs2 = uscs2;
  r.lambda = lambda;
  r.total = sup1 + sup2 + lambda * (uscs1 + uscs2);
  return r;
}

template Tensor<float> onehot_weights(const Tensor<std::int32_t>&, int, const Tensor<float>*);
template Tensor<double> onehot_weights(const Tensor<std::int32_t>&, int, const Tensor<double>*);
template Value ce_node(Graph<float>&, Value, const Tensor<float>&);
template Value ce_node(Graph<double>&, Value, const Tensor<double>&);
template Value sup_loss_node(Graph<float>&, Value, const Tensor<std::int32_t>&, bool*);
template Value sup_loss_node(Graph<double>&, Value, const Tensor<std::int32_t>&, bool*);
template float sup_loss(const Tensor<float>&, const Tensor<std::int32_t>&, bool*);
template double sup_loss(const Tensor<double>&, const Tensor<std::int32_t>&, bool*);
template Value uscs_loss_node(Graph<float>&, Value, const Tensor<std::int32_t>&, const Tensor<float>&, bool,
                              std::int64_t);
template Value uscs_loss_node(Graph<double>&, Value, const Tensor<std::int32_t>&, const Tensor<double>&, bool,
                              std::int64_t);
template float uscs_loss(const Tensor<float>&, const Tensor<std::int32_t>&, const Tensor<float>&, bool,
                         std::int64_t);
template double uscs_loss(const Tensor<double>&, const Tensor<std::int32_t>&, const Tensor<double>&, bool,
                          std::int64_t);
template PseudoPair<float> make_pseudo(MimoSegNet<float>&, const Tensor<float>&, const CutMixSpec&,
                                       const CutMixSpec&, Rng&);
template PseudoPair<double> make_pseudo(MimoSegNet<double>&, const Tensor<double>&, const CutMixSpec&,
                                        const CutMixSpec&, Rng&);
template LossReport<float> total_loss(float, float, float, float, float);
template LossReport<double> total_loss(double, double, double, double, double);

}  // namespace mimoseg
