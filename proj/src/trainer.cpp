#include "mimoseg/trainer.hpp"

#include <chrono>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "mimoseg/uncertainty.hpp"

namespace mimoseg {

double poly_lr(double base, std::int64_t iter, std::int64_t max_iter) {
  if (max_iter < 1) throw std::invalid_argument("poly_lr: max_iter must be positive");
  if (iter < 0 || iter > max_iter)
    throw std::invalid_argument("poly_lr: iter " + std::to_string(iter) + " outside [0," +
                                std::to_string(max_iter) + "]");
  return base * std::pow(1.0 - static_cast<double>(iter) / static_cast<double>(max_iter), 0.9);
}

void StepOptions::validate() const {
  std::string problems;
  auto bad = [&problems](const std::string& p) {
    if (!problems.empty()) problems += "; ";
    problems += p;
  };
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) bad("lambda must be finite and >= 0");
  if (uncertainty && !(gamma > 0.0 && gamma <= 1.0)) bad("gamma must lie in (0,1]");
  if (!(base_lr > 0.0) || !std::isfinite(base_lr)) bad("base_lr must be finite and positive");
  if (!(head_lr_multiplier > 0.0)) bad("head_lr_multiplier must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) bad("momentum must lie in [0,1)");
  if (!(weight_decay >= 0.0)) bad("weight_decay must be >= 0");
  if (max_iterations < 1) bad("max_iterations must be positive");
  if (!problems.empty()) throw std::invalid_argument("step options invalid: " + problems);
}

template <typename T>
SgdState<T>::SgdState(const ParamStore<T>& store) {
  velocity.reserve(store.size());
  for (const auto& p : store.items) velocity.emplace_back(p.value.shape);
}

template <typename T>
bool sgd_step(ParamStore<T>& params, const std::vector<Tensor<T>>& grads, SgdState<T>& state,
              double lr_encoder, double lr_rest, double momentum, double weight_decay) {
  if (grads.size() != params.size() || state.velocity.size() != params.size())
    throw std::invalid_argument("sgd_step: gradient/state count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    require_same_shape(params[i].value, grads[i], "sgd_step");
    for (std::int64_t j = 0; j < grads[i].numel(); ++j)
      if (!std::isfinite(static_cast<double>(grads[i][j]))) return false;
  }
  const T mom = static_cast<T>(momentum);
  const T wd = static_cast<T>(weight_decay);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const T lr = static_cast<T>(params[i].group == ParamGroup::Encoder ? lr_encoder : lr_rest);
    Tensor<T>& p = params[i].value;
    Tensor<T>& v = state.velocity[i];
    const Tensor<T>& g = grads[i];
    for (std::int64_t j = 0; j < p.numel(); ++j) {
      v[j] = mom * v[j] + g[j] + wd * p[j];
      p[j] -= lr * v[j];
    }
  }
  return true;
}

namespace {

template <typename T>
double tensor_mean(const Tensor<T>& t) {
  double s = 0.0;
  for (std::int64_t i = 0; i < t.numel(); ++i) s += static_cast<double>(t[i]);
  return t.numel() == 0 ? 0.0 : s / static_cast<double>(t.numel());
}

template <typename T, typename Net>
std::vector<Tensor<T>> collect_grads(Graph<T>& g, const typename Net::Bound& bp) {
  std::vector<Tensor<T>> out;
  out.reserve(bp.values.size());
  for (Value v : bp.values) out.push_back(g.grad(v));
  return out;
}

}  // namespace

template <typename T>
StepMetrics train_iteration(MimoSegNet<T>& model, SgdState<T>& opt,
                            const typename GroupSampler<T>::Groups& groups, const StepOptions& opts,
                            std::int64_t iter, Rng& rng) {
  const auto t0 = std::chrono::steady_clock::now();
  opts.validate();
  StepMetrics m;
  m.iter = iter;
  m.lr = poly_lr(opts.base_lr, iter, opts.max_iterations);
  const int num_classes = model.config().num_classes;
  const bool sup_only = opts.supervised_only || opts.lambda == 0.0 || !groups.has_unlabeled;

  Graph<T> g;
  auto bp = model.bind(g, true);
  Value loss;
  if (sup_only) {
    auto fw = model.forward(g, bp, groups.xl1, groups.xl2, rng);
    Value s1 = sup_loss_node(g, fw.logits1, groups.yl1);
    Value s2 = sup_loss_node(g, fw.logits2, groups.yl2);
    m.sup1 = static_cast<double>(g.value(s1)[0]);
    m.sup2 = static_cast<double>(g.value(s2)[0]);
    loss = g.add(s1, s2);
  } else {
    PseudoPair<T> p = make_pseudo(model, groups.x_ul, groups.t1, groups.t2, rng);
    Tensor<T> w1, w2;
    if (opts.uncertainty) {
      const T gamma = static_cast<T>(opts.gamma);
      w1 = weight_mask(confidence(shannon_entropy(p.dist1), num_classes), gamma).w;
      w2 = weight_mask(confidence(shannon_entropy(p.dist2), num_classes), gamma).w;
    } else {
      w1 = Tensor<T>(p.hard1.shape, T(1));
      w2 = Tensor<T>(p.hard2.shape, T(1));
    }
    m.mean_w = 0.5 * (tensor_mean(w1) + tensor_mean(w2));
    m.non_overlap = non_overlap_ratio(p.raw1, p.raw2);

    auto fw = model.forward(g, bp, concat_batch(groups.xl1, groups.x_ul_t1),
                            concat_batch(groups.xl2, groups.x_ul_t2), rng);

    // labeled half carries the true labels, unlabeled half is ignored there
    Tensor<std::int32_t> pad_ul({groups.x_ul_t1.shape[0], groups.yl1.shape[1], groups.yl1.shape[2]},
                                kIgnoreLabel);
    Value s1 = sup_loss_node(g, fw.logits1, concat_batch(groups.yl1, pad_ul));
    Value s2 = sup_loss_node(g, fw.logits2, concat_batch(groups.yl2, pad_ul));

    // pseudo targets live only on the unlabeled half; the labeled half gets
    // ignore labels and zero weights, which the loss treats identically
    Tensor<std::int32_t> pad_l(groups.yl1.shape, kIgnoreLabel);
    Tensor<T> zero_l(groups.yl1.shape, T(0));
    const std::int64_t omega = opts.literal_norm ? p.hard1.numel() : 0;
    Value u1 = uscs_loss_node(g, fw.logits1, concat_batch(pad_l, p.hard1),
                              concat_batch(zero_l, w1), opts.literal_norm, omega);
    Value u2 = uscs_loss_node(g, fw.logits2, concat_batch(pad_l, p.hard2),
                              concat_batch(zero_l, w2), opts.literal_norm, omega);
    m.sup1 = static_cast<double>(g.value(s1)[0]);
    m.sup2 = static_cast<double>(g.value(s2)[0]);
    m.uscs1 = static_cast<double>(g.value(u1)[0]);
    m.uscs2 = static_cast<double>(g.value(u2)[0]);
    loss = g.add(g.add(s1, s2), g.scale(g.add(u1, u2), static_cast<T>(opts.lambda)));
  }

  m.total = static_cast<double>(g.value(loss)[0]);
  if (!std::isfinite(m.total))
    throw std::runtime_error("train_iteration: non-finite loss at iteration " +
                             std::to_string(iter));
  g.backward(loss);
  auto grads = collect_grads<T, MimoSegNet<T>>(g, bp);
  m.step_ok = sgd_step(model.store(), grads, opt, m.lr, m.lr * opts.head_lr_multiplier,
                       opts.momentum, opts.weight_decay);
  m.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return m;
}

template <typename T>
EvalResult evaluate(MimoSegNet<T>& model, const Dataset& ds, const std::vector<int>& indices) {
  if (indices.empty()) throw std::invalid_argument("evaluate: empty index set");
  const MimoConfig& cfg = model.config();
  if (ds.spec().canvas != cfg.height || ds.spec().canvas != cfg.width ||
      ds.spec().channels != cfg.in_channels || ds.spec().num_classes != cfg.num_classes)
    throw std::invalid_argument("evaluate: dataset geometry does not match the model");

  ConfusionMatrix cm(cfg.num_classes);
  std::int64_t disagree = 0, pixels = 0;
  Rng rng(0);  // fusion mask is irrelevant with identical branch inputs
  for (int id : indices) {
    Scene sc = ds.scene(id);
    Tensor<T> x({1, cfg.in_channels, cfg.height, cfg.width});
    for (std::int64_t i = 0; i < sc.image.numel(); ++i) x[i] = static_cast<T>(sc.image[i]);
    Graph<T> g;
    auto bp = model.bind(g, false);
    auto fw = model.forward(g, bp, x, x, rng);
    Value s1 = g.softmax_channels(fw.logits1);
    Value s2 = g.softmax_channels(fw.logits2);
    Tensor<std::int32_t> pred = argmax_channels(g.value(g.scale(g.add(s1, s2), T(0.5))));
    Tensor<std::int32_t> b1 = argmax_channels(g.value(s1));
    Tensor<std::int32_t> b2 = argmax_channels(g.value(s2));
    Tensor<std::int32_t> y({1, cfg.height, cfg.width});
    y.data = sc.label.data;
    cm.add(y, pred);
    for (std::int64_t i = 0; i < b1.numel(); ++i)
      if (b1[i] != b2[i]) ++disagree;
    pixels += b1.numel();
  }
  EvalResult r;
  r.confusion = cm;
  r.per_class = cm.per_class_iou();
  r.miou = cm.miou();
  r.branch_non_overlap = static_cast<double>(disagree) / static_cast<double>(pixels);
  return r;
}

namespace {

// one cross-supervised student update: supervised CE on the labeled half,
// plain pseudo CE on the transformed unlabeled half
template <typename T>
void cps_student_update(SingleSegNet<T>& net, SgdState<T>& opt, const Tensor<T>& xl,
                        const Tensor<std::int32_t>& yl, const Tensor<T>& x_ul_t,
                        const Tensor<std::int32_t>& pseudo, const StepOptions& opts, double lr,
                        double& sup_out, double& uscs_out, bool& ok) {
  Graph<T> g;
  auto bp = net.bind(g, true);
  Value logits = net.forward(g, bp, concat_batch(xl, x_ul_t));
  Tensor<std::int32_t> pad_ul({x_ul_t.shape[0], yl.shape[1], yl.shape[2]}, kIgnoreLabel);
  Tensor<std::int32_t> pad_l(yl.shape, kIgnoreLabel);
  Tensor<T> zero_l(yl.shape, T(0));
  Tensor<T> unit_ul(pseudo.shape, T(1));
  Value s = sup_loss_node(g, logits, concat_batch(yl, pad_ul));
  Value u = uscs_loss_node(g, logits, concat_batch(pad_l, pseudo), concat_batch(zero_l, unit_ul));
  Value loss = g.add(s, g.scale(u, static_cast<T>(opts.lambda)));
  sup_out = static_cast<double>(g.value(s)[0]);
  uscs_out = static_cast<double>(g.value(u)[0]);
  if (!std::isfinite(static_cast<double>(g.value(loss)[0])))
    throw std::runtime_error("cps_reference_step: non-finite loss");
  g.backward(loss);
  auto grads = collect_grads<T, SingleSegNet<T>>(g, bp);
  ok = sgd_step(net.store(), grads, opt, lr, lr * opts.head_lr_multiplier, opts.momentum,
                opts.weight_decay);
}

}  // namespace

template <typename T>
StepMetrics cps_reference_step(SingleSegNet<T>& net1, SingleSegNet<T>& net2, SgdState<T>& opt1,
                               SgdState<T>& opt2, const typename GroupSampler<T>::Groups& groups,
                               const StepOptions& opts, std::int64_t iter) {
  const auto t0 = std::chrono::steady_clock::now();
  opts.validate();
  if (!groups.has_unlabeled)
    throw std::invalid_argument("cps_reference_step: needs an unlabeled batch");
  StepMetrics m;
  m.iter = iter;
  m.lr = poly_lr(opts.base_lr, iter, opts.max_iterations);

  Tensor<T> soft1, soft2;
  {
    Graph<T> g;
    auto bp = net1.bind(g, false);
    soft1 = g.value(g.softmax_channels(net1.forward(g, bp, groups.x_ul)));
  }
  {
    Graph<T> g;
    auto bp = net2.bind(g, false);
    soft2 = g.value(g.softmax_channels(net2.forward(g, bp, groups.x_ul)));
  }
  m.non_overlap = non_overlap_ratio(argmax_channels(soft1), argmax_channels(soft2));
  Tensor<std::int32_t> pseudo1 = argmax_channels(apply_cutmix(soft2, groups.t1));
  Tensor<std::int32_t> pseudo2 = argmax_channels(apply_cutmix(soft1, groups.t2));

  bool ok1 = false, ok2 = false;
  cps_student_update(net1, opt1, groups.xl1, groups.yl1, groups.x_ul_t1, pseudo1, opts, m.lr,
                     m.sup1, m.uscs1, ok1);
  cps_student_update(net2, opt2, groups.xl2, groups.yl2, groups.x_ul_t2, pseudo2, opts, m.lr,
                     m.sup2, m.uscs2, ok2);
  m.step_ok = ok1 && ok2;
  m.total = m.sup1 + m.sup2 + opts.lambda * (m.uscs1 + m.uscs2);
  m.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return m;
}

template <typename T>
StepMetrics sup_reference_step(SingleSegNet<T>& net, SgdState<T>& opt,
                               const typename GroupSampler<T>::Groups& groups,
                               const StepOptions& opts, std::int64_t iter) {
  const auto t0 = std::chrono::steady_clock::now();
  opts.validate();
  StepMetrics m;
  m.iter = iter;
  m.lr = poly_lr(opts.base_lr, iter, opts.max_iterations);
  Graph<T> g;
  auto bp = net.bind(g, true);
  Value logits = net.forward(g, bp, groups.xl1);
  Value loss = sup_loss_node(g, logits, groups.yl1);
  m.sup1 = static_cast<double>(g.value(loss)[0]);
  m.total = m.sup1;
  if (!std::isfinite(m.total)) throw std::runtime_error("sup_reference_step: non-finite loss");
  g.backward(loss);
  auto grads = collect_grads<T, SingleSegNet<T>>(g, bp);
  m.step_ok = sgd_step(net.store(), grads, opt, m.lr, m.lr * opts.head_lr_multiplier, opts.momentum,
                       opts.weight_decay);
  m.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return m;
}

template struct SgdState<float>;
template struct SgdState<double>;
template bool sgd_step(ParamStore<float>&, const std::vector<Tensor<float>>&, SgdState<float>&,
                       double, double, double, double);
template bool sgd_step(ParamStore<double>&, const std::vector<Tensor<double>>&, SgdState<double>&,
                       double, double, double, double);
template StepMetrics train_iteration(MimoSegNet<float>&, SgdState<float>&,
                                     const GroupSampler<float>::Groups&, const StepOptions&,
                                     std::int64_t, Rng&);
template StepMetrics train_iteration(MimoSegNet<double>&, SgdState<double>&,
                                     const GroupSampler<double>::Groups&, const StepOptions&,
                                     std::int64_t, Rng&);
template EvalResult evaluate(MimoSegNet<float>&, const Dataset&, const std::vector<int>&);
template EvalResult evaluate(MimoSegNet<double>&, const Dataset&, const std::vector<int>&);
template StepMetrics cps_reference_step(SingleSegNet<float>&, SingleSegNet<float>&,
                                        SgdState<float>&, SgdState<float>&,
                                        const GroupSampler<float>::Groups&, const StepOptions&,
                                        std::int64_t);
template StepMetrics cps_reference_step(SingleSegNet<double>&, SingleSegNet<double>&,
                                        SgdState<double>&, SgdState<double>&,
                                        const GroupSampler<double>::Groups&, const StepOptions&,
                                        std::int64_t);
template StepMetrics sup_reference_step(SingleSegNet<float>&, SgdState<float>&,
                                        const GroupSampler<float>::Groups&, const StepOptions&,
                                        std::int64_t);
template StepMetrics sup_reference_step(SingleSegNet<double>&, SgdState<double>&,
                                        const GroupSampler<double>::Groups&, const StepOptions&,
                                        std::int64_t);

}  // namespace mimoseg
