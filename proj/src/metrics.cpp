#include "mimoseg/metrics.hpp"

#include <stdexcept>

namespace mimoseg {

ConfusionMatrix::ConfusionMatrix(int c) : num_classes(c) {
  if (c < 1) throw std::invalid_argument("confusion matrix needs at least one class");
  counts.assign(static_cast<size_t>(c) * c, 0);
}

void ConfusionMatrix::add(const Tensor<std::int32_t>& truth, const Tensor<std::int32_t>& pred) {
  require_same_shape(truth, pred, "confusion add");
  for (size_t i = 0; i < truth.data.size(); ++i) {
    int t = truth.data[i];
    if (t < 0) continue;
    int p = pred.data[i];
    if (t >= num_classes || p < 0 || p >= num_classes)
      throw std::invalid_argument("confusion add: label outside [0," + std::to_string(num_classes) + ")");
    ++at(t, p);
  }
}

void ConfusionMatrix::merge(const ConfusionMatrix& o) {
  if (o.num_classes != num_classes) throw std::invalid_argument("confusion merge: class count mismatch");
  for (size_t i = 0; i < counts.size(); ++i) counts[i] += o.counts[i];
}

std::int64_t ConfusionMatrix::total() const {
  std::int64_t s = 0;
  for (auto v : counts) s += v;
  return s;
}

double ConfusionMatrix::iou(int c) const {
  std::int64_t tp = at(c, c);
  std::int64_t fn = 0, fp = 0;
  for (int j = 0; j < num_classes; ++j) {
    if (j == c) continue;
    fn += at(c, j);
    fp += at(j, c);
  }
  std::int64_t denom = tp + fp + fn;
  if (denom == 0) return 0.0;
  return static_cast<double>(tp) / static_cast<double>(denom);
}

std::vector<double> ConfusionMatrix::per_class_iou() const {
  std::vector<double> out(static_cast<size_t>(num_classes));
  for (int c = 0; c < num_classes; ++c) out[static_cast<size_t>(c)] = iou(c);
  return out;
}

double ConfusionMatrix::miou() const {
  double sum = 0.0;
  int present = 0;
  for (int c = 0; c < num_classes; ++c) {
    std::int64_t truth_px = 0;
    for (int j = 0; j < num_classes; ++j) truth_px += at(c, j);
    if (truth_px == 0) continue;
    sum += iou(c);
    ++present;
  }
  if (present == 0) return 0.0;
  return sum / present;
}

double non_overlap_ratio(const Tensor<std::int32_t>& a, const Tensor<std::int32_t>& b) {
  require_same_shape(a, b, "non_overlap_ratio");
  if (a.data.empty()) throw std::invalid_argument("non_overlap_ratio: empty maps");
  std::int64_t diff = 0;
  for (size_t i = 0; i < a.data.size(); ++i)
    if (a.data[i] != b.data[i]) ++diff;
  return static_cast<double>(diff) / static_cast<double>(a.data.size());
}

std::int64_t conv_macs_count(std::int64_t cout, std::int64_t cin, std::int64_t k, std::int64_t hout,
                             std::int64_t wout) {
  return cout * cin * k * k * hout * wout;
}

namespace {

struct Plan {
  std::vector<LayerCost> enc, dec;
  LayerCost head;
};

// mirrors the network builder: encoder 3x3 stages (stride 2 for the first
// len(decoder) stages), decoder 3x3 stages each followed by 2x upsampling,
// then a 1x1 head at full resolution
Plan plan_of(const MimoConfig& cfg) {
  cfg.validate();
  Plan p;
  std::int64_t h = cfg.height, w = cfg.width;
  std::int64_t cin = cfg.in_channels;
  int s2 = cfg.stride2_stages();
  for (size_t i = 0; i < cfg.encoder_widths.size(); ++i) {
    std::int64_t cout = cfg.encoder_widths[i];
    if (static_cast<int>(i) < s2) {
      h /= 2;
      w /= 2;
    }
    p.enc.push_back({"enc" + std::to_string(i), conv_macs_count(cout, cin, 3, h, w)});
    cin = cout;
  }
  for (size_t i = 0; i < cfg.decoder_widths.size(); ++i) {
    std::int64_t cout = cfg.decoder_widths[i];
    p.dec.push_back({"dec" + std::to_string(i), conv_macs_count(cout, cin, 3, h, w)});
    cin = cout;
    h *= 2;
    w *= 2;
  }
  p.head = {"head", conv_macs_count(cfg.num_classes, cin, 1, h, w)};
  return p;
}

std::int64_t sum(const std::vector<LayerCost>& v) {
  std::int64_t s = 0;
  for (const auto& l : v) s += l.macs;
  return s;
}

}  // namespace

std::vector<LayerCost> layer_macs(const MimoConfig& cfg) {
  Plan p = plan_of(cfg);
  std::vector<LayerCost> out = p.enc;
  out.insert(out.end(), p.dec.begin(), p.dec.end());
  out.push_back(p.head);
  return out;
}

std::int64_t macs_encoder(const MimoConfig& cfg) { return sum(plan_of(cfg).enc); }
std::int64_t macs_decoder(const MimoConfig& cfg) { return sum(plan_of(cfg).dec); }
std::int64_t macs_head(const MimoConfig& cfg) { return plan_of(cfg).head.macs; }

std::int64_t macs_single_forward(const MimoConfig& cfg, int batch) {
  return batch * (macs_encoder(cfg) + macs_decoder(cfg) + macs_head(cfg));
}

std::int64_t macs_mimo_forward(const MimoConfig& cfg, int batch) {
  return batch * (2 * macs_encoder(cfg) + macs_decoder(cfg) + 2 * macs_head(cfg));
}

namespace {

std::int64_t conv_params(std::int64_t cout, std::int64_t cin, std::int64_t k) {
  return cout * cin * k * k + cout;  // weights + bias
}

std::int64_t trunk_params(const MimoConfig& cfg) {
  std::int64_t total = 0;
  std::int64_t cin = cfg.in_channels;
  for (int wdt : cfg.encoder_widths) {
    total += conv_params(wdt, cin, 3);
    cin = wdt;
  }
  for (int wdt : cfg.decoder_widths) {
    total += conv_params(wdt, cin, 3);
    cin = wdt;
  }
  return total;
}

std::int64_t head_params(const MimoConfig& cfg) {
  return conv_params(cfg.num_classes, cfg.decoder_widths.back(), 1);
}

}  // namespace

std::int64_t params_single(const MimoConfig& cfg) {
  cfg.validate();
  return trunk_params(cfg) + head_params(cfg);
}

std::int64_t params_mimo(const MimoConfig& cfg) {
  cfg.validate();
  return trunk_params(cfg) + 2 * head_params(cfg);
}

CostReport cost_report(const MimoConfig& cfg, int batch) {
  if (batch < 1) throw std::invalid_argument("cost report: batch must be positive");
  CostReport r;
  r.params_sup = params_single(cfg);
  r.params_cps = 2 * params_single(cfg);
  r.params_uscs = params_mimo(cfg);
  std::int64_t fs_b = macs_single_forward(cfg, batch);
  std::int64_t fs_2b = macs_single_forward(cfg, 2 * batch);
  std::int64_t fm_b = macs_mimo_forward(cfg, batch);
  std::int64_t fm_2b = macs_mimo_forward(cfg, 2 * batch);
  r.iter_macs_sup = fs_b;
  r.iter_macs_cps = 2 * fs_b + 2 * fs_2b;
  r.iter_macs_uscs = fm_b + fm_2b;
  r.param_ratio = static_cast<double>(r.params_uscs) / static_cast<double>(r.params_cps);
  r.macs_ratio = static_cast<double>(r.iter_macs_uscs) / static_cast<double>(r.iter_macs_cps);
  return r;
}

}  // namespace mimoseg
