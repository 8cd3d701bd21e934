#include "mimoseg/config.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

namespace mimoseg {

namespace {

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

bool parse_double(const std::string& s, double* out) {
  if (s.empty()) return false;
  errno = 0;
  char* end = nullptr;
  double v = std::strtod(s.c_str(), &end);
  if (errno != 0 || end != s.c_str() + s.size() || !std::isfinite(v)) return false;
  *out = v;
  return true;
}

bool parse_i64(const std::string& s, std::int64_t* out) {
  if (s.empty()) return false;
  errno = 0;
  char* end = nullptr;
  long long v = std::strtoll(s.c_str(), &end, 10);
  if (errno != 0 || end != s.c_str() + s.size()) return false;
  *out = v;
  return true;
}

bool parse_u64(const std::string& s, std::uint64_t* out) {
  if (s.empty() || s[0] == '-') return false;
  errno = 0;
  char* end = nullptr;
  unsigned long long v = std::strtoull(s.c_str(), &end, 10);
  if (errno != 0 || end != s.c_str() + s.size()) return false;
  *out = v;
  return true;
}

bool parse_int(const std::string& s, int* out) {
  std::int64_t v;
  if (!parse_i64(s, &v) || v < INT32_MIN || v > INT32_MAX) return false;
  *out = static_cast<int>(v);
  return true;
}

bool parse_bool(const std::string& s, bool* out) {
  if (s == "true") {
    *out = true;
    return true;
  }
  if (s == "false") {
    *out = false;
    return true;
  }
  return false;
}

bool parse_int_list(const std::string& s, std::vector<int>* out) {
  std::vector<int> vals;
  std::string item;
  std::stringstream ss(s);
  while (std::getline(ss, item, ',')) {
    int v;
    if (!parse_int(trim(item), &v)) return false;
    vals.push_back(v);
  }
  if (vals.empty()) return false;
  *out = std::move(vals);
  return true;
}

std::string fmt_int_list(const std::vector<int>& v) {
  std::string s;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(v[i]);
  }
  return s;
}

struct KeySpec {
  const char* key;
  std::function<std::string(const RunConfig&)> get;
  std::function<bool(RunConfig&, const std::string&)> set;
};

const std::vector<KeySpec>& registry() {
  auto str_field = [](std::string RunConfig::* f) {
    return KeySpec{nullptr, [f](const RunConfig& c) { return c.*f; },
                   [f](RunConfig& c, const std::string& v) {
                     if (v.empty()) return false;
                     c.*f = v;
                     return true;
                   }};
  };
  auto int_field = [](int RunConfig::* f) {
    return KeySpec{nullptr, [f](const RunConfig& c) { return std::to_string(c.*f); },
                   [f](RunConfig& c, const std::string& v) { return parse_int(v, &(c.*f)); }};
  };
  auto i64_field = [](std::int64_t RunConfig::* f) {
    return KeySpec{nullptr, [f](const RunConfig& c) { return std::to_string(c.*f); },
                   [f](RunConfig& c, const std::string& v) { return parse_i64(v, &(c.*f)); }};
  };
  auto u64_field = [](std::uint64_t RunConfig::* f) {
    return KeySpec{nullptr, [f](const RunConfig& c) { return std::to_string(c.*f); },
                   [f](RunConfig& c, const std::string& v) { return parse_u64(v, &(c.*f)); }};
  };
  auto dbl_field = [](double RunConfig::* f) {
    return KeySpec{nullptr, [f](const RunConfig& c) { return fmt_double(c.*f); },
                   [f](RunConfig& c, const std::string& v) { return parse_double(v, &(c.*f)); }};
  };
  auto bool_field = [](bool RunConfig::* f) {
    return KeySpec{nullptr, [f](const RunConfig& c) { return std::string(c.*f ? "true" : "false"); },
                   [f](RunConfig& c, const std::string& v) { return parse_bool(v, &(c.*f)); }};
  };
  auto list_field = [](std::vector<int> RunConfig::* f) {
    return KeySpec{nullptr, [f](const RunConfig& c) { return fmt_int_list(c.*f); },
                   [f](RunConfig& c, const std::string& v) { return parse_int_list(v, &(c.*f)); }};
  };
  auto named = [](const char* key, KeySpec spec) {
    spec.key = key;
    return spec;
  };

  static const std::vector<KeySpec> keys = {
      named("precision", str_field(&RunConfig::precision)),
      named("seed", u64_field(&RunConfig::seed)),
      named("run_name", str_field(&RunConfig::run_name)),
      named("data.canvas", int_field(&RunConfig::data_canvas)),
      named("data.channels", int_field(&RunConfig::data_channels)),
      named("data.classes", int_field(&RunConfig::data_classes)),
      named("data.shapes_min", int_field(&RunConfig::data_shapes_min)),
      named("data.shapes_max", int_field(&RunConfig::data_shapes_max)),
      named("data.noise", dbl_field(&RunConfig::data_noise)),
      named("data.jitter", dbl_field(&RunConfig::data_jitter)),
      named("data.min_color_confusion", dbl_field(&RunConfig::data_min_color_confusion)),
      named("data.count", int_field(&RunConfig::data_count)),
      named("data.val_count", int_field(&RunConfig::data_val_count)),
      named("data.partition", dbl_field(&RunConfig::data_partition)),
      named("model.encoder", list_field(&RunConfig::model_encoder)),
      named("model.decoder", list_field(&RunConfig::model_decoder)),
      named("model.grid", int_field(&RunConfig::model_grid)),
      named("model.fusion", str_field(&RunConfig::model_fusion)),
      named("model.bilinear", bool_field(&RunConfig::model_bilinear)),
      named("train.lambda", dbl_field(&RunConfig::train_lambda)),
      named("train.gamma", dbl_field(&RunConfig::train_gamma)),
      named("train.uncertainty", bool_field(&RunConfig::train_uncertainty)),
      named("train.literal_norm", bool_field(&RunConfig::train_literal_norm)),
      named("train.supervised_only", bool_field(&RunConfig::train_supervised_only)),
      named("train.rho", dbl_field(&RunConfig::train_rho)),
      named("train.batch", int_field(&RunConfig::train_batch)),
      named("train.iterations", i64_field(&RunConfig::train_iterations)),
      named("train.base_lr", dbl_field(&RunConfig::train_base_lr)),
      named("train.head_lr_multiplier", dbl_field(&RunConfig::train_head_lr_multiplier)),
      named("train.momentum", dbl_field(&RunConfig::train_momentum)),
      named("train.weight_decay", dbl_field(&RunConfig::train_weight_decay)),
      named("train.augment", bool_field(&RunConfig::train_augment)),
      named("train.aug_flip", dbl_field(&RunConfig::train_aug_flip)),
      named("train.aug_scale_min", dbl_field(&RunConfig::train_aug_scale_min)),
      named("train.aug_scale_max", dbl_field(&RunConfig::train_aug_scale_max)),
      named("train.eval_every", i64_field(&RunConfig::train_eval_every)),
      named("train.checkpoint_every", i64_field(&RunConfig::train_checkpoint_every)),
      named("train.log_every", i64_field(&RunConfig::train_log_every)),
  };
  return keys;
}

const KeySpec* find_key(const std::string& key) {
  for (const auto& k : registry())
    if (key == k.key) return &k;
  return nullptr;
}

// applies assignments, returning the offending descriptions (empty = all good)
std::vector<std::string> apply_assignments(RunConfig& cfg,
                                           const std::vector<std::pair<std::string, std::string>>& kvs,
                                           bool reject_duplicates) {
  std::vector<std::string> offending;
  std::vector<std::string> seen;
  for (const auto& [key, value] : kvs) {
    const KeySpec* spec = find_key(key);
    if (!spec) {
      offending.push_back(key + " (unknown key)");
      continue;
    }
    if (reject_duplicates) {
      bool dup = false;
      for (const auto& s : seen) dup = dup || s == key;
      if (dup) {
        offending.push_back(key + " (duplicate key)");
        continue;
      }
      seen.push_back(key);
    }
    if (!spec->set(cfg, value)) offending.push_back(key + " (unparseable value '" + value + "')");
  }
  return offending;
}

void throw_offending(const std::vector<std::string>& offending, const std::string& what) {
  if (offending.empty()) return;
  std::string msg = what + ":";
  for (const auto& o : offending) msg += "\n  " + o;
  throw std::invalid_argument(msg);
}

}  // namespace

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& k : registry()) out.push_back(k.key);
  return out;
}

RunConfig parse_config_text(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> kvs;
  std::vector<std::string> offending;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos) {
      offending.push_back("line " + std::to_string(lineno) + " (missing '=': '" + line + "')");
      continue;
    }
    kvs.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  RunConfig cfg;
  auto more = apply_assignments(cfg, kvs, true);
  offending.insert(offending.end(), more.begin(), more.end());
  throw_offending(offending, "config rejected");
  return cfg;
}

RunConfig parse_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::invalid_argument("config file not readable: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config_text(ss.str());
}

std::string serialize_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& k : registry()) {
    out += k.key;
    out += " = ";
    out += k.get(cfg);
    out += "\n";
  }
  return out;
}

void apply_overrides(RunConfig& cfg, const std::vector<std::string>& overrides) {
  std::vector<std::pair<std::string, std::string>> kvs;
  std::vector<std::string> offending;
  for (const auto& o : overrides) {
    size_t eq = o.find('=');
    if (eq == std::string::npos) {
      offending.push_back(o + " (missing '=')");
      continue;
    }
    kvs.emplace_back(trim(o.substr(0, eq)), trim(o.substr(eq + 1)));
  }
  auto more = apply_assignments(cfg, kvs, false);
  offending.insert(offending.end(), more.begin(), more.end());
  throw_offending(offending, "overrides rejected");
}

SceneSpec RunConfig::to_scene_spec() const {
  SceneSpec sp;
  sp.canvas = data_canvas;
  sp.channels = data_channels;
  sp.num_classes = data_classes;
  sp.shapes_min = data_shapes_min;
  sp.shapes_max = data_shapes_max;
  sp.noise_amplitude = data_noise;
  sp.color_jitter = data_jitter;
  sp.min_color_confusion = data_min_color_confusion;
  return sp;
}

MimoConfig RunConfig::to_mimo_config() const {
  MimoConfig m;
  m.in_channels = data_channels;
  m.num_classes = data_classes;
  m.encoder_widths = model_encoder;
  m.decoder_widths = model_decoder;
  m.grid_size = model_grid;
  m.gridmix_fusion = model_fusion == "gridmix";
  m.bilinear_upsample = model_bilinear;
  m.height = data_canvas;
  m.width = data_canvas;
  return m;
}

AugmentConfig RunConfig::to_augment_config() const {
  AugmentConfig a;
  a.crop = data_canvas;  // branch batches concatenate with full-size unlabeled images
  a.flip_prob = train_aug_flip;
  a.scale_min = train_aug_scale_min;
  a.scale_max = train_aug_scale_max;
  return a;
}

StepOptions RunConfig::to_step_options() const {
  StepOptions o;
  o.lambda = train_lambda;
  o.gamma = train_gamma;
  o.uncertainty = train_uncertainty;
  o.literal_norm = train_literal_norm;
  o.supervised_only = train_supervised_only;
  o.base_lr = train_base_lr;
  o.head_lr_multiplier = train_head_lr_multiplier;
  o.momentum = train_momentum;
  o.weight_decay = train_weight_decay;
  o.max_iterations = train_iterations;
  return o;
}

void RunConfig::validate() const {
  std::vector<std::string> problems;
  auto bad = [&problems](const std::string& p) { problems.push_back(p); };

  if (precision != "f64" && precision != "f32") bad("precision must be f64 or f32");
  if (run_name.empty() || run_name.find('/') != std::string::npos)
    bad("run_name must be a non-empty path component");
  if (model_fusion != "gridmix" && model_fusion != "summing")
    bad("model.fusion must be gridmix or summing");
  if (data_count < 2) bad("data.count must be at least 2");
  if (data_val_count < 1) bad("data.val_count must be positive");
  if (!(data_partition > 0.0 && data_partition < 1.0)) bad("data.partition must lie in (0,1)");
  if (data_shapes_min < 0 || data_shapes_max < data_shapes_min)
    bad("data.shapes_min..data.shapes_max must be a valid range");
  if (data_noise < 0.0 || data_jitter < 0.0) bad("data.noise and data.jitter must be >= 0");
  if (data_min_color_confusion < 0.0) bad("data.min_color_confusion must be >= 0");
  if (train_batch < 1) bad("train.batch must be positive");
  if (!(train_rho >= 0.0 && train_rho <= 1.0)) bad("train.rho must lie in [0,1]");
  if (!(train_aug_flip >= 0.0 && train_aug_flip <= 1.0)) bad("train.aug_flip must lie in [0,1]");
  if (!(train_aug_scale_min > 0.0 && train_aug_scale_max >= train_aug_scale_min))
    bad("train.aug_scale_min..train.aug_scale_max must be a positive range");
  if (train_eval_every < 1 || train_checkpoint_every < 1 || train_log_every < 1)
    bad("train.eval_every, train.checkpoint_every and train.log_every must be positive");

  const int labeled = static_cast<int>(std::lround(data_count * data_partition));
  if (labeled < train_batch) bad("labeled pool smaller than train.batch at this partition");
  const bool uses_unlabeled = !train_supervised_only && train_lambda > 0.0;
  if (uses_unlabeled && data_count - labeled < train_batch)
    bad("unlabeled pool smaller than train.batch at this partition");

  try {
    to_mimo_config().validate();
  } catch (const std::exception& e) {
    bad(e.what());
  }
  try {
    to_step_options().validate();
  } catch (const std::exception& e) {
    bad(e.what());
  }

  if (!problems.empty()) {
    std::string msg = "config invalid:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw std::invalid_argument(msg);
  }
}

}  // namespace mimoseg
