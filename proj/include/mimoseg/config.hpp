#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mimoseg/data_synth.hpp"
#include "mimoseg/model.hpp"
#include "mimoseg/trainer.hpp"
#include "mimoseg/transforms.hpp"

namespace mimoseg {

// Flat key=value run configuration. Every key has a default, so an empty
// file is a valid config; parsing rejects unknown, duplicate, or
// unparseable keys with the complete offending list in one exception.
struct RunConfig {
  // run
  std::string precision = "f64";  // f64 | f32
  std::uint64_t seed = 1;
  std::string run_name = "run";

  // data
  int data_canvas = 64;
  int data_channels = 3;
  int data_classes = 4;
  int data_shapes_min = 2;
  int data_shapes_max = 5;
  double data_noise = 0.25;
  double data_jitter = 0.25;
  double data_min_color_confusion = 0.05;
  int data_count = 2048;
  int data_val_count = 128;
  double data_partition = 0.125;

  // model
  std::vector<int> model_encoder = {16, 32, 64};
  std::vector<int> model_decoder = {32, 16};
  int model_grid = 1;
  std::string model_fusion = "gridmix";  // gridmix | summing
  bool model_bilinear = false;

  // training
  double train_lambda = 1.0;
  double train_gamma = 0.5;
  bool train_uncertainty = true;
  bool train_literal_norm = false;
  bool train_supervised_only = false;
  double train_rho = 0.4;
  int train_batch = 4;
  std::int64_t train_iterations = 3000;
  double train_base_lr = 0.01;
  double train_head_lr_multiplier = 10.0;
  double train_momentum = 0.9;
  double train_weight_decay = 1e-4;
  bool train_augment = true;
  double train_aug_flip = 0.5;
  double train_aug_scale_min = 0.5;
  double train_aug_scale_max = 2.0;
  std::int64_t train_eval_every = 500;
  std::int64_t train_checkpoint_every = 1000;
  std::int64_t train_log_every = 1;

  SceneSpec to_scene_spec() const;
  MimoConfig to_mimo_config() const;
  AugmentConfig to_augment_config() const;  // crop is always the canvas size
  StepOptions to_step_options() const;

  // throws listing every violated constraint
  void validate() const;
};

// key=value per line; '#' starts a comment; blank lines ignored.
RunConfig parse_config_text(const std::string& text);
RunConfig parse_config_file(const std::string& path);

// canonical form: every key in registry order. parse(serialize(c)) == c.
std::string serialize_config(const RunConfig& cfg);

// "key=value" assignments on top of an existing config; offending
// assignments are all reported together.
void apply_overrides(RunConfig& cfg, const std::vector<std::string>& overrides);

// every known key, in canonical order
std::vector<std::string> config_keys();

}  // namespace mimoseg
