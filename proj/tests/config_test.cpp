#include "doctest.h"

#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mimoseg/config.hpp"

using namespace mimoseg;

namespace {

std::string message_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

bool contains(const std::string& hay, const std::string& needle) {
  return hay.find(needle) != std::string::npos;
}

}  // namespace

TEST_CASE("defaults serialize and parse back unchanged") {
  RunConfig def;
  std::string text = serialize_config(def);
  RunConfig back = parse_config_text(text);
  CHECK(serialize_config(back) == text);
  CHECK(back.precision == "f64");
  CHECK(back.seed == 1);
  CHECK(back.data_canvas == 64);
  CHECK(back.data_classes == 4);
  CHECK(back.model_encoder == std::vector<int>{16, 32, 64});
  CHECK(back.model_decoder == std::vector<int>{32, 16});
  CHECK(back.train_lambda == 1.0);
  CHECK(back.train_gamma == 0.5);
  CHECK(back.train_iterations == 3000);
  CHECK(back.train_weight_decay == 1e-4);
}

TEST_CASE("every registered key appears in the serialization") {
  RunConfig def;
  std::string text = serialize_config(def);
  auto keys = config_keys();
  CHECK(keys.size() == 38);
  for (const auto& k : keys) CHECK(contains(text, k + " = "));
}

TEST_CASE("round trip survives non-default values in every field") {
  RunConfig c;
  c.precision = "f32";
  c.seed = 123456789012345ull;
  c.run_name = "sweep_a";
  c.data_canvas = 32;
  c.data_channels = 1;
  c.data_classes = 6;
  c.data_shapes_min = 0;
  c.data_shapes_max = 9;
  c.data_noise = 0.375;
  c.data_jitter = 0.0625;
  c.data_min_color_confusion = 0.0;
  c.data_count = 512;
  c.data_val_count = 32;
  c.data_partition = 0.0625;
  c.model_encoder = {8, 16, 32, 64};
  c.model_decoder = {48, 24, 12};
  c.model_grid = 4;
  c.model_fusion = "summing";
  c.model_bilinear = true;
  c.train_lambda = 0.25;
  c.train_gamma = 0.75;
  c.train_uncertainty = false;
  c.train_literal_norm = true;
  c.train_supervised_only = true;
  c.train_rho = 1.0;
  c.train_batch = 8;
  c.train_iterations = 40000;
  c.train_base_lr = 0.0025;
  c.train_head_lr_multiplier = 5.0;
  c.train_momentum = 0.85;
  c.train_weight_decay = 5e-4;
  c.train_augment = false;
  c.train_aug_flip = 0.0;
  c.train_aug_scale_min = 0.75;
  c.train_aug_scale_max = 1.25;
  c.train_eval_every = 250;
  c.train_checkpoint_every = 500;
  c.train_log_every = 10;

  RunConfig back = parse_config_text(serialize_config(c));
  CHECK(serialize_config(back) == serialize_config(c));
  CHECK(back.seed == c.seed);
  CHECK(back.model_encoder == c.model_encoder);
  CHECK(back.model_decoder == c.model_decoder);
  CHECK(back.train_weight_decay == c.train_weight_decay);
}

TEST_CASE("parser tolerates comments, blanks and spacing") {
  RunConfig c = parse_config_text(
      "# a full-line comment\n"
      "\n"
      "  train.lambda =   0.5   # trailing comment\n"
      "\tdata.canvas=16\n"
      "model.encoder = 4 , 6 \n");
  CHECK(c.train_lambda == 0.5);
  CHECK(c.data_canvas == 16);
  CHECK(c.model_encoder == std::vector<int>{4, 6});
  CHECK(c.data_classes == 4);  // untouched keys keep defaults
}

TEST_CASE("parser collects every offending line before throwing") {
  std::string msg = message_of([] {
    parse_config_text(
        "nonsense.key = 1\n"
        "train.lambda = banana\n"
        "train.lambda = 0.5\n"
        "data.canvas = 32\n"
        "data.canvas = 64\n"
        "this line has no assignment\n");
  });
  CHECK(contains(msg, "config rejected"));
  CHECK(contains(msg, "nonsense.key (unknown key)"));
  CHECK(contains(msg, "train.lambda (unparseable value 'banana')"));
  CHECK(contains(msg, "data.canvas (duplicate key)"));
  CHECK(contains(msg, "missing '='"));
  // the second lambda line is the duplicate: the bad first one already consumed the key
  CHECK(contains(msg, "train.lambda (duplicate key)"));
}

TEST_CASE("parser rejects malformed scalar values") {
  CHECK_THROWS_AS(parse_config_text("seed = -3\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config_text("train.lambda = inf\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config_text("train.lambda = nan\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config_text("data.canvas = 12.5\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config_text("train.augment = yes\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config_text("model.encoder = \n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config_text("model.encoder = 4,,6\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config_text("data.canvas = 99999999999\n"), std::invalid_argument);
}

TEST_CASE("overrides apply in order with last assignment winning") {
  RunConfig c;
  apply_overrides(c, {"train.lambda=0.5", "train.lambda=0.25", "run_name=abl", "seed=7"});
  CHECK(c.train_lambda == 0.25);
  CHECK(c.run_name == "abl");
  CHECK(c.seed == 7);
}

TEST_CASE("override rejection lists all offenders") {
  RunConfig c;
  std::string msg = message_of([&] {
    apply_overrides(c, {"no.equals.sign", "bogus=1", "train.gamma=high"});
  });
  CHECK(contains(msg, "overrides rejected"));
  CHECK(contains(msg, "no.equals.sign (missing '=')"));
  CHECK(contains(msg, "bogus (unknown key)"));
  CHECK(contains(msg, "train.gamma (unparseable value 'high')"));
  CHECK(c.train_gamma == 0.5);  // failed batch leaves prior good assignments aside from applied ones
}

TEST_CASE("default configuration validates") {
  RunConfig def;
  CHECK_NOTHROW(def.validate());
}

TEST_CASE("validation reports every problem at once") {
  RunConfig c;
  c.precision = "f16";
  c.run_name = "a/b";
  c.model_fusion = "mixup";
  c.data_partition = 1.5;
  c.train_batch = 0;
  c.train_rho = 2.0;
  c.train_eval_every = 0;
  std::string msg = message_of([&] { c.validate(); });
  CHECK(contains(msg, "config invalid"));
  CHECK(contains(msg, "precision must be f64 or f32"));
  CHECK(contains(msg, "run_name must be a non-empty path component"));
  CHECK(contains(msg, "model.fusion must be gridmix or summing"));
  CHECK(contains(msg, "data.partition must lie in (0,1)"));
  CHECK(contains(msg, "train.batch must be positive"));
  CHECK(contains(msg, "train.rho must lie in [0,1]"));
  CHECK(contains(msg, "train.eval_every"));
}

TEST_CASE("validation delegates to model and step option checks") {
  RunConfig c;
  c.model_encoder = {};
  std::string msg = message_of([&] { c.validate(); });
  CHECK(contains(msg, "config invalid"));
  CHECK(contains(msg, "encoder"));

  RunConfig d;
  d.train_momentum = 1.0;
  msg = message_of([&] { d.validate(); });
  CHECK(contains(msg, "momentum"));

  // gamma = 0 fails the weight-mask precondition while uncertainty is on
  RunConfig e;
  e.train_gamma = 0.0;
  msg = message_of([&] { e.validate(); });
  CHECK(contains(msg, "gamma"));
  e.train_uncertainty = false;
  CHECK_NOTHROW(e.validate());
}

TEST_CASE("validation ties the pools to the batch size") {
  RunConfig c;
  c.data_count = 16;
  c.data_partition = 0.125;  // 2 labeled scenes
  c.train_batch = 4;
  std::string msg = message_of([&] { c.validate(); });
  CHECK(contains(msg, "labeled pool smaller than train.batch"));

  RunConfig d;
  d.data_count = 16;
  d.data_partition = 0.9;  // 2 unlabeled scenes left
  d.train_batch = 4;
  msg = message_of([&] { d.validate(); });
  CHECK(contains(msg, "unlabeled pool smaller than train.batch"));

  // supervised-only training never touches the unlabeled pool
  d.train_supervised_only = true;
  CHECK_NOTHROW(d.validate());
  d.train_supervised_only = false;
  d.train_lambda = 0.0;
  CHECK_NOTHROW(d.validate());
}

TEST_CASE("converters carry fields through without renaming surprises") {
  RunConfig c;
  c.data_canvas = 48;
  c.data_channels = 2;
  c.data_classes = 5;
  c.data_noise = 0.3;
  c.data_jitter = 0.1;
  c.model_encoder = {8, 16};
  c.model_decoder = {12};
  c.model_grid = 3;
  c.model_fusion = "summing";
  c.model_bilinear = true;
  c.train_lambda = 0.5;
  c.train_gamma = 0.25;
  c.train_literal_norm = true;
  c.train_iterations = 77;
  c.train_aug_flip = 0.25;
  c.train_aug_scale_min = 0.8;
  c.train_aug_scale_max = 1.6;

  SceneSpec sp = c.to_scene_spec();
  CHECK(sp.canvas == 48);
  CHECK(sp.channels == 2);
  CHECK(sp.num_classes == 5);
  CHECK(sp.noise_amplitude == 0.3);
  CHECK(sp.color_jitter == 0.1);

  MimoConfig m = c.to_mimo_config();
  CHECK(m.in_channels == 2);
  CHECK(m.num_classes == 5);
  CHECK(m.encoder_widths == std::vector<int>{8, 16});
  CHECK(m.decoder_widths == std::vector<int>{12});
  CHECK(m.grid_size == 3);
  CHECK(m.gridmix_fusion == false);
  CHECK(m.bilinear_upsample == true);
  CHECK(m.height == 48);
  CHECK(m.width == 48);

  AugmentConfig a = c.to_augment_config();
  CHECK(a.crop == 48);  // crops always match the canvas so branch batches concatenate
  CHECK(a.flip_prob == 0.25);
  CHECK(a.scale_min == 0.8);
  CHECK(a.scale_max == 1.6);

  StepOptions o = c.to_step_options();
  CHECK(o.lambda == 0.5);
  CHECK(o.gamma == 0.25);
  CHECK(o.literal_norm == true);
  CHECK(o.max_iterations == 77);
}

TEST_CASE("unreadable config file is rejected") {
  CHECK_THROWS_AS(parse_config_file("/nonexistent/path/to.cfg"), std::invalid_argument);
}
