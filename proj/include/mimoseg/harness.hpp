#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "mimoseg/config.hpp"

namespace mimoseg {

// Per-run artifact layout, all paths reachable from the manifest:
//   <dir>/config.resolved.cfg   canonical config, re-parseable
//   <dir>/metrics.csv           one row per logged training iteration
//   <dir>/eval.csv              one row per periodic evaluation
//   <dir>/final_eval.json       final validation metrics
//   <dir>/manifest.json         config echo, seeds, versions, artifact list
//   <dir>/checkpoints/...       manifest+blob parameter snapshots
struct RunPaths {
  std::string dir;
  std::string config_file;
  std::string metrics_csv;
  std::string eval_csv;
  std::string final_json;
  std::string manifest_json;
  std::string checkpoints_dir;

  static RunPaths under(const std::string& root, const std::string& name);
};

// MIMOSEG_OUT_ROOT overrides the output root when set and non-empty.
std::string resolve_out_root(const std::string& requested);

// MIMOSEG_THREADS caps the worker-thread count when set to a positive value.
void apply_thread_env();

struct TrainOutcome {
  std::string run_dir;
  double final_miou = 0.0;
  double final_branch_non_overlap = 0.0;
  std::int64_t iterations = 0;
};

// Full training run per the config: dataset synthesis, partition split,
// per-iteration metrics rows, periodic evaluation and checkpoints, final
// evaluation, manifest. The run directory must not already contain a
// manifest (reruns go to fresh directories).
TrainOutcome cmd_train(const RunConfig& cfg, const std::string& out_root);

// Recomputes the final evaluation of an existing run from its resolved
// config and final checkpoint, and compares against the stored
// final_eval.json. Keys: recomputed_miou, stored_miou, match.
nlohmann::json cmd_eval(const std::string& run_dir);

struct AblateOutcome {
  std::string table_csv;
  nlohmann::json table;
  bool complete = false;  // every (value, seed) run finished
};

// One run per (value, seed), aggregated into a mean/sd table. axis is
// "gamma" (value 0 switches uncertainty weighting off), "rho", or "fusion"
// (values "summing" or "gridmixN"). Failed runs leave the table marked
// incomplete instead of aborting the sweep.
AblateOutcome cmd_ablate(const RunConfig& base, const std::string& axis,
                         const std::vector<std::string>& values, int seeds,
                         const std::string& out_root);

// Parameter/MAC/forward-pass comparison rows for the supervised-only,
// two-model cross-supervision, and shared-trunk pipelines at the configured
// batch size; written as CSV and JSON under out_root.
nlohmann::json cmd_cost(const RunConfig& cfg, const std::string& out_root);

// Summary table over finished run directories, every number re-read from
// the runs' own artifacts. Groups runs by semi-supervised vs supervised
// and reports the mean gain when both groups are present.
nlohmann::json cmd_report(const std::vector<std::string>& run_dirs);

}  // namespace mimoseg
