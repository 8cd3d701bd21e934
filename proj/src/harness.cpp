#include "mimoseg/harness.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "mimoseg/checkpoint.hpp"
#include "mimoseg/trainer.hpp"
#include "mimoseg/version.hpp"

namespace fs = std::filesystem;

namespace mimoseg {

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string now_iso() {
  auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::tm tm_utc;
  gmtime_r(&t, &tm_utc);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  return buf;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << content;
}

std::string read_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

nlohmann::json read_json(const std::string& path) { return nlohmann::json::parse(read_file(path)); }

std::string metrics_row(const StepMetrics& m) {
  std::string r = std::to_string(m.iter);
  r += "," + fmt(m.lr);
  r += "," + fmt(m.sup1);
  r += "," + fmt(m.sup2);
  r += "," + fmt(m.uscs1);
  r += "," + fmt(m.uscs2);
  r += "," + fmt(m.total);
  r += "," + fmt(m.mean_w);
  r += "," + fmt(m.non_overlap);
  r += "," + fmt(m.wall_ms);
  r += m.step_ok ? ",1" : ",0";
  r += "\n";
  return r;
}

template <typename T>
TrainOutcome run_train(const RunConfig& cfg, const RunPaths& paths) {
  Rng root(cfg.seed);
  Dataset train_ds(cfg.to_scene_spec(), cfg.data_count, root.fork("train_data").seed());
  Dataset val_ds(cfg.to_scene_spec(), cfg.data_val_count, root.fork("val_data").seed());
  auto [labeled, unlabeled] = make_splits(cfg.data_count, cfg.data_partition,
                                          root.fork("split").seed());
  const bool with_unlabeled = !cfg.train_supervised_only && cfg.train_lambda > 0.0;
  GroupSampler<T> sampler(train_ds, labeled, unlabeled, cfg.train_batch, cfg.train_rho,
                          with_unlabeled, cfg.train_augment, cfg.to_augment_config(),
                          root.fork("sampler"));
  MimoSegNet<T> model(cfg.to_mimo_config(), root.fork("init"));
  SgdState<T> opt(model.store());
  StepOptions opts = cfg.to_step_options();
  Rng forward_rng = root.fork("forward");

  std::vector<int> val_idx(static_cast<size_t>(val_ds.size()));
  for (int i = 0; i < val_ds.size(); ++i) val_idx[static_cast<size_t>(i)] = i;

  std::ofstream metrics(paths.metrics_csv, std::ios::trunc);
  if (!metrics) throw std::runtime_error("cannot write " + paths.metrics_csv);
  metrics << "iter,lr,sup1,sup2,uscs1,uscs2,total,mean_w,non_overlap,wall_ms,step_ok\n";

  std::ofstream evalcsv(paths.eval_csv, std::ios::trunc);
  if (!evalcsv) throw std::runtime_error("cannot write " + paths.eval_csv);
  evalcsv << "iter,miou,branch_non_overlap";
  for (int c = 0; c < cfg.data_classes; ++c) evalcsv << ",iou_" << c;
  evalcsv << "\n";

  std::vector<std::string> checkpoint_stems;
  EvalResult final_eval;
  for (std::int64_t it = 0; it < cfg.train_iterations; ++it) {
    StepMetrics m;
    try {
      m = train_iteration(model, opt, sampler.next(), opts, it, forward_rng);
    } catch (const std::runtime_error& e) {
      throw std::runtime_error(std::string(e.what()) + "\nconfig was:\n" + serialize_config(cfg));
    }
    if (it % cfg.train_log_every == 0 || it + 1 == cfg.train_iterations)
      metrics << metrics_row(m);

    const bool last = it + 1 == cfg.train_iterations;
    if ((it + 1) % cfg.train_eval_every == 0 || last) {
      EvalResult r = evaluate(model, val_ds, val_idx);
      evalcsv << (it + 1) << "," << fmt(r.miou) << "," << fmt(r.branch_non_overlap);
      for (double v : r.per_class) evalcsv << "," << fmt(v);
      evalcsv << "\n";
      if (last) final_eval = r;
    }
    if ((it + 1) % cfg.train_checkpoint_every == 0 && !last) {
      char stem[64];
      std::snprintf(stem, sizeof(stem), "iter_%06lld", static_cast<long long>(it + 1));
      std::string full = paths.checkpoints_dir + "/" + stem;
      save_checkpoint(full, model.store());
      checkpoint_stems.push_back(full);
    }
  }
  std::string final_stem = paths.checkpoints_dir + "/final";
  save_checkpoint(final_stem, model.store());
  checkpoint_stems.push_back(final_stem);

  nlohmann::json fj;
  fj["iterations"] = cfg.train_iterations;
  fj["miou"] = final_eval.miou;
  fj["branch_non_overlap"] = final_eval.branch_non_overlap;
  fj["per_class_iou"] = final_eval.per_class;
  write_file(paths.final_json, fj.dump(2) + "\n");

  TrainOutcome out;
  out.run_dir = paths.dir;
  out.final_miou = final_eval.miou;
  out.final_branch_non_overlap = final_eval.branch_non_overlap;
  out.iterations = cfg.train_iterations;
  return out;
}

}  // namespace

RunPaths RunPaths::under(const std::string& root, const std::string& name) {
  RunPaths p;
  p.dir = root + "/" + name;
  p.config_file = p.dir + "/config.resolved.cfg";
  p.metrics_csv = p.dir + "/metrics.csv";
  p.eval_csv = p.dir + "/eval.csv";
  p.final_json = p.dir + "/final_eval.json";
  p.manifest_json = p.dir + "/manifest.json";
  p.checkpoints_dir = p.dir + "/checkpoints";
  return p;
}

std::string resolve_out_root(const std::string& requested) {
  const char* env = std::getenv("MIMOSEG_OUT_ROOT");
  if (env && *env) return env;
  return requested;
}

void apply_thread_env() {
#ifdef _OPENMP
  const char* env = std::getenv("MIMOSEG_THREADS");
  if (env && *env) {
    int n = std::atoi(env);
    if (n > 0) omp_set_num_threads(n);
  }
#endif
}

TrainOutcome cmd_train(const RunConfig& cfg, const std::string& out_root) {
  cfg.validate();
  apply_thread_env();
  RunPaths paths = RunPaths::under(resolve_out_root(out_root), cfg.run_name);
  if (fs::exists(paths.manifest_json))
    throw std::invalid_argument("run directory already holds a manifest: " + paths.dir);
  fs::create_directories(paths.checkpoints_dir);

  const std::string started = now_iso();
  write_file(paths.config_file, serialize_config(cfg));

  TrainOutcome out = cfg.precision == "f32" ? run_train<float>(cfg, paths)
                                            : run_train<double>(cfg, paths);

  nlohmann::json manifest;
  manifest["version"] = kVersion;
  manifest["seed"] = cfg.seed;
  manifest["precision"] = cfg.precision;
  manifest["run_name"] = cfg.run_name;
  manifest["started"] = started;
  manifest["finished"] = now_iso();
  manifest["final_miou"] = out.final_miou;
  manifest["iterations"] = out.iterations;
  manifest["artifacts"] = {
      {"config", "config.resolved.cfg"},   {"metrics", "metrics.csv"},
      {"eval", "eval.csv"},                {"final_eval", "final_eval.json"},
      {"checkpoint_final", "checkpoints/final"}};
  write_file(paths.manifest_json, manifest.dump(2) + "\n");
  return out;
}

nlohmann::json cmd_eval(const std::string& run_dir) {
  RunConfig cfg = parse_config_file(run_dir + "/config.resolved.cfg");
  cfg.validate();
  Rng root(cfg.seed);
  Dataset val_ds(cfg.to_scene_spec(), cfg.data_val_count, root.fork("val_data").seed());
  std::vector<int> val_idx(static_cast<size_t>(val_ds.size()));
  for (int i = 0; i < val_ds.size(); ++i) val_idx[static_cast<size_t>(i)] = i;

  const std::string stem = run_dir + "/checkpoints/final";
  EvalResult r;
  if (cfg.precision == "f32") {
    MimoSegNet<float> model(cfg.to_mimo_config(), root.fork("init"));
    load_checkpoint(stem, model.store());
    r = evaluate(model, val_ds, val_idx);
  } else {
    MimoSegNet<double> model(cfg.to_mimo_config(), root.fork("init"));
    load_checkpoint(stem, model.store());
    r = evaluate(model, val_ds, val_idx);
  }

  nlohmann::json stored = read_json(run_dir + "/final_eval.json");
  nlohmann::json out;
  out["recomputed_miou"] = r.miou;
  out["stored_miou"] = stored.at("miou").get<double>();
  out["recomputed_branch_non_overlap"] = r.branch_non_overlap;
  out["per_class_iou"] = r.per_class;
  out["match"] = r.miou == stored.at("miou").get<double>();
  return out;
}

namespace {

// axis-specific derivation of one sweep point
RunConfig derive_sweep_config(const RunConfig& base, const std::string& axis,
                              const std::string& value, int seed_index) {
  RunConfig c = base;
  c.seed = base.seed + static_cast<std::uint64_t>(seed_index);
  if (axis == "gamma") {
    char* end = nullptr;
    double v = std::strtod(value.c_str(), &end);
    if (!end || *end != '\0' || v < 0.0 || v > 1.0)
      throw std::invalid_argument("gamma sweep value must be a number in [0,1]: " + value);
    if (v == 0.0) {
      c.train_uncertainty = false;  // the gamma -> 0 limit: every weight is 1
    } else {
      c.train_uncertainty = true;
      c.train_gamma = v;
    }
  } else if (axis == "rho") {
    char* end = nullptr;
    double v = std::strtod(value.c_str(), &end);
    if (!end || *end != '\0' || v < 0.0 || v > 1.0)
      throw std::invalid_argument("rho sweep value must be a number in [0,1]: " + value);
    c.train_rho = v;
  } else if (axis == "fusion") {
    if (value == "summing") {
      c.model_fusion = "summing";
    } else if (value.rfind("gridmix", 0) == 0) {
      c.model_fusion = "gridmix";
      int g = std::atoi(value.c_str() + 7);
      if (g < 1) throw std::invalid_argument("fusion sweep value needs a grid size: " + value);
      c.model_grid = g;
    } else {
      throw std::invalid_argument("fusion sweep value must be summing or gridmixN: " + value);
    }
  } else {
    throw std::invalid_argument("unknown ablation axis: " + axis);
  }
  std::string tag = value;
  for (char& ch : tag)
    if (ch == '.') ch = 'p';
  c.run_name = axis + "_" + tag + "_s" + std::to_string(seed_index);
  return c;
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double sample_sd(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace

AblateOutcome cmd_ablate(const RunConfig& base, const std::string& axis,
                         const std::vector<std::string>& values, int seeds,
                         const std::string& out_root) {
  if (values.empty()) throw std::invalid_argument("ablate: no sweep values given");
  if (seeds < 1) throw std::invalid_argument("ablate: seed count must be positive");
  const std::string root = resolve_out_root(out_root);

  nlohmann::json rows = nlohmann::json::array();
  bool all_ok = true;
  for (const auto& value : values) {
    std::vector<double> mious, overlaps;
    int attempted = 0;
    std::vector<std::string> run_dirs;
    for (int s = 0; s < seeds; ++s) {
      RunConfig c = derive_sweep_config(base, axis, value, s);
      ++attempted;
      try {
        TrainOutcome t = cmd_train(c, root);
        // re-read from the run's own artifact so the table stays recomputable
        nlohmann::json fj = read_json(t.run_dir + "/final_eval.json");
        mious.push_back(fj.at("miou").get<double>());
        overlaps.push_back(fj.at("branch_non_overlap").get<double>());
        run_dirs.push_back(t.run_dir);
      } catch (const std::exception& e) {
        all_ok = false;
        run_dirs.push_back(std::string("FAILED: ") + e.what());
      }
    }
    nlohmann::json row;
    row["axis"] = axis;
    row["value"] = value;
    row["runs_ok"] = mious.size();
    row["runs_total"] = attempted;
    row["mean_miou"] = mean_of(mious);
    row["sd_miou"] = sample_sd(mious);
    row["mean_non_overlap"] = mean_of(overlaps);
    row["complete"] = mious.size() == static_cast<size_t>(attempted);
    row["runs"] = run_dirs;
    rows.push_back(row);
  }

  std::string csv = "axis,value,runs_ok,runs_total,mean_miou,sd_miou,mean_non_overlap,complete\n";
  for (const auto& row : rows) {
    csv += row.at("axis").get<std::string>() + "," + row.at("value").get<std::string>();
    csv += "," + std::to_string(row.at("runs_ok").get<int>());
    csv += "," + std::to_string(row.at("runs_total").get<int>());
    csv += "," + fmt(row.at("mean_miou").get<double>());
    csv += "," + fmt(row.at("sd_miou").get<double>());
    csv += "," + fmt(row.at("mean_non_overlap").get<double>());
    csv += row.at("complete").get<bool>() ? ",1" : ",0";
    csv += "\n";
  }

  AblateOutcome out;
  out.table_csv = root + "/ablate_" + axis + ".csv";
  fs::create_directories(root);
  write_file(out.table_csv, csv);
  nlohmann::json table;
  table["axis"] = axis;
  table["seeds"] = seeds;
  table["complete"] = all_ok;
  table["rows"] = rows;
  write_file(root + "/ablate_" + axis + ".json", table.dump(2) + "\n");
  out.table = table;
  out.complete = all_ok;
  return out;
}

nlohmann::json cmd_cost(const RunConfig& cfg, const std::string& out_root) {
  cfg.validate();
  CostReport r = cost_report(cfg.to_mimo_config(), cfg.train_batch);

  nlohmann::json j;
  j["batch"] = cfg.train_batch;
  j["rows"] = nlohmann::json::array(
      {{{"pipeline", "sup_only"}, {"params", r.params_sup}, {"iteration_macs", r.iter_macs_sup},
        {"forward_passes", r.passes_sup}},
       {{"pipeline", "cross_model"}, {"params", r.params_cps}, {"iteration_macs", r.iter_macs_cps},
        {"forward_passes", r.passes_cps}},
       {{"pipeline", "uscs"}, {"params", r.params_uscs}, {"iteration_macs", r.iter_macs_uscs},
        {"forward_passes", r.passes_uscs}}});
  j["param_ratio_uscs_vs_cross"] = r.param_ratio;
  j["macs_ratio_uscs_vs_cross"] = r.macs_ratio;

  const std::string root = resolve_out_root(out_root);
  fs::create_directories(root);
  std::string csv = "pipeline,params,iteration_macs,forward_passes\n";
  for (const auto& row : j.at("rows")) {
    csv += row.at("pipeline").get<std::string>();
    csv += "," + std::to_string(row.at("params").get<std::int64_t>());
    csv += "," + std::to_string(row.at("iteration_macs").get<std::int64_t>());
    csv += "," + std::to_string(row.at("forward_passes").get<int>());
    csv += "\n";
  }
  write_file(root + "/cost.csv", csv);
  write_file(root + "/cost.json", j.dump(2) + "\n");
  return j;
}

nlohmann::json cmd_report(const std::vector<std::string>& run_dirs) {
  if (run_dirs.empty()) throw std::invalid_argument("report: no run directories given");
  nlohmann::json runs = nlohmann::json::array();
  std::vector<double> semi, sup;
  for (const auto& dir : run_dirs) {
    RunConfig cfg = parse_config_file(dir + "/config.resolved.cfg");
    nlohmann::json fj = read_json(dir + "/final_eval.json");
    nlohmann::json manifest = read_json(dir + "/manifest.json");
    const bool supervised = cfg.train_supervised_only || cfg.train_lambda == 0.0;
    nlohmann::json row;
    row["dir"] = dir;
    row["precision"] = cfg.precision;
    row["seed"] = cfg.seed;
    row["mode"] = supervised ? "supervised" : "semi_supervised";
    row["lambda"] = cfg.train_lambda;
    row["gamma"] = cfg.train_uncertainty ? cfg.train_gamma : 0.0;
    row["rho"] = cfg.train_rho;
    row["miou"] = fj.at("miou").get<double>();
    row["branch_non_overlap"] = fj.at("branch_non_overlap").get<double>();
    row["version"] = manifest.at("version").get<std::string>();
    runs.push_back(row);
    (supervised ? sup : semi).push_back(fj.at("miou").get<double>());
  }
  nlohmann::json out;
  out["runs"] = runs;
  nlohmann::json summary;
  summary["semi_runs"] = semi.size();
  summary["supervised_runs"] = sup.size();
  if (!semi.empty()) summary["mean_semi_miou"] = mean_of(semi);
  if (!sup.empty()) summary["mean_supervised_miou"] = mean_of(sup);
  if (!semi.empty() && !sup.empty())
    summary["gain_miou_points"] = 100.0 * (mean_of(semi) - mean_of(sup));
  out["summary"] = summary;
  return out;
}

}  // namespace mimoseg
