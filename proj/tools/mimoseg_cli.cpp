#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mimoseg/config.hpp"
#include "mimoseg/harness.hpp"
#include "mimoseg/version.hpp"

namespace {

mimoseg::RunConfig load_config(const std::string& config_path,
                               const std::vector<std::string>& overrides) {
  mimoseg::RunConfig cfg;
  if (!config_path.empty()) cfg = mimoseg::parse_config_file(config_path);
  if (!overrides.empty()) mimoseg::apply_overrides(cfg, overrides);
  return cfg;
}

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  size_t start = 0;
  while (start <= s.size()) {
    size_t comma = s.find(',', start);
    if (comma == std::string::npos) {
      out.push_back(s.substr(start));
      break;
    }
    out.push_back(s.substr(start, comma - start));
    start = comma + 1;
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MIMO self cross supervision segmentation laboratory"};
  app.set_version_flag("--version", mimoseg::kVersion);
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_root = "runs";

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "config file; defaults apply when omitted");
    sub->add_option("--set", overrides, "override as key=value, repeatable");
    sub->add_option("--out", out_root, "output root directory");
  };

  CLI::App* train = app.add_subcommand("train", "run one training job");
  add_common(train);

  CLI::App* eval = app.add_subcommand("eval", "recompute a finished run's final evaluation");
  std::string eval_dir;
  eval->add_option("run_dir", eval_dir, "run directory")->required();

  CLI::App* ablate = app.add_subcommand("ablate", "sweep one axis over several seeds");
  add_common(ablate);
  std::string axis;
  std::string values_csv;
  int seeds = 3;
  ablate->add_option("--axis", axis, "gamma | rho | fusion")->required();
  ablate->add_option("--values", values_csv, "comma-separated sweep values")->required();
  ablate->add_option("--seeds", seeds, "seeds per value");

  CLI::App* cost = app.add_subcommand("cost", "parameter and MAC accounting table");
  add_common(cost);

  CLI::App* report = app.add_subcommand("report", "summarize finished runs");
  std::vector<std::string> report_dirs;
  report->add_option("run_dirs", report_dirs, "run directories")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) {
      mimoseg::RunConfig cfg = load_config(config_path, overrides);
      mimoseg::TrainOutcome out = mimoseg::cmd_train(cfg, out_root);
      std::printf("run_dir=%s\nfinal_miou=%.17g\nbranch_non_overlap=%.17g\niterations=%lld\n",
                  out.run_dir.c_str(), out.final_miou, out.final_branch_non_overlap,
                  static_cast<long long>(out.iterations));
    } else if (eval->parsed()) {
      nlohmann::json j = mimoseg::cmd_eval(eval_dir);
      std::printf("%s\n", j.dump(2).c_str());
      if (!j.at("match").get<bool>()) {
        std::fprintf(stderr, "error: recomputed mIoU does not match the stored value\n");
        return 1;
      }
    } else if (ablate->parsed()) {
      mimoseg::RunConfig cfg = load_config(config_path, overrides);
      mimoseg::AblateOutcome out =
          mimoseg::cmd_ablate(cfg, axis, split_commas(values_csv), seeds, out_root);
      std::printf("%s\n", out.table.dump(2).c_str());
      std::printf("table=%s\n", out.table_csv.c_str());
      if (!out.complete) {
        std::fprintf(stderr, "error: some sweep runs failed; table is marked incomplete\n");
        return 1;
      }
    } else if (cost->parsed()) {
      mimoseg::RunConfig cfg = load_config(config_path, overrides);
      nlohmann::json j = mimoseg::cmd_cost(cfg, out_root);
      std::printf("%s\n", j.dump(2).c_str());
    } else if (report->parsed()) {
      nlohmann::json j = mimoseg::cmd_report(report_dirs);
      std::printf("%s\n", j.dump(2).c_str());
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
