// multirc command-line entry point: synth, train, detect, predict, eval.

#include <CLI11.hpp>

#include <iostream>
#include <map>

#include "multirc/commands.hpp"
#include "multirc/errors.hpp"

namespace {

const std::map<std::string, std::string> kAblations = {
    {"no-multi-scale", "train.multi_scale"},   {"no-adaptive-mask", "train.adaptive_mask"},
    {"no-reconstruction", "train.reconstruction"}, {"no-contrastive", "train.contrastive"},
    {"no-generation", "train.generation"},
};

struct Common {
  std::string config;
  std::vector<std::string> overrides;
  std::string out;
  std::vector<std::string> ablate;
};

void add_common(CLI::App* cmd, Common& c, bool with_ablate) {
  cmd->add_option("-c,--config", c.config, "Config file (section headers, key = value)");
  cmd->add_option("-s,--set", c.overrides, "Override: section.key=value (repeatable)");
  cmd->add_option("-o,--out", c.out, "Output directory (same as --set output.dir=...)");
  if (with_ablate) {
    cmd->add_option("--ablate", c.ablate, "no-multi-scale | no-adaptive-mask | no-reconstruction | "
                                          "no-contrastive | no-generation (repeatable)");
  }
}

multirc::RunConfig build_config(const Common& c) {
  multirc::RunConfig cfg = c.config.empty() ? multirc::RunConfig() : multirc::RunConfig::load(c.config);
  for (const auto& o : c.overrides) cfg.set(o);
  if (!c.out.empty()) cfg.set("output.dir", c.out);
  for (const auto& a : c.ablate) {
    auto it = kAblations.find(a);
    if (it == kAblations.end()) throw multirc::ConfigError("unknown ablation '" + a + "'");
    cfg.set(it->second, "false");
  }
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  multirc::tune_allocator();
  CLI::App app{"MultiRC time-series anomaly prediction and detection"};
  app.require_subcommand(1);

  Common synth_opts, train_opts, detect_opts, predict_opts, eval_opts;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic scenario (train.csv, test.csv, test_events.csv)");
  add_common(synth, synth_opts, false);

  auto* train = app.add_subcommand("train", "Train a model; writes model.ckpt, train_log.tsv, calibration.cfg");
  add_common(train, train_opts, true);

  std::string detect_ckpt, predict_ckpt;
  auto* detect = app.add_subcommand("detect", "Point scores for the test series (scores.csv)");
  add_common(detect, detect_opts, true);
  detect->add_option("--checkpoint", detect_ckpt, "Checkpoint (default <out>/model.ckpt)");

  auto* predict = app.add_subcommand("predict", "Window probabilities for the test series (window_probs.csv)");
  add_common(predict, predict_opts, true);
  predict->add_option("--checkpoint", predict_ckpt, "Checkpoint (default <out>/model.ckpt)");

  std::string pred_path, truth_path, task_name = "detection";
  bool point_adjust = false;
  auto* eval = app.add_subcommand("eval", "Evaluate predictions against labels (report_<task>.txt/.kv)");
  add_common(eval, eval_opts, false);
  eval->add_option("--pred", pred_path, "scores.csv or window_probs.csv")->required();
  eval->add_option("--truth", truth_path, "Series CSV with a label column (default: data.test)");
  eval->add_option("--task", task_name, "detection | prediction");
  eval->add_flag("--point-adjust", point_adjust, "Also report point-adjusted metrics (inflated; for comparison only)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (synth->parsed()) {
      multirc::cmd_synth(build_config(synth_opts), std::cout);
    } else if (train->parsed()) {
      multirc::cmd_train(build_config(train_opts), std::cout);
    } else if (detect->parsed()) {
      const auto cfg = build_config(detect_opts);
      multirc::cmd_detect(cfg, detect_ckpt.empty() ? cfg.output_dir() / "model.ckpt" : std::filesystem::path(detect_ckpt), std::cout);
    } else if (predict->parsed()) {
      const auto cfg = build_config(predict_opts);
      multirc::cmd_predict(cfg, predict_ckpt.empty() ? cfg.output_dir() / "model.ckpt" : std::filesystem::path(predict_ckpt), std::cout);
    } else if (eval->parsed()) {
      const auto cfg = build_config(eval_opts);
      const auto task = multirc::parse_task(task_name);
      multirc::cmd_eval(cfg, pred_path, truth_path.empty() ? cfg.test_path() : std::filesystem::path(truth_path), task, point_adjust,
                        std::cout);
    }
  } catch (const std::exception& e) {
    std::cerr << "multirc: error: " << e.what() << '\n';
    return multirc::exit_code_for(e);
  }
  return 0;
}
