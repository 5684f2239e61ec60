#include "multirc/commands.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#ifdef __GLIBC__
#include <malloc.h>
#endif

#include "multirc/errors.hpp"

namespace multirc {
namespace fs = std::filesystem;

namespace {

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

void prepare_output(const RunConfig& cfg) {
  const fs::path dir = cfg.output_dir();
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw DataError("cannot create output directory " + dir.string());
  open_output(dir / "effective.cfg") << cfg.to_text();
}

bool has_label_column(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open data file: " + path.string());
  std::string header;
  std::getline(in, header);
  while (!header.empty() && (header.back() == '\r' || header.back() == ' ')) header.pop_back();
  return header == "label" || (header.size() > 6 && header.ends_with(",label"));
}

TimeSeries load_series(const fs::path& path) { return load_csv(path, has_label_column(path)); }

std::map<std::string, std::string> read_kv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw DataError("malformed line in " + path.string() + ": " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

MultiRCModel load_matching_model(const RunConfig& cfg, const fs::path& checkpoint) {
  MultiRCModel model = load_checkpoint(checkpoint);
  if (!(model.config() == cfg.model())) {
    throw ConfigError("checkpoint/config mismatch: " + checkpoint.string() + " was trained with\n" +
                      model_config_text(model.config()) + "but the run config describes\n" +
                      model_config_text(cfg.model()));
  }
  return model;
}

Calibration load_matching_calibration(const RunConfig& cfg, Task task) {
  Calibration cal = load_calibration(cfg.output_dir() / "calibration.cfg");
  if (cal.task != task) {
    throw ConfigError("calibration.cfg was fitted for the " + to_string(cal.task) + " task, not " + to_string(task));
  }
  return cal;
}

void write_scored(const fs::path& path, const ScoredSeries& s, const char* index_name, const char* score_name) {
  auto out = open_output(path);
  out << index_name << ',' << score_name << ",label_pred" << (s.label_true.empty() ? "" : ",label_true") << '\n';
  for (std::size_t i = 0; i < s.index.size(); ++i) {
    out << s.index[i] << ',' << format_double(s.score[i]) << ',' << static_cast<int>(s.label_pred[i]);
    if (!s.label_true.empty()) out << ',' << static_cast<int>(s.label_true[i]);
    out << '\n';
  }
}

WindowConfig inference_window(const RunConfig& cfg, Task task) {
  WindowConfig w = cfg.window();
  w.task = task;
  return w;
}

ScoreComponents components_for(const MultiRCModel& model, const TimeSeries& series, const RunConfig& cfg, Task task) {
  const TrainConfig tc = cfg.train();
  const WindowSet set = prepare_windows(series, inference_window(cfg, task), tc.periods);
  return score_components(model, set, task, cfg.score());
}

}  // namespace

void save_calibration(const fs::path& path, const Calibration& c) {
  auto out = open_output(path);
  out << "task=" << to_string(c.task) << '\n'
      << "rec_min=" << format_double(c.normalizer.rec_min) << '\n'
      << "rec_max=" << format_double(c.normalizer.rec_max) << '\n'
      << "dist_min=" << format_double(c.normalizer.dist_min) << '\n'
      << "dist_max=" << format_double(c.normalizer.dist_max) << '\n'
      << "threshold=" << format_double(c.threshold) << '\n';
}

Calibration load_calibration(const fs::path& path) {
  const auto kv = read_kv(path);
  auto num = [&](const char* key) {
    auto it = kv.find(key);
    if (it == kv.end()) throw DataError(path.string() + " lacks '" + key + "'");
    try {
      return std::stod(it->second);
    } catch (const std::logic_error&) {
      throw DataError(path.string() + ": malformed value for '" + key + "'");
    }
  };
  Calibration c;
  auto task = kv.find("task");
  if (task == kv.end()) throw DataError(path.string() + " lacks 'task'");
  c.task = parse_task(task->second);
  c.normalizer.rec_min = num("rec_min");
  c.normalizer.rec_max = num("rec_max");
  c.normalizer.dist_min = num("dist_min");
  c.normalizer.dist_max = num("dist_max");
  c.normalizer.calibrated = true;
  c.threshold = num("threshold");
  return c;
}

Calibration calibrate(const MultiRCModel& model, const TimeSeries& valid, const RunConfig& cfg) {
  Calibration c;
  c.task = cfg.window().task;
  const ScoreConfig sc = cfg.score();
  const ScoreComponents comp = components_for(model, valid, cfg, c.task);
  c.normalizer = ScoreNormalizer::fit(comp);
  const auto scores = window_point_scores(comp, c.normalizer, sc.use_dist);
  std::vector<double> calib;
  if (c.task == Task::detection) {
    calib = assemble_point_scores(scores, comp.end_times, comp.lookback, valid.length);
  } else {
    calib = window_probabilities(scores, comp.lookback);
  }
  c.threshold = calibrate_threshold(calib, cfg.threshold());
  return c;
}

ScoredSeries score_series(const MultiRCModel& model, const Calibration& calibration, const TimeSeries& series,
                          const RunConfig& cfg) {
  const Task task = calibration.task;
  const ScoreConfig sc = cfg.score();
  const TrainConfig tc = cfg.train();
  const WindowSet set = prepare_windows(series, inference_window(cfg, task), tc.periods);
  const ScoreComponents comp = score_components(model, set, task, sc);
  const auto scores = window_point_scores(comp, calibration.normalizer, sc.use_dist);
  ScoredSeries out;
  if (task == Task::detection) {
    out.score = assemble_point_scores(scores, comp.end_times, comp.lookback, series.length);
    for (std::size_t t = 0; t < series.length; ++t) out.index.push_back(t);
    if (series.labels) out.label_true = *series.labels;
  } else {
    out.score = window_probabilities(scores, comp.lookback);
    out.index = set.end_times;
    if (series.labels) out.label_true = set.labels;
  }
  out.label_pred = apply_threshold(out.score, calibration.threshold);
  return out;
}

void cmd_synth(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  prepare_output(cfg);
  const fs::path dir = cfg.output_dir();
  const SynthScenario sc = cfg.synth();
  const auto seed = cfg.synth_seed();
  const SynthResult test = synth_generate(sc, seed);

  SynthScenario normal = sc;
  normal.length = cfg.synth_train_length();
  normal.events = 0;
  normal.segments.clear();
  const SynthResult train = synth_generate(normal, seed + 1);

  {
    auto out = open_output(dir / "train.csv");
    write_csv(out, train.series);
  }
  {
    auto out = open_output(dir / "test.csv");
    write_csv(out, test.series);
  }
  {
    auto out = open_output(dir / "test_events.csv");
    write_events_csv(out, test.events);
  }
  log << "synth: wrote " << (dir / "train.csv").string() << " (" << train.series.length << " rows), "
      << (dir / "test.csv").string() << " (" << test.series.length << " rows, " << test.events.size()
      << " events)\n";
}

TrainOutcome cmd_train(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  prepare_output(cfg);
  const fs::path dir = cfg.output_dir();
  const TimeSeries series = load_series(cfg.train_path());
  const WindowConfig tw = cfg.train_window();
  const WindowConfig iw = cfg.window();
  const auto [train_part, valid_part] =
      split_train_valid(series, cfg.valid_ratio(), std::max(tw.span(), iw.span()));
  const TrainConfig tc = cfg.train();
  const WindowSet train_set = prepare_windows(train_part, tw, tc.periods);
  const WindowSet valid_set = prepare_windows(valid_part, tw, tc.periods);

  MultiRCModel model(cfg.model(), tc.seed);
  log << "train: " << train_set.windows() << " training windows, " << valid_set.windows()
      << " validation windows, " << model.parameter_count() << " parameters\n";
  auto log_file = open_output(dir / "train_log.tsv");
  log_file << log_header() << '\n';
  TrainOutcome outcome;
  outcome.state = fit(model, train_set, valid_set, tc, [&](const EpochLog& e) {
    const auto line = format_log_line(e);
    log_file << line << '\n';
    log_file.flush();
    log << line << '\n';
  });
  save_checkpoint(dir / "model.ckpt", model);
  outcome.calibration = calibrate(model, valid_part, cfg);
  save_calibration(dir / "calibration.cfg", outcome.calibration);
  log << "train: best epoch " << outcome.state.best_epoch << " of " << outcome.state.epochs_run
      << ", threshold " << format_double(outcome.calibration.threshold) << '\n';
  return outcome;
}

ScoredSeries cmd_detect(const RunConfig& cfg, const fs::path& checkpoint, std::ostream& log) {
  cfg.validate();
  prepare_output(cfg);
  const MultiRCModel model = load_matching_model(cfg, checkpoint);
  const Calibration cal = load_matching_calibration(cfg, Task::detection);
  const TimeSeries series = load_series(cfg.test_path());
  ScoredSeries s = score_series(model, cal, series, cfg);
  write_scored(cfg.output_dir() / "scores.csv", s, "index", "point_score");
  log << "detect: scored " << s.index.size() << " points\n";
  return s;
}

ScoredSeries cmd_predict(const RunConfig& cfg, const fs::path& checkpoint, std::ostream& log) {
  cfg.validate();
  prepare_output(cfg);
  const MultiRCModel model = load_matching_model(cfg, checkpoint);
  const Calibration cal = load_matching_calibration(cfg, Task::prediction);
  const TimeSeries series = load_series(cfg.test_path());
  ScoredSeries s = score_series(model, cal, series, cfg);
  write_scored(cfg.output_dir() / "window_probs.csv", s, "end_time", "p_hat");
  log << "predict: scored " << s.index.size() << " windows\n";
  return s;
}

namespace {

struct PredFile {
  bool windows = false;  // end_time rows rather than point rows
  std::vector<std::size_t> index;
  std::vector<double> score;
  std::vector<std::uint8_t> label;
};

PredFile read_pred(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open prediction file: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty prediction file: " + path.string());
  PredFile f;
  if (line.starts_with("end_time,")) {
    f.windows = true;
  } else if (!line.starts_with("index,")) {
    throw DataError(path.string() + " is neither a point-score nor a window-probability file");
  }
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream row(line);
    std::string a, b, c;
    if (!std::getline(row, a, ',') || !std::getline(row, b, ',') || !std::getline(row, c, ',')) {
      throw DataError("malformed row at " + path.string() + ":" + std::to_string(line_no));
    }
    try {
      f.index.push_back(std::stoull(a));
      f.score.push_back(std::stod(b));
      const int l = std::stoi(c);
      if (l != 0 && l != 1) throw DataError("label outside {0,1} at " + path.string() + ":" + std::to_string(line_no));
      f.label.push_back(static_cast<std::uint8_t>(l));
    } catch (const std::logic_error&) {
      throw DataError("non-numeric cell at " + path.string() + ":" + std::to_string(line_no));
    }
  }
  return f;
}

}  // namespace

EvalReport cmd_eval(const RunConfig& cfg, const fs::path& pred_path, const fs::path& truth_path, Task task,
                    bool with_point_adjust, std::ostream& log) {
  cfg.validate();
  prepare_output(cfg);
  const PredFile pred = read_pred(pred_path);
  if (pred.windows != (task == Task::prediction)) throw DataError("task/label mismatch");
  const TimeSeries truth_series = load_csv(truth_path, true);
  const auto& labels = *truth_series.labels;

  std::vector<std::uint8_t> truth;
  if (task == Task::detection) {
    if (pred.index.size() != labels.size()) {
      throw DataError("misaligned inputs: " + std::to_string(pred.index.size()) + " scored points vs " +
                      std::to_string(labels.size()) + " labels");
    }
    truth = labels;
  } else {
    const std::size_t f = cfg.window().lookforward;
    for (auto t : pred.index) {
      if (t >= labels.size()) throw DataError("misaligned inputs: window end " + std::to_string(t) + " beyond the series");
      truth.push_back(lookahead_label(labels, t, f));
    }
  }

  EvalReport report;
  report.task = to_string(task);
  const fs::path cal_path = cfg.output_dir() / "calibration.cfg";
  if (fs::exists(cal_path)) report.threshold = load_calibration(cal_path).threshold;
  report.classic = classic_prf1(pred.label, truth);
  if (task == Task::detection) report.affiliation = affiliation_prf1(pred.label, truth);
  const bool both = std::find(truth.begin(), truth.end(), 1) != truth.end() &&
                    std::find(truth.begin(), truth.end(), 0) != truth.end();
  if (both) report.roc_auc = roc_auc(pred.score, truth);
  if (with_point_adjust) report.point_adjust = point_adjust_demo(pred.label, truth);

  const std::string stem = "report_" + to_string(task);
  {
    auto out = open_output(cfg.output_dir() / (stem + ".txt"));
    write_report_text(out, report);
  }
  {
    auto out = open_output(cfg.output_dir() / (stem + ".kv"));
    write_report_kv(out, report);
  }
  write_report_text(log, report);
  return report;
}

void tune_allocator() {
#ifdef __GLIBC__
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 512 << 20);
#endif
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return 2;
  if (dynamic_cast<const DataError*>(&e) || dynamic_cast<const ShapeError*>(&e)) return 3;
  if (dynamic_cast<const NumericError*>(&e)) return 4;
  return 1;
}

}  // namespace multirc
