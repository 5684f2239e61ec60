#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "multirc/config.hpp"
#include "multirc/metrics.hpp"
#include "multirc/scoring.hpp"
#include "multirc/trainer.hpp"

namespace multirc {

/// Score normalizer and threshold fitted on the validation split.
struct Calibration {
  Task task = Task::detection;
  ScoreNormalizer normalizer;
  double threshold = 0.0;
};

void save_calibration(const std::filesystem::path& path, const Calibration& calibration);
Calibration load_calibration(const std::filesystem::path& path);

/// Calibration from a held-out series: detection thresholds assembled point
/// scores, prediction thresholds window probabilities.
Calibration calibrate(const MultiRCModel& model, const TimeSeries& valid, const RunConfig& cfg);

struct ScoredSeries {
  std::vector<std::size_t> index;  // point index or window end time
  std::vector<double> score;       // point score or p_hat
  std::vector<std::uint8_t> label_pred;
  std::vector<std::uint8_t> label_true;  // empty without ground truth
};

/// Point scores for detection, window probabilities for prediction.
ScoredSeries score_series(const MultiRCModel& model, const Calibration& calibration, const TimeSeries& series,
                          const RunConfig& cfg);

// CLI commands. Each writes effective.cfg into the output directory first.

/// train.csv (normal data only), test.csv and test_events.csv.
void cmd_synth(const RunConfig& cfg, std::ostream& log);

struct TrainOutcome {
  TrainState state;
  Calibration calibration;
};

/// model.ckpt, train_log.tsv and calibration.cfg.
TrainOutcome cmd_train(const RunConfig& cfg, std::ostream& log);

/// scores.csv: index,point_score,label_pred[,label_true].
ScoredSeries cmd_detect(const RunConfig& cfg, const std::filesystem::path& checkpoint, std::ostream& log);

/// window_probs.csv: end_time,p_hat,label_pred[,label_true].
ScoredSeries cmd_predict(const RunConfig& cfg, const std::filesystem::path& checkpoint, std::ostream& log);

/// report_<task>.txt and report_<task>.kv.
EvalReport cmd_eval(const RunConfig& cfg, const std::filesystem::path& pred, const std::filesystem::path& truth,
                    Task task, bool point_adjust, std::ostream& log);

/// Keeps freed buffers in the heap instead of returning them to the OS.
/// Training allocates many short-lived arrays above the default mmap threshold.
void tune_allocator();

/// CLI exit code for an exception escaping a command.
int exit_code_for(const std::exception& e);

}  // namespace multirc
