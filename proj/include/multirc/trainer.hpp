#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

#include "multirc/losses.hpp"
#include "multirc/model.hpp"
#include "multirc/multiscale.hpp"
#include "multirc/negatives.hpp"
#include "multirc/optim.hpp"
#include "multirc/pipeline.hpp"

namespace multirc {

struct Ablations {
  bool multi_scale = true;
  bool adaptive_mask = true;
  bool reconstruction = true;
  bool contrastive = true;
  bool generation = true;
};

struct TrainConfig {
  double lr = 1e-5;
  std::size_t max_epochs = 100;
  std::size_t patience = 3;
  std::size_t batch_size = 4;  // windows per step; each window contributes c items
  std::uint64_t seed = 0;
  /// Seed of the mask and negative draws used for the validation loss.
  std::uint64_t valid_seed = 0x5eed;
  Ablations ablations;
  MaskOrientation mask_orientation = MaskOrientation::trailing;
  PeriodOptions periods;
  LossConfig loss;
  NegativeGenConfig negatives;

  void validate() const;
  /// Loss weights after the reconstruction/contrastive ablations are applied.
  LossConfig effective_loss() const;
};

/// Normalized (window x channel) items plus the statistics and dominant
/// periods each one needs. Item k = w * channels + ch.
struct WindowSet {
  std::size_t lookback = 0;
  std::size_t channels = 0;
  std::vector<double> values;  // items x h, instance-normalized
  std::vector<double> mean;    // per item
  std::vector<double> std;     // per item
  std::vector<PeriodSet> periods;
  std::vector<std::size_t> end_times;
  std::vector<std::uint8_t> labels;  // as produced by slide_windows

  std::size_t windows() const { return end_times.size(); }
  std::size_t items() const { return end_times.size() * channels; }
  std::span<const double> item(std::size_t k) const { return {values.data() + k * lookback, lookback}; }
};

WindowSet prepare_windows(const TimeSeries& series, const WindowConfig& cfg, const PeriodOptions& periods = {});

/// Tensors for one step over a subset of windows.
struct BatchInputs {
  std::size_t items = 0;
  Tensor target;                 // [items, h] clean normalized windows
  std::vector<double> weights;   // items * h reconstruction weights
  std::vector<double> masked;    // items x padded
  std::vector<double> clean;     // items x padded
  std::vector<std::vector<double>> negatives;  // per scale, items x padded
};

/// Masks every item (adaptive or, under the ablation, uniform in [2, h]),
/// pads both branches and draws negatives.
BatchInputs make_batch(const WindowSet& set, std::span<const std::size_t> window_ids, const ModelConfig& model_cfg,
                       const TrainConfig& cfg, Rng& rng);

struct StepOutput {
  Tensor total;
  LossReport report;
};

/// Forward pass and joint objective for one batch. Records on the active tape
/// when there is one.
StepOutput batch_loss(const MultiRCModel& model, const BatchInputs& batch, std::size_t channels,
                      const TrainConfig& cfg, const ForwardOptions& opts);

/// One optimization step: forward, backward, Adam update.
LossReport train_step(MultiRCModel& model, Adam& optimizer, const BatchInputs& batch, std::size_t channels,
                      const TrainConfig& cfg, Rng& dropout_rng);

/// Joint objective on a split with fixed-seed masks and negatives, dropout off.
double validation_loss(const MultiRCModel& model, const WindowSet& set, const TrainConfig& cfg);

/// Stops after `patience` consecutive epochs without strict improvement.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience);

  /// Records an epoch's validation loss; true when it is a new best.
  bool update(double loss);
  bool should_stop() const { return since_best_ >= patience_; }
  std::size_t best_epoch() const { return best_epoch_; }  // 1-based, 0 before any update
  double best_loss() const { return best_; }
  std::size_t epochs_since_best() const { return since_best_; }
  std::size_t epochs() const { return epochs_; }

 private:
  std::size_t patience_;
  std::size_t epochs_ = 0;
  std::size_t best_epoch_ = 0;
  std::size_t since_best_ = 0;
  double best_ = std::numeric_limits<double>::infinity();
};

struct EpochLog {
  std::size_t epoch = 0;
  double rec = 0.0;
  double con = 0.0;
  double total = 0.0;
  double valid = 0.0;
  double seconds = 0.0;
};

/// epoch, L_Rec, L_Con, L_total, valid_loss, seconds (tab-separated).
std::string format_log_line(const EpochLog& log);
std::string log_header();

struct TrainState {
  std::size_t epochs_run = 0;
  std::size_t best_epoch = 0;
  double best_valid = std::numeric_limits<double>::infinity();
  std::vector<EpochLog> history;
};

using EpochCallback = std::function<void(const EpochLog&)>;

/// Trains until early stopping or max_epochs and leaves the model holding the
/// parameters of the best validation epoch.
TrainState fit(MultiRCModel& model, const WindowSet& train, const WindowSet& valid, const TrainConfig& cfg,
               const EpochCallback& on_epoch = {});

}  // namespace multirc
