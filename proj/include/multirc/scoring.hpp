#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "multirc/model.hpp"
#include "multirc/multiscale.hpp"
#include "multirc/pipeline.hpp"
#include "multirc/trainer.hpp"

namespace multirc {

/// Which input the scorer feeds the encoder. `dominant` masks the trailing
/// dominant period like training does. `automatic` masks detection windows
/// and leaves prediction windows intact, since their trailing points carry
/// the precursor evidence.
enum class InferenceMask { automatic, none, dominant };

std::string to_string(InferenceMask mask);
InferenceMask parse_inference_mask(const std::string& text);

/// How per-channel score terms combine into one value per point.
enum class ChannelReduce { mean, max };

std::string to_string(ChannelReduce reduce);
ChannelReduce parse_channel_reduce(const std::string& text);

struct ScoreConfig {
  bool use_dist = true;
  InferenceMask mask = InferenceMask::automatic;
  MaskOrientation orientation = MaskOrientation::trailing;
  ChannelReduce channels = ChannelReduce::mean;
  bool normalize_reps = true;
  std::size_t batch_windows = 64;
};

/// Raw per-point score terms, reduced over channels; windows x h each.
struct ScoreComponents {
  std::size_t lookback = 0;
  std::vector<double> rec;   // squared reconstruction error, de-normalized
  std::vector<double> dist;  // mean cross-scale representation distance
  std::vector<std::size_t> end_times;

  std::size_t windows() const { return end_times.size(); }
};

ScoreComponents score_components(const MultiRCModel& model, const WindowSet& set, Task task, const ScoreConfig& cfg);

/// Min-max scaling of each term, fitted on validation components. Values
/// below the calibration minimum clamp to 0.
struct ScoreNormalizer {
  double rec_min = 0.0;
  double rec_max = 0.0;
  double dist_min = 0.0;
  double dist_max = 0.0;
  bool calibrated = false;

  static ScoreNormalizer fit(const ScoreComponents& components);
  double combine(double rec, double dist, bool use_dist) const;
};

/// Normalized point scores, windows x h.
std::vector<double> window_point_scores(const ScoreComponents& components, const ScoreNormalizer& normalizer,
                                        bool use_dist);

/// Series-level point scores; each point takes the value from the last
/// window (in end-time order) that covers it. Uncovered points score 0.
std::vector<double> assemble_point_scores(std::span<const double> window_scores,
                                          std::span<const std::size_t> end_times, std::size_t lookback,
                                          std::size_t length);

/// p_hat per window: mean point score over the look-back window.
std::vector<double> window_probabilities(std::span<const double> window_scores, std::size_t lookback);

enum class ThresholdKind { quantile, fixed };

struct ThresholdPolicy {
  ThresholdKind kind = ThresholdKind::quantile;
  double quantile = 0.99;
  double value = 0.0;

  void validate() const;
};

/// sorted[j - 1] with j = floor(q * n) + 1 clamped to n.
double nearest_rank_quantile(std::vector<double> scores, double q);
double calibrate_threshold(std::span<const double> calibration_scores, const ThresholdPolicy& policy);
/// 1 where score >= mu.
std::vector<std::uint8_t> apply_threshold(std::span<const double> scores, double mu);

}  // namespace multirc
