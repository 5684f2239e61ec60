#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace multirc {

enum class Task { detection, prediction };

std::string to_string(Task task);
Task parse_task(const std::string& text);

/// T x c real-valued series stored row-major (one row per timestamp).
struct TimeSeries {
  std::size_t length = 0;
  std::size_t channels = 0;
  std::vector<double> values;
  std::optional<std::vector<std::uint8_t>> labels;
  std::vector<std::string> channel_names;

  double at(std::size_t t, std::size_t ch) const { return values[t * channels + ch]; }
  std::vector<double> channel(std::size_t ch) const;
  /// Rows [begin, end) as a new series, labels included.
  TimeSeries slice(std::size_t begin, std::size_t end) const;
  /// Throws DataError when the shape or label invariants are broken.
  void validate() const;
};

TimeSeries read_csv(std::istream& in, bool has_labels);
TimeSeries load_csv(const std::filesystem::path& path, bool has_labels);
/// Shortest round-trip formatting, so parse -> write reproduces numeric text.
void write_csv(std::ostream& out, const TimeSeries& series);
void save_csv(const std::filesystem::path& path, const TimeSeries& series);
std::string format_double(double value);

struct WindowConfig {
  std::size_t lookback = 32;   // h
  std::size_t lookforward = 4;  // f
  std::size_t stride = 1;
  Task task = Task::detection;

  void validate(std::size_t largest_patch = 1) const;
  std::size_t span() const { return lookback + (task == Task::prediction ? lookforward : 0); }
};

/// floor((T - h - f_task) / stride) + 1, or 0 when the series is too short.
std::size_t window_count(std::size_t length, const WindowConfig& cfg);

struct WindowBatch {
  std::size_t lookback = 0;
  std::size_t channels = 0;
  std::vector<double> windows;  // B x h x c
  std::vector<std::size_t> end_times;
  /// Prediction: one label per window (any anomaly in (t, t+f]).
  /// Detection: B x h point labels copied from the series.
  std::vector<std::uint8_t> labels;

  std::size_t size() const { return end_times.size(); }
};

WindowBatch slide_windows(const TimeSeries& series, const WindowConfig& cfg);

/// 1 iff any label in (t, t+f] is 1.
std::uint8_t lookahead_label(std::span<const std::uint8_t> labels, std::size_t end_time, std::size_t lookforward);

struct NormStats {
  std::vector<double> mean;
  std::vector<double> std;
};

inline constexpr double kStdFloor = 1e-8;

/// Per-channel standardization of an h x c row-major window (population std,
/// floored at kStdFloor).
std::pair<std::vector<double>, NormStats> instance_normalize(std::span<const double> window, std::size_t lookback,
                                                             std::size_t channels);

/// Contiguous prefix/suffix split; both parts must hold at least `min_length` rows.
std::pair<TimeSeries, TimeSeries> split_train_valid(const TimeSeries& series, double ratio = 0.8,
                                                    std::size_t min_length = 1);

// Synthetic precursor scenarios

enum class PrecursorType { drift, variance, frequency };

std::string to_string(PrecursorType type);
PrecursorType parse_precursor_type(const std::string& text);

struct SynthScenario {
  std::size_t length = 4096;
  std::size_t channels = 3;
  /// Base period per channel; cycled when shorter than `channels`.
  std::vector<double> periods = {16.0, 24.0, 32.0};
  double amplitude = 1.0;
  double noise = 0.1;
  std::size_t events = 6;
  std::size_t anomaly_min_length = 12;
  std::size_t anomaly_max_length = 24;
  std::size_t precursor_length = 0;
  PrecursorType precursor_type = PrecursorType::drift;
  /// Drift: mean offset of the precursor segment, in units of amplitude.
  double precursor_strength = 1.0;
  double anomaly_strength = 3.0;
  /// No events start before this index.
  std::size_t warmup = 128;
  /// Explicit anomaly segments [begin, end); overrides random placement.
  std::vector<std::pair<std::size_t, std::size_t>> segments;

  void validate() const;
};

struct SynthEvent {
  std::size_t precursor_begin = 0;
  std::size_t anomaly_begin = 0;
  std::size_t anomaly_end = 0;
  std::vector<std::size_t> channels;
};

struct SynthResult {
  TimeSeries series;
  std::vector<SynthEvent> events;
};

SynthResult synth_generate(const SynthScenario& scenario, std::uint64_t seed);

void write_events_csv(std::ostream& out, const std::vector<SynthEvent>& events);

}  // namespace multirc
