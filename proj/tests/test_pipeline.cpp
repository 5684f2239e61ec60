#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "multirc/errors.hpp"
#include "multirc/pipeline.hpp"
#include "multirc/rng.hpp"

using namespace multirc;

namespace {

TimeSeries series_with_labels(std::vector<std::uint8_t> labels) {
  TimeSeries ts;
  ts.length = labels.size();
  ts.channels = 1;
  ts.values.resize(labels.size());
  for (std::size_t t = 0; t < ts.length; ++t) ts.values[t] = static_cast<double>(t);
  ts.labels = std::move(labels);
  return ts;
}

}  // namespace

TEST(Csv, parses_channels_and_labels) {
  std::istringstream in("a,b,label\n1,2,0\n3,4,0\n5,6.5,1\n");
  auto ts = read_csv(in, true);
  EXPECT_EQ(ts.length, 3u);
  EXPECT_EQ(ts.channels, 2u);
  EXPECT_EQ(*ts.labels, (std::vector<std::uint8_t>{0, 0, 1}));
  EXPECT_EQ(ts.at(2, 1), 6.5);
  EXPECT_EQ(ts.channel_names, (std::vector<std::string>{"a", "b"}));
}

TEST(Csv, header_only_is_an_empty_series) {
  std::istringstream in("a,b,label\n");
  try {
    read_csv(in, true);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("empty series"), std::string::npos);
  }
}

TEST(Csv, rejects_ragged_non_numeric_and_bad_labels) {
  std::istringstream ragged("a,b\n1,2\n3\n");
  EXPECT_THROW(read_csv(ragged, false), DataError);
  std::istringstream text("a,b\n1,x\n");
  EXPECT_THROW(read_csv(text, false), DataError);
  std::istringstream label("a,label\n1,2\n");
  EXPECT_THROW(read_csv(label, true), DataError);
}

TEST(Csv, round_trip_preserves_numeric_text) {
  std::string body = "x,y,label\n";
  Rng rng(5);
  for (int i = 0; i < 10; ++i) {
    body += format_double(rng.normal() * 1e3) + "," + format_double(rng.uniform(-1, 1) * 1e-7) + "," +
            std::to_string(i % 2) + "\n";
  }
  std::istringstream in(body);
  auto ts = read_csv(in, true);
  std::ostringstream out;
  write_csv(out, ts);
  EXPECT_EQ(out.str(), body);
}

TEST(InstanceNormalize, hand_computed_channel) {
  auto [out, stats] = instance_normalize(std::vector<double>{2, 4, 6}, 3, 1);
  const double sd = std::sqrt(8.0 / 3.0);
  EXPECT_NEAR(out[0], -2.0 / sd, 1e-12);
  EXPECT_NEAR(out[0], -1.2247, 1e-4);
  EXPECT_EQ(out[1], 0.0);
  EXPECT_NEAR(out[2], 1.2247, 1e-4);
  EXPECT_DOUBLE_EQ(stats.mean[0], 4.0);
  EXPECT_NEAR(stats.std[0], 1.63299, 1e-5);
}

TEST(InstanceNormalize, constant_channel_maps_to_zero) {
  auto [out, stats] = instance_normalize(std::vector<double>{5, 5, 5}, 3, 1);
  for (double v : out) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(stats.std[0], kStdFloor);
}

TEST(InstanceNormalize, idempotent_and_shift_invariant) {
  Rng rng(8);
  const std::size_t h = 24, c = 3;
  std::vector<double> w(h * c);
  for (auto& v : w) v = rng.normal() * 3.0 + 1.0;
  auto [once, s1] = instance_normalize(w, h, c);
  auto [twice, s2] = instance_normalize(once, h, c);
  for (std::size_t i = 0; i < once.size(); ++i) EXPECT_NEAR(once[i], twice[i], 1e-9);
  for (auto& v : w) v += 123.0;
  auto [shifted, s3] = instance_normalize(w, h, c);
  for (std::size_t i = 0; i < once.size(); ++i) EXPECT_NEAR(once[i], shifted[i], 1e-9);
}

TEST(InstanceNormalize, rejects_single_step) {
  EXPECT_THROW(instance_normalize(std::vector<double>{1.0}, 1, 1), DataError);
}

TEST(SlideWindows, prediction_window_end_times) {
  auto ts = series_with_labels(std::vector<std::uint8_t>(10, 0));
  auto batch = slide_windows(ts, {.lookback = 4, .lookforward = 2, .stride = 1, .task = Task::prediction});
  EXPECT_EQ(batch.end_times, (std::vector<std::size_t>{3, 4, 5, 6, 7}));
  for (auto l : batch.labels) EXPECT_EQ(l, 0);
}

TEST(SlideWindows, anomaly_at_last_index_labels_preceding_windows) {
  std::vector<std::uint8_t> labels(10, 0);
  labels[9] = 1;
  auto batch = slide_windows(series_with_labels(labels), {.lookback = 4, .lookforward = 2, .task = Task::prediction});
  EXPECT_EQ(batch.labels, (std::vector<std::uint8_t>{0, 0, 0, 0, 1}));
  // End time 8 is not a prediction window (its look-forward leaves the series),
  // so the lookahead rule is checked directly.
  EXPECT_EQ(lookahead_label(labels, 7, 2), 1);
  EXPECT_EQ(lookahead_label(labels, 8, 2), 1);
  EXPECT_EQ(lookahead_label(labels, 6, 2), 0);
}

TEST(SlideWindows, count_matches_enumeration) {
  for (std::size_t T = 1; T <= 50; ++T) {
    for (std::size_t h = 1; h <= 10; ++h) {
      for (std::size_t stride = 1; stride <= 3; ++stride) {
        for (auto task : {Task::detection, Task::prediction}) {
          WindowConfig cfg{.lookback = h, .lookforward = 3, .stride = stride, .task = task};
          const std::size_t f = task == Task::prediction ? 3 : 0;
          std::size_t brute = 0;
          for (std::size_t end = h - 1; end + f < T; end += stride) ++brute;
          ASSERT_EQ(window_count(T, cfg), brute) << T << " " << h << " " << stride;
        }
      }
    }
  }
}

TEST(SlideWindows, windows_lie_inside_the_series) {
  auto ts = series_with_labels(std::vector<std::uint8_t>(30, 0));
  auto batch = slide_windows(ts, {.lookback = 5, .stride = 2});
  for (std::size_t w = 0; w < batch.size(); ++w) {
    const auto end = batch.end_times[w];
    for (std::size_t k = 0; k < 5; ++k) EXPECT_EQ(batch.windows[w * 5 + k], static_cast<double>(end - 4 + k));
  }
}

TEST(SlideWindows, prediction_labels_match_max_scan) {
  Rng rng(21);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::uint8_t> labels(40);
    for (auto& l : labels) l = rng.bernoulli(0.1);
    auto batch = slide_windows(series_with_labels(labels), {.lookback = 6, .lookforward = 4, .task = Task::prediction});
    for (std::size_t w = 0; w < batch.size(); ++w) {
      std::uint8_t mx = 0;
      for (std::size_t k = batch.end_times[w] + 1; k <= batch.end_times[w] + 4; ++k) mx = std::max(mx, labels[k]);
      ASSERT_EQ(batch.labels[w], mx);
    }
  }
}

TEST(SlideWindows, too_short_series_is_an_error) {
  auto ts = series_with_labels(std::vector<std::uint8_t>(5, 0));
  EXPECT_THROW(slide_windows(ts, {.lookback = 6}), DataError);
}

TEST(Split, eight_to_two_ratio) {
  auto ts = series_with_labels(std::vector<std::uint8_t>(100, 0));
  auto [train, valid] = split_train_valid(ts, 0.8);
  EXPECT_EQ(train.length, 80u);
  EXPECT_EQ(valid.length, 20u);
  EXPECT_EQ(valid.values.front(), 80.0);
}

TEST(Split, half_and_degenerate) {
  auto ts = series_with_labels(std::vector<std::uint8_t>(10, 0));
  auto [a, b] = split_train_valid(ts, 0.5);
  EXPECT_EQ(a.length, 5u);
  EXPECT_EQ(b.length, 5u);
  EXPECT_THROW(split_train_valid(ts, 0.99, 20), DataError);
  EXPECT_THROW(split_train_valid(ts, 1.0), ConfigError);
}

TEST(Synth, zero_events_gives_all_zero_labels) {
  SynthScenario sc;
  sc.events = 0;
  auto res = synth_generate(sc, 3);
  EXPECT_EQ(res.series.length, sc.length);
  for (auto l : *res.series.labels) EXPECT_EQ(l, 0);
}

TEST(Synth, deterministic_for_a_seed) {
  SynthScenario sc;
  sc.precursor_length = 16;
  auto a = synth_generate(sc, 7);
  auto b = synth_generate(sc, 7);
  auto c = synth_generate(sc, 8);
  EXPECT_EQ(a.series.values, b.series.values);
  EXPECT_EQ(*a.series.labels, *b.series.labels);
  EXPECT_NE(a.series.values, c.series.values);
}

TEST(Synth, precursor_points_are_normal_and_precede_anomalies) {
  SynthScenario sc;
  sc.precursor_length = 16;
  auto res = synth_generate(sc, 7);
  ASSERT_EQ(res.events.size(), sc.events);
  for (const auto& ev : res.events) {
    EXPECT_EQ(ev.anomaly_begin - ev.precursor_begin, 16u);
    for (auto t = ev.precursor_begin; t < ev.anomaly_begin; ++t) EXPECT_EQ((*res.series.labels)[t], 0);
    for (auto t = ev.anomaly_begin; t < ev.anomaly_end; ++t) EXPECT_EQ((*res.series.labels)[t], 1);
  }
}

TEST(Synth, drift_precursor_shifts_the_mean_by_the_configured_amount) {
  SynthScenario sc;
  sc.periods = {16.0};
  sc.precursor_length = 16;
  sc.precursor_strength = 1.0;
  sc.segments = {{1000, 1020}};
  auto res = synth_generate(sc, 7);
  const auto& ev = res.events.at(0);
  const std::size_t ch = ev.channels.at(0);
  double pre = 0.0, before = 0.0;
  for (std::size_t k = 0; k < 16; ++k) {
    pre += res.series.at(ev.precursor_begin + k, ch);
    before += res.series.at(ev.precursor_begin - 16 + k, ch);
  }
  const double drift = (pre - before) / 16.0;
  const double configured = sc.precursor_strength * sc.amplitude;
  EXPECT_NEAR(drift, configured, 0.1 * configured);
}

TEST(Synth, overlapping_segments_are_rejected) {
  SynthScenario sc;
  sc.segments = {{100, 140}, {130, 150}};
  EXPECT_THROW(synth_generate(sc, 1), ConfigError);
}
