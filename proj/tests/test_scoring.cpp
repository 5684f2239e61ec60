#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "multirc/errors.hpp"
#include "multirc/scoring.hpp"
#include "multirc/trainer.hpp"

using namespace multirc;

namespace {

ModelConfig small_model(std::size_t scales) {
  ModelConfig cfg;
  cfg.window = 16;
  cfg.d_model = 8;
  cfg.heads = 2;
  cfg.blocks = 1;
  cfg.ff_width = 16;
  cfg.scales = scales;
  return cfg;
}

WindowSet synthetic_windows(std::size_t h) {
  SynthScenario sc;
  sc.length = 256;
  sc.channels = 2;
  sc.events = 0;
  auto series = synth_generate(sc, 3).series;
  return prepare_windows(series, {.lookback = h, .stride = 8});
}

}  // namespace

TEST(Threshold, nearest_rank_quantile_examples) {
  std::vector<double> scores(100);
  std::iota(scores.begin(), scores.end(), 1.0);
  EXPECT_EQ(nearest_rank_quantile(scores, 0.99), 100.0);
  EXPECT_EQ(nearest_rank_quantile({5, 1, 4, 2, 3}, 0.5), 3.0);
  EXPECT_EQ(nearest_rank_quantile({7.0}, 0.01), 7.0);
  EXPECT_THROW(nearest_rank_quantile({}, 0.5), DataError);
}

TEST(Threshold, quantile_matches_sorted_rank_oracle) {
  Rng rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const auto n = static_cast<std::size_t>(rng.uniform_int(1, 60));
    std::vector<double> s(n);
    for (auto& v : s) v = rng.normal();
    const double q = rng.uniform(0.01, 0.99);
    auto sorted = s;
    std::sort(sorted.begin(), sorted.end());
    // Smallest order statistic with more than q * n values at or below it.
    std::size_t j = 1;
    while (j < n && static_cast<double>(j) <= q * static_cast<double>(n)) ++j;
    EXPECT_EQ(nearest_rank_quantile(s, q), sorted[j - 1]);
  }
}

TEST(Threshold, fixed_policy_and_validation) {
  ThresholdPolicy fixed{.kind = ThresholdKind::fixed, .value = 0.5};
  EXPECT_EQ(calibrate_threshold(std::vector<double>{1, 2, 3}, fixed), 0.5);
  ThresholdPolicy bad{.kind = ThresholdKind::quantile, .quantile = 1.0};
  EXPECT_THROW(calibrate_threshold(std::vector<double>{1}, bad), ConfigError);
}

TEST(Threshold, labels_follow_the_inclusive_rule_and_are_monotone) {
  Rng rng(3);
  std::vector<double> s(200);
  for (auto& v : s) v = rng.uniform(0, 1);
  auto at = apply_threshold(s, s[17]);
  EXPECT_EQ(at[17], 1);
  std::size_t prev = s.size() + 1;
  for (double mu = 0.0; mu <= 1.0; mu += 0.05) {
    auto labels = apply_threshold(s, mu);
    const auto pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
    EXPECT_LE(pos, prev);
    prev = pos;
    for (std::size_t i = 0; i < s.size(); ++i) EXPECT_EQ(labels[i], s[i] >= mu ? 1 : 0);
  }
}

TEST(Probabilities, mean_of_window_scores) {
  auto p = window_probabilities(std::vector<double>{1, 2, 3, 4, 0, 0, 0, 0}, 4);
  ASSERT_EQ(p.size(), 2u);
  EXPECT_DOUBLE_EQ(p[0], 2.5);
  EXPECT_EQ(p[1], 0.0);
}

TEST(Assembly, last_window_wins_and_uncovered_points_are_zero) {
  // Two windows of length 3 ending at 3 and 4 over a series of length 6.
  auto s = assemble_point_scores(std::vector<double>{1, 2, 3, 10, 20, 30}, std::vector<std::size_t>{3, 4}, 3, 6);
  EXPECT_EQ(s, (std::vector<double>{0, 1, 10, 20, 30, 0}));
}

TEST(Normalizer, requires_calibration_and_clamps_below) {
  ScoreNormalizer n;
  EXPECT_THROW(n.combine(1, 1, true), ConfigError);
  ScoreComponents comps;
  comps.rec = {1, 3};
  comps.dist = {0, 2};
  n = ScoreNormalizer::fit(comps);
  EXPECT_EQ(n.combine(1, 0, true), 0.0);
  EXPECT_DOUBLE_EQ(n.combine(3, 2, true), 2.0);
  EXPECT_DOUBLE_EQ(n.combine(3, 2, false), 1.0);
  EXPECT_EQ(n.combine(0, -1, true), 0.0);
}

TEST(Scoring, zero_error_and_identical_reps_score_zero) {
  ScoreComponents comps;
  comps.lookback = 2;
  comps.rec = {0, 0, 0.5, 1};
  comps.dist = {0, 0, 1, 0.2};
  comps.end_times = {1, 2};
  auto n = ScoreNormalizer::fit(comps);
  auto s = window_point_scores(comps, n, true);
  EXPECT_EQ(s[0], 0.0);
  EXPECT_EQ(s[1], 0.0);
}

TEST(Scoring, single_scale_has_no_distance_term) {
  MultiRCModel model(small_model(1), 1);
  auto set = synthetic_windows(16);
  auto comps = score_components(model, set, Task::detection, ScoreConfig{});
  for (double d : comps.dist) EXPECT_EQ(d, 0.0);
  auto n = ScoreNormalizer::fit(comps);
  auto with = window_point_scores(comps, n, true);
  auto without = window_point_scores(comps, n, false);
  EXPECT_EQ(with, without);
}

TEST(Scoring, repeated_scoring_is_identical_and_side_effect_free) {
  MultiRCModel model(small_model(2), 2);
  auto set = synthetic_windows(16);
  const auto hash = parameter_hash(model);
  auto a = score_components(model, set, Task::prediction, ScoreConfig{});
  auto b = score_components(model, set, Task::prediction, ScoreConfig{});
  EXPECT_EQ(a.rec, b.rec);
  EXPECT_EQ(a.dist, b.dist);
  EXPECT_EQ(parameter_hash(model), hash);
  EXPECT_EQ(a.windows(), set.windows());
  for (double v : a.rec) EXPECT_GE(v, 0.0);
}

TEST(Scoring, batch_size_does_not_change_scores) {
  MultiRCModel model(small_model(2), 4);
  auto set = synthetic_windows(16);
  ScoreConfig one;
  one.batch_windows = 1;
  auto a = score_components(model, set, Task::detection, one);
  auto b = score_components(model, set, Task::detection, ScoreConfig{});
  for (std::size_t i = 0; i < a.rec.size(); ++i) {
    EXPECT_NEAR(a.rec[i], b.rec[i], 1e-9);
    EXPECT_NEAR(a.dist[i], b.dist[i], 1e-9);
  }
}

TEST(InferenceMask, names_round_trip) {
  for (auto m : {InferenceMask::automatic, InferenceMask::none, InferenceMask::dominant})
    EXPECT_EQ(parse_inference_mask(to_string(m)), m);
  EXPECT_THROW(parse_inference_mask("random"), ConfigError);
}

TEST(ChannelReduce, max_bounds_the_mean_and_names_round_trip) {
  MultiRCModel model(small_model(2), 5);
  auto set = synthetic_windows(16);
  ScoreConfig mean_cfg, max_cfg;
  max_cfg.channels = ChannelReduce::max;
  auto mean = score_components(model, set, Task::detection, mean_cfg);
  auto max = score_components(model, set, Task::detection, max_cfg);
  const double c = static_cast<double>(set.channels);
  for (std::size_t i = 0; i < mean.rec.size(); ++i) {
    EXPECT_GE(max.rec[i], mean.rec[i] - 1e-12);
    EXPECT_LE(max.rec[i], c * mean.rec[i] + 1e-12);
    EXPECT_GE(max.dist[i], mean.dist[i] - 1e-12);
    EXPECT_LE(max.dist[i], c * mean.dist[i] + 1e-12);
  }
  for (auto r : {ChannelReduce::mean, ChannelReduce::max}) EXPECT_EQ(parse_channel_reduce(to_string(r)), r);
  EXPECT_THROW(parse_channel_reduce("median"), ConfigError);
}

TEST(Scoring, injected_spike_attains_the_window_maximum) {
  SynthScenario sc;
  sc.length = 768;
  sc.channels = 2;
  sc.events = 0;
  auto clean = synth_generate(sc, 21).series;
  auto [train, valid] = split_train_valid(clean, 0.75, 64);
  WindowConfig w{.lookback = 16, .stride = 4};
  auto train_set = prepare_windows(train, w), valid_set = prepare_windows(valid, w);
  MultiRCModel model(small_model(2), 21);
  TrainConfig cfg;
  cfg.lr = 1e-3;
  cfg.max_epochs = 20;
  fit(model, train_set, valid_set, cfg);

  ScoreConfig score_cfg;
  auto normalizer = ScoreNormalizer::fit(score_components(model, valid_set, Task::detection, score_cfg));
  auto test = synth_generate(sc, 22).series;
  const std::size_t spike = 300;
  test.values[spike * test.channels] += 6.0 * sc.amplitude;
  auto set = prepare_windows(test, {.lookback = 16, .stride = 1});
  auto comps = score_components(model, set, Task::detection, score_cfg);
  auto scores = window_point_scores(comps, normalizer, score_cfg.use_dist);
  std::size_t checked = 0;
  for (std::size_t k = 0; k < comps.windows(); ++k) {
    const std::size_t end = comps.end_times[k];
    if (spike > end || spike + 16 <= end) continue;
    const auto first = scores.begin() + static_cast<std::ptrdiff_t>(k * 16);
    const auto at = static_cast<std::size_t>(std::max_element(first, first + 16) - first);
    EXPECT_EQ(end + 1 - 16 + at, spike) << "window ending at " << end;
    ++checked;
  }
  EXPECT_EQ(checked, 16u);
}

TEST(InferenceMask, automatic_masks_detection_windows_only) {
  MultiRCModel model(small_model(2), 6);
  auto set = synthetic_windows(16);
  ScoreConfig automatic, dominant, none;
  dominant.mask = InferenceMask::dominant;
  none.mask = InferenceMask::none;
  EXPECT_EQ(score_components(model, set, Task::detection, automatic).rec,
            score_components(model, set, Task::detection, dominant).rec);
  EXPECT_EQ(score_components(model, set, Task::prediction, automatic).rec,
            score_components(model, set, Task::prediction, none).rec);
  EXPECT_NE(score_components(model, set, Task::detection, dominant).rec,
            score_components(model, set, Task::detection, none).rec);
}
