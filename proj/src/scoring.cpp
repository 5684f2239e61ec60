#include "multirc/scoring.hpp"

#include <algorithm>
#include <cmath>

#include "multirc/errors.hpp"
#include "multirc/losses.hpp"
#include "multirc/ops.hpp"

namespace multirc {

std::string to_string(InferenceMask mask) {
  switch (mask) {
    case InferenceMask::automatic: return "auto";
    case InferenceMask::none: return "none";
    case InferenceMask::dominant: return "dominant";
  }
  return "auto";
}

InferenceMask parse_inference_mask(const std::string& text) {
  if (text == "auto") return InferenceMask::automatic;
  if (text == "none") return InferenceMask::none;
  if (text == "dominant") return InferenceMask::dominant;
  throw ConfigError("unknown inference mask '" + text + "' (expected auto, none or dominant)");
}

std::string to_string(ChannelReduce reduce) { return reduce == ChannelReduce::max ? "max" : "mean"; }

ChannelReduce parse_channel_reduce(const std::string& text) {
  if (text == "mean") return ChannelReduce::mean;
  if (text == "max") return ChannelReduce::max;
  throw ConfigError("unknown channel reduction '" + text + "' (expected mean or max)");
}

ScoreComponents score_components(const MultiRCModel& model, const WindowSet& set, Task task, const ScoreConfig& cfg) {
  const ModelConfig& mc = model.config();
  const std::size_t h = set.lookback, c = set.channels, a = mc.scales, L = mc.padded_window();
  if (mc.window != h) throw ShapeError("model window does not match the scored windows");
  if (cfg.batch_windows == 0) throw ConfigError("batch_windows must be positive");
  const bool masked = cfg.mask == InferenceMask::dominant ||
                      (cfg.mask == InferenceMask::automatic && task == Task::detection);

  ScoreComponents out;
  out.lookback = h;
  out.end_times = set.end_times;
  out.rec.assign(set.windows() * h, 0.0);
  out.dist.assign(set.windows() * h, 0.0);
  const double inv_c = 1.0 / static_cast<double>(c);
  const auto reduce = [&](double& acc, double v) {
    if (cfg.channels == ChannelReduce::max)
      acc = std::max(acc, v);
    else
      acc += v * inv_c;
  };
  const double inv_pairs = a > 1 ? 2.0 / static_cast<double>(a * (a - 1)) : 0.0;

  for (std::size_t start = 0; start < set.windows(); start += cfg.batch_windows) {
    const std::size_t end = std::min(start + cfg.batch_windows, set.windows());
    const std::size_t B = (end - start) * c;
    std::vector<double> input;
    input.reserve(B * L);
    for (std::size_t k = start * c; k < end * c; ++k) {
      auto x = set.item(k);
      std::vector<double> xm(x.begin(), x.end());
      if (masked) xm = apply_mask(x, make_mask(h, set.periods[k].periods.front(), cfg.orientation));
      input.insert(input.end(), xm.begin(), xm.end());
      input.insert(input.end(), L - h, xm.back());
    }
    std::vector<Tensor> reps(a);
    for (std::size_t p = 0; p < a; ++p) {
      reps[p] = model.encode(p, model.embed(p, Tensor({B * mc.patch_count(p), mc.patch_size(p)}, input)));
    }
    const Tensor x_hat = model.decode(reps, B);
    std::vector<Tensor> up(a);
    if (cfg.use_dist && a > 1) {
      for (std::size_t p = 0; p < a; ++p) {
        up[p] = upsample_reps(reps[p], mc.patch_count(p), L);
        if (cfg.normalize_reps) up[p] = ops::l2_normalize_rows(up[p]);
      }
    }
    const std::size_t d = mc.d_model;
    for (std::size_t b = 0; b < B; ++b) {
      const std::size_t k = start * c + b, w = k / c;
      const auto x = set.item(k);
      for (std::size_t t = 0; t < h; ++t) {
        const double e = (x_hat[b * h + t] - x[t]) * set.std[k];
        reduce(out.rec[w * h + t], e * e);
      }
      if (!cfg.use_dist || a < 2) continue;
      for (std::size_t t = 0; t < h; ++t) {
        const std::size_t row = b * L + t;
        double acc = 0.0;
        for (std::size_t p = 0; p < a; ++p) {
          for (std::size_t q = p + 1; q < a; ++q) {
            double s = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
              const double diff = up[p][row * d + j] - up[q][row * d + j];
              s += diff * diff;
            }
            acc += std::sqrt(s);
          }
        }
        reduce(out.dist[w * h + t], acc * inv_pairs);
      }
    }
  }
  return out;
}

ScoreNormalizer ScoreNormalizer::fit(const ScoreComponents& components) {
  if (components.rec.empty()) throw DataError("empty calibration set");
  ScoreNormalizer n;
  const auto [rmin, rmax] = std::minmax_element(components.rec.begin(), components.rec.end());
  const auto [dmin, dmax] = std::minmax_element(components.dist.begin(), components.dist.end());
  n.rec_min = *rmin;
  n.rec_max = *rmax;
  n.dist_min = *dmin;
  n.dist_max = *dmax;
  n.calibrated = true;
  return n;
}

double ScoreNormalizer::combine(double rec, double dist, bool use_dist) const {
  if (!calibrated) throw ConfigError("uncalibrated normalizer");
  auto scale = [](double v, double lo, double hi) {
    const double span = hi - lo;
    return span > 0.0 ? std::max(0.0, (v - lo) / span) : std::max(0.0, v - lo);
  };
  double s = scale(rec, rec_min, rec_max);
  if (use_dist) s += scale(dist, dist_min, dist_max);
  return s;
}

std::vector<double> window_point_scores(const ScoreComponents& components, const ScoreNormalizer& normalizer,
                                        bool use_dist) {
  std::vector<double> out(components.rec.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = normalizer.combine(components.rec[i], components.dist[i], use_dist);
  return out;
}

std::vector<double> assemble_point_scores(std::span<const double> window_scores,
                                          std::span<const std::size_t> end_times, std::size_t lookback,
                                          std::size_t length) {
  if (window_scores.size() != end_times.size() * lookback) throw ShapeError("window score count mismatch");
  std::vector<double> out(length, 0.0);
  for (std::size_t w = 0; w < end_times.size(); ++w) {
    const std::size_t first = end_times[w] + 1 - lookback;
    if (end_times[w] >= length) throw DataError("window end beyond the series");
    for (std::size_t t = 0; t < lookback; ++t) out[first + t] = window_scores[w * lookback + t];
  }
  return out;
}

std::vector<double> window_probabilities(std::span<const double> window_scores, std::size_t lookback) {
  if (lookback == 0 || window_scores.size() % lookback != 0) throw ShapeError("window score count mismatch");
  std::vector<double> out(window_scores.size() / lookback);
  for (std::size_t w = 0; w < out.size(); ++w) {
    double s = 0.0;
    for (std::size_t t = 0; t < lookback; ++t) s += window_scores[w * lookback + t];
    out[w] = s / static_cast<double>(lookback);
  }
  return out;
}

void ThresholdPolicy::validate() const {
  if (kind == ThresholdKind::quantile && !(quantile > 0.0 && quantile < 1.0)) {
    throw ConfigError("threshold quantile must lie strictly between 0 and 1");
  }
  if (kind == ThresholdKind::fixed && !std::isfinite(value)) throw ConfigError("fixed threshold must be finite");
}

double nearest_rank_quantile(std::vector<double> scores, double q) {
  if (scores.empty()) throw DataError("empty calibration set");
  std::sort(scores.begin(), scores.end());
  const auto n = scores.size();
  const auto j = std::min(n, static_cast<std::size_t>(std::floor(q * static_cast<double>(n) + 1e-9)) + 1);
  return scores[j - 1];
}

double calibrate_threshold(std::span<const double> calibration_scores, const ThresholdPolicy& policy) {
  policy.validate();
  if (policy.kind == ThresholdKind::fixed) return policy.value;
  return nearest_rank_quantile({calibration_scores.begin(), calibration_scores.end()}, policy.quantile);
}

std::vector<std::uint8_t> apply_threshold(std::span<const double> scores, double mu) {
  std::vector<std::uint8_t> out(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) out[i] = scores[i] >= mu ? 1 : 0;
  return out;
}

}  // namespace multirc
