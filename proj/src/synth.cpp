#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>

#include "multirc/errors.hpp"
#include "multirc/pipeline.hpp"
#include "multirc/rng.hpp"

namespace multirc {

std::string to_string(PrecursorType type) {
  switch (type) {
    case PrecursorType::drift: return "drift";
    case PrecursorType::variance: return "variance";
    case PrecursorType::frequency: return "frequency";
  }
  return "drift";
}

PrecursorType parse_precursor_type(const std::string& text) {
  if (text == "drift") return PrecursorType::drift;
  if (text == "variance") return PrecursorType::variance;
  if (text == "frequency") return PrecursorType::frequency;
  throw ConfigError("unknown precursor type '" + text + "' (expected drift, variance or frequency)");
}

void SynthScenario::validate() const {
  if (length < 2) throw ConfigError("synthetic series needs at least two points");
  if (channels == 0) throw ConfigError("synthetic series needs at least one channel");
  if (periods.empty()) throw ConfigError("synthetic scenario needs at least one base period");
  for (double p : periods)
    if (!(p >= 2.0)) throw ConfigError("base periods must be at least 2 samples");
  if (noise < 0.0 || amplitude <= 0.0) throw ConfigError("noise must be >= 0 and amplitude > 0");
  if (anomaly_min_length == 0 || anomaly_min_length > anomaly_max_length) {
    throw ConfigError("anomaly length range is empty");
  }
  std::vector<std::pair<std::size_t, std::size_t>> spans;
  for (auto [b, e] : segments) {
    if (b >= e || e > length) throw ConfigError("anomaly segment out of range");
    if (b < precursor_length) throw ConfigError("anomaly segment leaves no room for its precursor");
    spans.emplace_back(b - precursor_length, e);
  }
  std::sort(spans.begin(), spans.end());
  for (std::size_t i = 1; i < spans.size(); ++i) {
    if (spans[i].first < spans[i - 1].second) throw ConfigError("overlapping anomaly segments");
  }
}

namespace {

constexpr std::size_t kGap = 16;

std::vector<SynthEvent> place_events(const SynthScenario& sc, Rng& rng) {
  std::vector<SynthEvent> events;
  if (!sc.segments.empty()) {
    auto segs = sc.segments;
    std::sort(segs.begin(), segs.end());
    for (auto [b, e] : segs) events.push_back({b - sc.precursor_length, b, e, {}});
    return events;
  }
  if (sc.events == 0) return events;
  const std::size_t footprint = sc.precursor_length + sc.anomaly_max_length + 2 * kGap;
  if (sc.warmup + sc.events * footprint > sc.length) {
    throw ConfigError("series too short to place " + std::to_string(sc.events) + " events");
  }
  const std::size_t slot = (sc.length - sc.warmup) / sc.events;
  for (std::size_t k = 0; k < sc.events; ++k) {
    const std::size_t len = static_cast<std::size_t>(rng.uniform_int(
        static_cast<std::int64_t>(sc.anomaly_min_length), static_cast<std::int64_t>(sc.anomaly_max_length)));
    const std::size_t lo = sc.warmup + k * slot + kGap;
    const std::size_t hi = sc.warmup + (k + 1) * slot - kGap - sc.precursor_length - len;
    const auto start = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(lo),
                                                                static_cast<std::int64_t>(std::max(lo, hi))));
    events.push_back({start, start + sc.precursor_length, start + sc.precursor_length + len, {}});
  }
  return events;
}

}  // namespace

SynthResult synth_generate(const SynthScenario& sc, std::uint64_t seed) {
  sc.validate();
  const Rng root(seed);
  Rng layout = root.split(0);
  auto events = place_events(sc, layout);
  for (auto& ev : events) {
    for (std::size_t ch = 0; ch < sc.channels; ++ch)
      if (layout.bernoulli(0.7)) ev.channels.push_back(ch);
    if (ev.channels.empty()) {
      ev.channels.push_back(static_cast<std::size_t>(layout.uniform_int(0, static_cast<std::int64_t>(sc.channels) - 1)));
    }
  }

  const std::size_t T = sc.length, c = sc.channels;
  TimeSeries ts;
  ts.length = T;
  ts.channels = c;
  ts.values.assign(T * c, 0.0);
  ts.labels = std::vector<std::uint8_t>(T, 0);
  for (std::size_t ch = 0; ch < c; ++ch) ts.channel_names.push_back("ch" + std::to_string(ch));
  for (const auto& ev : events)
    for (std::size_t t = ev.anomaly_begin; t < ev.anomaly_end; ++t) (*ts.labels)[t] = 1;

  const double A = sc.amplitude;
  for (std::size_t ch = 0; ch < c; ++ch) {
    Rng rng = root.split(1 + ch);
    const double period = sc.periods[ch % sc.periods.size()];
    const double omega = 2.0 * std::numbers::pi / period;
    const double phase2 = rng.uniform(0.0, 2.0 * std::numbers::pi);
    double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);

    // Per-step modifiers, filled in from the events touching this channel.
    std::vector<double> offset(T, 0.0), extra_sd(T, 0.0), freq_mult(T, 1.0), amp_mult(T, 1.0);
    for (std::size_t e = 0; e < events.size(); ++e) {
      const auto& ev = events[e];
      if (std::find(ev.channels.begin(), ev.channels.end(), ch) == ev.channels.end()) continue;
      const std::size_t r = ev.anomaly_begin - ev.precursor_begin;
      const double s = sc.precursor_strength;
      double carried = 0.0;
      for (std::size_t k = 0; k < r; ++k) {
        const std::size_t t = ev.precursor_begin + k;
        const double u = (static_cast<double>(k) + 0.5) / static_cast<double>(r);
        switch (sc.precursor_type) {
          case PrecursorType::drift: offset[t] += 2.0 * s * A * u; break;
          case PrecursorType::variance: extra_sd[t] += s * A * u; break;
          case PrecursorType::frequency: freq_mult[t] *= 1.0 + 0.5 * s * u; break;
        }
      }
      if (r > 0 && sc.precursor_type == PrecursorType::drift) carried = 2.0 * s * A;
      const double a = sc.anomaly_strength;
      for (std::size_t t = ev.anomaly_begin; t < ev.anomaly_end; ++t) {
        const std::size_t k = t - ev.anomaly_begin;
        offset[t] += carried;
        switch (e % 4) {
          case 0: offset[t] += a * A; break;
          case 1:
            if (k % 3 == 0) offset[t] += ((k / 3) % 2 ? -1.5 : 1.5) * a * A;
            break;
          case 2: amp_mult[t] *= 1.0 + a; break;
          case 3: extra_sd[t] += 0.5 * a * A; break;
        }
      }
    }

    for (std::size_t t = 0; t < T; ++t) {
      const double base = A * amp_mult[t] * (std::sin(phase) + 0.4 * std::sin(2.0 * phase + phase2));
      const double noise = sc.noise * rng.normal() + extra_sd[t] * rng.normal();
      ts.values[t * c + ch] = base + offset[t] + noise;
      phase += omega * freq_mult[t];
    }
  }
  return {std::move(ts), std::move(events)};
}

void write_events_csv(std::ostream& out, const std::vector<SynthEvent>& events) {
  out << "event,precursor_begin,anomaly_begin,anomaly_end,channels\n";
  for (std::size_t e = 0; e < events.size(); ++e) {
    const auto& ev = events[e];
    out << e << ',' << ev.precursor_begin << ',' << ev.anomaly_begin << ',' << ev.anomaly_end << ',';
    for (std::size_t k = 0; k < ev.channels.size(); ++k) out << (k ? ";" : "") << ev.channels[k];
    out << '\n';
  }
}

}  // namespace multirc
