#include "multirc/negatives.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "multirc/errors.hpp"

namespace multirc {

std::string to_string(NegativeStrategy strategy) {
  switch (strategy) {
    case NegativeStrategy::scale: return "scale";
    case NegativeStrategy::compress: return "compress";
    case NegativeStrategy::hmirror: return "hmirror";
    case NegativeStrategy::shift: return "shift";
    case NegativeStrategy::noise: return "noise";
    case NegativeStrategy::vmirror: return "vmirror";
  }
  return "scale";
}

NegativeStrategy parse_negative_strategy(const std::string& text) {
  for (std::size_t s = 0; s < kNegativeStrategyCount; ++s) {
    const auto strategy = static_cast<NegativeStrategy>(s);
    if (text == to_string(strategy)) return strategy;
  }
  throw ConfigError("unknown negative strategy '" + text +
                    "' (expected scale, compress, hmirror, shift, noise or vmirror)");
}

bool selects_points(NegativeStrategy strategy) {
  return strategy != NegativeStrategy::compress && strategy != NegativeStrategy::vmirror;
}

void NegativeGenConfig::validate() const {
  if (!(ratio >= 0.0 && ratio <= 1.0)) throw ConfigError("negative ratio must lie in [0, 1]");
  if (intensity.empty()) throw ConfigError("at least one negative intensity is required");
  for (double s : intensity)
    if (!(s > 0.0)) throw ConfigError("negative intensity must be positive");
  if (compress_factor < 2) throw ConfigError("compress factor must be at least 2");
}

double NegativeGenConfig::intensity_for(std::size_t scale) const {
  return intensity.size() == 1 ? intensity.front() : intensity.at(scale);
}

double sample_intensity(Rng& rng) { return rng.normal(); }

NegativeSample generate_negative(std::span<const double> x, std::size_t patch_size, NegativeStrategy strategy,
                                 const NegativeGenConfig& cfg, std::size_t scale, std::size_t base_patch, Rng& rng) {
  if (patch_size == 0 || x.size() % patch_size != 0) throw ShapeError("signal length is not a multiple of the patch size");
  const std::size_t n = x.size();
  const double sigma = cfg.intensity_for(scale);
  NegativeSample out{std::vector<double>(x.begin(), x.end()), std::vector<std::uint8_t>(n, 0), 0.0};

  if (selects_points(strategy)) {
    for (auto& s : out.selected) s = rng.bernoulli(cfg.ratio) ? 1 : 0;
  } else {
    for (std::size_t p = 0; p < n / patch_size; ++p) {
      if (!rng.bernoulli(cfg.ratio)) continue;
      std::fill_n(out.selected.begin() + static_cast<std::ptrdiff_t>(p * patch_size), patch_size, 1);
    }
  }

  switch (strategy) {
    case NegativeStrategy::scale: {
      out.draw = sample_intensity(rng);
      const double mult = sigma * out.draw + 1.0;
      for (std::size_t i = 0; i < n; ++i)
        if (out.selected[i]) out.values[i] = x[i] * mult;
      break;
    }
    case NegativeStrategy::compress: {
      const std::size_t f = cfg.compress_factor;
      for (std::size_t p = 0; p < n; p += patch_size) {
        if (!out.selected[p]) continue;
        for (std::size_t g = p; g < p + patch_size; g += f) {
          const std::size_t e = std::min(g + f, p + patch_size);
          const double avg = std::accumulate(x.begin() + static_cast<std::ptrdiff_t>(g),
                                             x.begin() + static_cast<std::ptrdiff_t>(e), 0.0) /
                             static_cast<double>(e - g);
          std::fill(out.values.begin() + static_cast<std::ptrdiff_t>(g), out.values.begin() + static_cast<std::ptrdiff_t>(e),
                    avg);
        }
      }
      break;
    }
    case NegativeStrategy::hmirror: {
      const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i)
        if (out.selected[i]) out.values[i] = 2.0 * mean - x[i];
      break;
    }
    case NegativeStrategy::shift: {
      const std::size_t delta = cfg.shift ? cfg.shift : base_patch;
      for (std::size_t i = 0; i < n; ++i)
        if (out.selected[i]) out.values[i] = x[i >= delta ? i - delta : 0];
      break;
    }
    case NegativeStrategy::noise:
      for (std::size_t i = 0; i < n; ++i) {
        const double eps = rng.normal();
        if (out.selected[i]) out.values[i] = x[i] + sigma * eps;
      }
      break;
    case NegativeStrategy::vmirror:
      for (std::size_t p = 0; p < n; p += patch_size) {
        if (!out.selected[p]) continue;
        std::reverse(out.values.begin() + static_cast<std::ptrdiff_t>(p),
                     out.values.begin() + static_cast<std::ptrdiff_t>(p + patch_size));
      }
      break;
  }
  return out;
}

WindowNegatives generate_window_negatives(std::span<const double> padded, std::size_t base_patch, std::size_t scales,
                                          const NegativeGenConfig& cfg, Rng& rng) {
  WindowNegatives out;
  out.strategy = cfg.strategy ? *cfg.strategy
                              : static_cast<NegativeStrategy>(rng.uniform_int(0, kNegativeStrategyCount - 1));
  const Rng window = rng.split(rng.next_u64());
  for (std::size_t p = 0; p < scales; ++p) {
    Rng stream = window.split(p);
    out.scales.push_back(
        generate_negative(padded, base_patch << p, out.strategy, cfg, p, base_patch, stream).values);
  }
  return out;
}

}  // namespace multirc
