#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "multirc/rng.hpp"

namespace multirc {

enum class NegativeStrategy { scale, compress, hmirror, shift, noise, vmirror };

inline constexpr std::size_t kNegativeStrategyCount = 6;

std::string to_string(NegativeStrategy strategy);
NegativeStrategy parse_negative_strategy(const std::string& text);
/// Strategies that pick points one at a time (the rest pick whole patches).
bool selects_points(NegativeStrategy strategy);

struct NegativeGenConfig {
  /// Unset: a strategy is drawn uniformly per window.
  std::optional<NegativeStrategy> strategy;
  double ratio = 0.5;  // rho
  /// sigma_p per scale; a single value applies to every scale.
  std::vector<double> intensity = {0.5};
  /// Temporal displacement for `shift`; 0 means one base patch.
  std::size_t shift = 0;
  std::size_t compress_factor = 2;

  void validate() const;
  double intensity_for(std::size_t scale) const;
};

/// s_p ~ N(0, 1).
double sample_intensity(Rng& rng);

struct NegativeSample {
  std::vector<double> values;
  std::vector<std::uint8_t> selected;  // per point
  double draw = 0.0;                   // s_p (scale strategy only)
};

/// Pollutes one scale's patch sequence (a flat N x P buffer).
NegativeSample generate_negative(std::span<const double> x, std::size_t patch_size, NegativeStrategy strategy,
                                 const NegativeGenConfig& cfg, std::size_t scale, std::size_t base_patch, Rng& rng);

struct WindowNegatives {
  NegativeStrategy strategy = NegativeStrategy::scale;
  std::vector<std::vector<double>> scales;  // one flat buffer per scale
};

/// Negatives for every scale of one clean padded window. The strategy is
/// shared by the window; each scale draws from its own split stream.
WindowNegatives generate_window_negatives(std::span<const double> padded, std::size_t base_patch, std::size_t scales,
                                          const NegativeGenConfig& cfg, Rng& rng);

}  // namespace multirc
