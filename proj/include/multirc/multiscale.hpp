#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "multirc/rng.hpp"

namespace multirc {

/// Amplitude of each non-negative frequency bin of a real signal.
struct Spectrum {
  std::vector<double> amplitudes;  // floor(h/2) + 1 bins
  std::size_t source = 0;          // which historical sub-window produced it
};

Spectrum amplitude_spectrum(std::span<const double> x);

/// Cosine similarity of two amplitude spectra. Throws DataError on an
/// all-zero spectrum ("degenerate spectrum") or mismatched bin counts.
double spectrum_similarity(const Spectrum& a, const Spectrum& b);

struct PeriodSet {
  std::vector<std::size_t> bins;     // sorted by descending amplitude
  std::vector<std::size_t> periods;  // round(h / bin), clamped to [2, h]
  /// Sub-windows whose spectra were most alike (0 = most recent).
  std::size_t pair_first = 0;
  std::size_t pair_second = 0;
  double similarity = 1.0;

  bool empty() const { return periods.empty(); }
};

struct PeriodOptions {
  std::size_t top_k = 3;
  /// Candidate sub-windows (non-overlapping, most recent first).
  std::size_t history_windows = 4;
};

/// Period of a frequency bin for a window of length h.
std::size_t bin_to_period(std::size_t bin, std::size_t h);

/// Top-k non-DC bins of `amplitudes` by descending amplitude (ties: lower bin first).
std::vector<std::size_t> top_k_bins(std::span<const double> amplitudes, std::size_t k);

/// Dominant periods from the history ending at its last element. Uses the
/// most recent `history_windows` non-overlapping sub-windows of length h,
/// picks the most similar pair, and ranks bins of their element-wise maximum.
/// Throws DataError when fewer than 2h points are available.
PeriodSet dominant_periods(std::span<const double> history, std::size_t h, const PeriodOptions& options = {});

/// Same as dominant_periods but falls back to the spectrum of the last h
/// points when the history is shorter than two windows.
PeriodSet dominant_periods_or_local(std::span<const double> history, std::size_t h, const PeriodOptions& options = {});

/// trailing: zero the final r points (reaction-time interval).
/// leading: keep only the final r points, zeroing the rest.
enum class MaskOrientation { trailing, leading };

std::string to_string(MaskOrientation orientation);
MaskOrientation parse_mask_orientation(const std::string& text);

struct MaskSpec {
  std::size_t length = 0;            // r
  std::vector<std::uint8_t> masked;  // 1 where the input was zeroed
};

MaskSpec make_mask(std::size_t h, std::size_t r, MaskOrientation orientation = MaskOrientation::trailing);
std::vector<double> apply_mask(std::span<const double> x, const MaskSpec& mask);

/// Draws r uniformly from the period set.
std::size_t sample_mask_length(const PeriodSet& periods, Rng& rng);

std::pair<std::vector<double>, MaskSpec> adaptive_mask(std::span<const double> x, const PeriodSet& periods, Rng& rng,
                                                       MaskOrientation orientation = MaskOrientation::trailing);

struct PatchScale {
  std::size_t count = 0;  // N_p
  std::size_t size = 0;   // P_p
  std::vector<double> values;  // N_p x P_p, row-major

  std::span<const double> patch(std::size_t i) const { return {values.data() + i * size, size}; }
};

struct PatchSet {
  std::size_t window = 0;  // h before padding
  std::size_t padded = 0;  // multiple of the coarsest patch size
  std::vector<PatchScale> scales;
};

/// Window length after edge-replication padding to a multiple of P_1 * 2^(a-1).
std::size_t padded_length(std::size_t h, std::size_t base_patch, std::size_t scales);

PatchSet multiscale_patch(std::span<const double> x, std::size_t base_patch, std::size_t scales);

}  // namespace multirc
