#include "multirc/multiscale.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numeric>

#include "multirc/errors.hpp"

namespace multirc {
namespace {

// FFTW's planner is not thread-safe; plans are created once per length under a
// lock and executed with the new-array interface afterwards.
class PlanCache {
 public:
  fftw_plan get(std::size_t n) {
    std::lock_guard lock(mu_);
    auto it = plans_.find(n);
    if (it != plans_.end()) return it->second;
    auto* in = fftw_alloc_real(n);
    auto* out = fftw_alloc_complex(n / 2 + 1);
    fftw_plan plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), in, out, FFTW_ESTIMATE | FFTW_UNALIGNED);
    fftw_free(in);
    fftw_free(out);
    plans_.emplace(n, plan);
    return plan;
  }

  ~PlanCache() {
    for (auto& [n, plan] : plans_) fftw_destroy_plan(plan);
  }

 private:
  std::mutex mu_;
  std::map<std::size_t, fftw_plan> plans_;
};

PlanCache& plan_cache() {
  static PlanCache cache;
  return cache;
}

}  // namespace

Spectrum amplitude_spectrum(std::span<const double> x) {
  const std::size_t n = x.size();
  if (n == 0) throw DataError("spectrum of an empty signal");
  std::vector<double> in(x.begin(), x.end());
  std::vector<fftw_complex> out(n / 2 + 1);
  fftw_execute_dft_r2c(plan_cache().get(n), in.data(), out.data());
  Spectrum s;
  s.amplitudes.resize(out.size());
  for (std::size_t k = 0; k < out.size(); ++k) s.amplitudes[k] = std::hypot(out[k][0], out[k][1]);
  return s;
}

double spectrum_similarity(const Spectrum& a, const Spectrum& b) {
  if (a.amplitudes.size() != b.amplitudes.size()) throw DataError("spectra have different bin counts");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t k = 0; k < a.amplitudes.size(); ++k) {
    dot += a.amplitudes[k] * b.amplitudes[k];
    na += a.amplitudes[k] * a.amplitudes[k];
    nb += b.amplitudes[k] * b.amplitudes[k];
  }
  if (na == 0.0 || nb == 0.0) throw DataError("degenerate spectrum");
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::size_t bin_to_period(std::size_t bin, std::size_t h) {
  if (bin == 0) throw DataError("the DC bin has no period");
  const auto r = static_cast<std::size_t>(std::lround(static_cast<double>(h) / static_cast<double>(bin)));
  return std::clamp<std::size_t>(r, 2, h);
}

std::vector<std::size_t> top_k_bins(std::span<const double> amplitudes, std::size_t k) {
  std::vector<std::size_t> bins;
  for (std::size_t b = 1; b < amplitudes.size(); ++b) bins.push_back(b);
  std::stable_sort(bins.begin(), bins.end(), [&](std::size_t l, std::size_t r) { return amplitudes[l] > amplitudes[r]; });
  if (bins.size() > k) bins.resize(k);
  return bins;
}

namespace {

PeriodSet periods_from(std::span<const double> amplitudes, std::size_t h, std::size_t k) {
  PeriodSet ps;
  ps.bins = top_k_bins(amplitudes, k);
  for (auto b : ps.bins) ps.periods.push_back(bin_to_period(b, h));
  return ps;
}

}  // namespace

PeriodSet dominant_periods(std::span<const double> history, std::size_t h, const PeriodOptions& options) {
  if (h < 4) throw DataError("dominant periods need a window of at least 4 points");
  if (options.top_k == 0) throw ConfigError("top_k must be positive");
  if (options.history_windows < 2) throw ConfigError("at least two historical windows are needed");
  if (history.size() < 2 * h) {
    throw DataError("insufficient history: " + std::to_string(history.size()) + " points, need " +
                    std::to_string(2 * h));
  }
  const std::size_t m = std::min(options.history_windows, history.size() / h);
  std::vector<Spectrum> spectra;
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t end = history.size() - i * h;
    spectra.push_back(amplitude_spectrum(history.subspan(end - h, h)));
    spectra.back().source = i;
  }
  // All-zero sub-windows have no defined similarity and are skipped.
  double best = -1.0;
  std::size_t bi = 0, bj = 1;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i + 1; j < m; ++j) {
      const auto& a = spectra[i].amplitudes;
      const auto& b = spectra[j].amplitudes;
      if (!std::any_of(a.begin(), a.end(), [](double v) { return v > 0.0; }) ||
          !std::any_of(b.begin(), b.end(), [](double v) { return v > 0.0; }))
        continue;
      const double s = spectrum_similarity(spectra[i], spectra[j]);
      if (s > best) {
        best = s;
        bi = i;
        bj = j;
      }
    }
  }
  std::vector<double> merged(spectra[bi].amplitudes.size());
  for (std::size_t k = 0; k < merged.size(); ++k)
    merged[k] = std::max(spectra[bi].amplitudes[k], spectra[bj].amplitudes[k]);
  PeriodSet ps = periods_from(merged, h, options.top_k);
  ps.pair_first = bi;
  ps.pair_second = bj;
  ps.similarity = best < 0.0 ? 0.0 : best;
  return ps;
}

PeriodSet dominant_periods_or_local(std::span<const double> history, std::size_t h, const PeriodOptions& options) {
  if (history.size() >= 2 * h) return dominant_periods(history, h, options);
  if (history.size() < h) throw DataError("history shorter than one window");
  const auto spec = amplitude_spectrum(history.subspan(history.size() - h, h));
  return periods_from(spec.amplitudes, h, options.top_k);
}

std::string to_string(MaskOrientation orientation) {
  return orientation == MaskOrientation::trailing ? "trailing" : "leading";
}

MaskOrientation parse_mask_orientation(const std::string& text) {
  if (text == "trailing") return MaskOrientation::trailing;
  if (text == "leading") return MaskOrientation::leading;
  throw ConfigError("unknown mask orientation '" + text + "' (expected trailing or leading)");
}

MaskSpec make_mask(std::size_t h, std::size_t r, MaskOrientation orientation) {
  if (r == 0 || r > h) throw DataError("mask length " + std::to_string(r) + " outside [1, " + std::to_string(h) + "]");
  MaskSpec spec;
  spec.length = r;
  spec.masked.assign(h, 0);
  if (orientation == MaskOrientation::trailing) {
    std::fill(spec.masked.end() - static_cast<std::ptrdiff_t>(r), spec.masked.end(), 1);
  } else {
    std::fill(spec.masked.begin(), spec.masked.end() - static_cast<std::ptrdiff_t>(r), 1);
  }
  return spec;
}

std::vector<double> apply_mask(std::span<const double> x, const MaskSpec& mask) {
  if (x.size() != mask.masked.size()) throw ShapeError("mask length does not match the window");
  std::vector<double> out(x.begin(), x.end());
  for (std::size_t i = 0; i < out.size(); ++i)
    if (mask.masked[i]) out[i] = 0.0;
  return out;
}

std::size_t sample_mask_length(const PeriodSet& periods, Rng& rng) {
  if (periods.empty()) throw DataError("empty period set");
  const auto idx = rng.uniform_int(0, static_cast<std::int64_t>(periods.periods.size()) - 1);
  return periods.periods[static_cast<std::size_t>(idx)];
}

std::pair<std::vector<double>, MaskSpec> adaptive_mask(std::span<const double> x, const PeriodSet& periods, Rng& rng,
                                                       MaskOrientation orientation) {
  if (periods.empty()) throw DataError("empty period set");
  for (auto r : periods.periods)
    if (r > x.size()) throw DataError("period " + std::to_string(r) + " exceeds the window length");
  const std::size_t r = sample_mask_length(periods, rng);
  MaskSpec spec = make_mask(x.size(), r, orientation);
  auto masked = apply_mask(x, spec);
  return {std::move(masked), std::move(spec)};
}

std::size_t padded_length(std::size_t h, std::size_t base_patch, std::size_t scales) {
  const std::size_t coarse = base_patch << (scales - 1);
  return (h + coarse - 1) / coarse * coarse;
}

PatchSet multiscale_patch(std::span<const double> x, std::size_t base_patch, std::size_t scales) {
  if (base_patch == 0 || scales == 0) throw ConfigError("patch size and scale count must be positive");
  const std::size_t h = x.size();
  if (h < base_patch) throw DataError("window shorter than the base patch size");
  PatchSet set;
  set.window = h;
  set.padded = padded_length(h, base_patch, scales);
  std::vector<double> padded(x.begin(), x.end());
  padded.resize(set.padded, x.back());
  for (std::size_t p = 0; p < scales; ++p) {
    PatchScale s;
    s.size = base_patch << p;
    s.count = set.padded / s.size;
    // Row-major N x P over a contiguous window: adjacent-pair concatenation
    // of the previous scale is the same flat buffer.
    s.values = padded;
    set.scales.push_back(std::move(s));
  }
  return set;
}

}  // namespace multirc
