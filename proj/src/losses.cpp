#include "multirc/losses.hpp"

#include <cmath>

#include "multirc/errors.hpp"
#include "multirc/ops.hpp"

namespace multirc {

void LossConfig::validate() const {
  if (lambda_con < 0.0 || lambda_rec < 0.0) throw ConfigError("loss weights must be non-negative");
  if (!(lambda_con + lambda_rec > 0.0)) throw ConfigError("at least one loss weight must be positive");
  if (!(reaction_weight >= 1.0)) throw ConfigError("reaction weight must be at least 1");
}

LossReport joint_loss(double rec, double con, const LossConfig& cfg) {
  if (!std::isfinite(rec)) throw NumericError("non-finite reconstruction loss");
  if (!std::isfinite(con)) throw NumericError("non-finite contrastive loss");
  return {rec, con, cfg.lambda_con * con + cfg.lambda_rec * rec};
}

std::vector<double> reaction_weights(const MaskSpec& mask, double w_r) {
  std::vector<double> w(mask.masked.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = mask.masked[i] ? w_r : 1.0;
  return w;
}

Tensor reconstruction_loss(const Tensor& x_hat, const Tensor& x, const std::vector<double>& weights) {
  if (x_hat.shape() != x.shape()) {
    throw ShapeError("reconstruction length mismatch: " + shape_str(x_hat.shape()) + " vs " + shape_str(x.shape()));
  }
  return ops::weighted_sq_error_mean(x_hat, x, weights);
}

std::size_t upsample_index(std::size_t i, std::size_t l_orig, std::size_t l_new) {
  if (l_new < l_orig) throw ShapeError("upsampling target shorter than the source");
  return i * l_orig / l_new;
}

Tensor upsample_reps(const Tensor& z, std::size_t l_orig, std::size_t l_new) {
  if (l_new < l_orig) throw ShapeError("upsampling target shorter than the source");
  if (l_new == l_orig) return z;
  return ops::upsample_rows(z, l_orig, l_new);
}

Tensor pool_interval(const Tensor& z, std::size_t n_patches, bool normalize) {
  Tensor pooled = ops::group_mean_rows(z, n_patches);
  return normalize ? ops::l2_normalize_rows(pooled) : pooled;
}

namespace {

void check_views(const std::vector<Tensor>& views, const std::vector<Tensor>& negatives) {
  if (views.size() < 2) throw ShapeError("contrastive loss needs at least two views");
  for (const auto& v : views) {
    if (v.rank() != 2 || v.shape() != views.front().shape()) throw ShapeError("contrastive views differ in shape");
  }
  if (!negatives.empty() && negatives.size() != views.size()) throw ShapeError("need one negative per view");
  for (const auto& n : negatives)
    if (n.shape() != views.front().shape()) throw ShapeError("negative representation shape differs from the views");
}

// Interleaves H tensors [G * m, d] into [G * m * H, d] with row (g, i, slot).
Tensor interleave(const std::vector<Tensor>& parts, bool normalize) {
  std::vector<Tensor> cols;
  for (const auto& p : parts) cols.push_back(normalize ? ops::l2_normalize_rows(p) : p);
  const std::size_t rows = parts.front().rows(), d = parts.front().cols();
  Tensor wide = cols.size() == 1 ? cols.front() : ops::concat_cols(cols);
  return ops::reshape(wide, {rows * parts.size(), d});
}

// Shared core: rows are anchors (m, v) with m the contrasted index (channel or
// time point) and v the view; columns are (m', slot) over views then negatives.
Tensor contrast(const std::vector<Tensor>& views, const std::vector<Tensor>& negatives, std::size_t m,
                bool normalize, bool same_view) {
  check_views(views, negatives);
  const std::size_t H = views.size();
  const std::size_t rows = views.front().rows();
  if (m == 0 || rows % m != 0) throw ShapeError("contrastive rows are not a multiple of the group length");
  const std::size_t groups = rows / m;
  const bool with_neg = !negatives.empty();
  const std::size_t slots = with_neg ? 2 * H : H;

  Tensor anchors = interleave(views, normalize);
  std::vector<Tensor> all = views;
  all.insert(all.end(), negatives.begin(), negatives.end());
  Tensor keys = interleave(all, normalize);
  Tensor s = ops::batched_gram(anchors, keys, groups);

  const std::size_t period = m * H, K = m * slots;
  std::vector<std::uint8_t> pos(period * K, 0), den(period * K, 0);
  bool den_empty = false;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t v = 0; v < H; ++v) {
      const std::size_t r = i * H + v;
      bool any = false;
      for (std::size_t j = 0; j < m; ++j) {
        for (std::size_t slot = 0; slot < slots; ++slot) {
          const std::size_t col = r * K + j * slots + slot;
          if (slot < H) {
            if (j == i && slot != v) pos[col] = 1;
            if (j != i && (same_view || slot != v)) den[col] = any = 1;
          } else if (j == i && slot - H == v) {
            den[col] = any = 1;
          }
        }
      }
      den_empty = den_empty || !any;
    }
  }
  if (den_empty) throw DataError("contrastive denominator is empty (a single channel and no negatives)");
  return ops::mean(ops::masked_lse_ratio(s, period, pos, den));
}

}  // namespace

Tensor interval_contrastive(const std::vector<Tensor>& views, const std::vector<Tensor>& negatives, std::size_t channels,
                            bool normalize) {
  return contrast(views, negatives, channels, normalize, true);
}

Tensor point_contrastive(const std::vector<Tensor>& views, const std::vector<Tensor>& negatives, std::size_t length,
                         bool normalize, bool same_view) {
  return contrast(views, negatives, length, normalize, same_view);
}

}  // namespace multirc
