#pragma once

#include <cstddef>
#include <vector>

#include "multirc/multiscale.hpp"
#include "multirc/pipeline.hpp"
#include "multirc/tensor.hpp"

namespace multirc {

struct LossConfig {
  double lambda_con = 1.0;
  double lambda_rec = 1.0;
  /// prediction: interval-wise contrast; detection: point-wise contrast.
  Task mode = Task::detection;
  bool normalize_reps = true;
  /// Weight of masked positions in the reconstruction loss.
  double reaction_weight = 2.0;
  /// Point-wise denominator also contrasts other time points of the anchor's own view.
  bool point_same_view = true;

  void validate() const;
};

struct LossReport {
  double rec = 0.0;
  double con = 0.0;
  double total = 0.0;
};

/// Weighted sum of already-evaluated components.
LossReport joint_loss(double rec, double con, const LossConfig& cfg);

/// Per-point weights: w_r on masked positions, 1 elsewhere.
std::vector<double> reaction_weights(const MaskSpec& mask, double w_r);

/// Mean of weight * (x_hat - x)^2 over every point of every item (rows of
/// [items, h]); items are channels, so this averages points then channels.
Tensor reconstruction_loss(const Tensor& x_hat, const Tensor& x, const std::vector<double>& weights);

/// floor(i * l_orig / l_new).
std::size_t upsample_index(std::size_t i, std::size_t l_orig, std::size_t l_new);

/// [items * l_orig, d] -> [items * l_new, d] by floor-index replication.
Tensor upsample_reps(const Tensor& z, std::size_t l_orig, std::size_t l_new);

/// [items * n, d] -> [items, d] mean over patches, optionally L2-normalized.
Tensor pool_interval(const Tensor& z, std::size_t n_patches, bool normalize);

/// Interval-wise contrastive loss.
///
/// `views` holds H >= 2 pooled representations [W * c, d] whose rows are
/// ordered window-major (row w * c + i is channel i of window w).
/// `negatives` is empty or holds one pooled negative per view with the same
/// layout. Positives are the same channel in the other views; the
/// denominator holds the other channels of the same window across all views
/// plus the anchor view's negative.
Tensor interval_contrastive(const std::vector<Tensor>& views, const std::vector<Tensor>& negatives, std::size_t channels,
                            bool normalize);

/// Point-wise contrastive loss.
///
/// `views` holds H >= 2 upsampled representations [items * T, d].
/// Positives share the time index in the other views; the denominator holds
/// other time indices across views (the anchor's own view only when
/// `same_view` is set) plus the anchor view's negative at the same index.
Tensor point_contrastive(const std::vector<Tensor>& views, const std::vector<Tensor>& negatives, std::size_t length,
                         bool normalize, bool same_view = true);

}  // namespace multirc
