#include <gtest/gtest.h>

#include <cmath>

#include "multirc/errors.hpp"
#include "multirc/losses.hpp"
#include "multirc/ops.hpp"
#include "support/gradcheck.hpp"

using namespace multirc;
using multirc::testing::check_gradients;
using multirc::testing::random_tensor;

namespace {

Tensor constant_rows(std::size_t rows, std::vector<double> row) {
  std::vector<double> v;
  for (std::size_t r = 0; r < rows; ++r) v.insert(v.end(), row.begin(), row.end());
  return Tensor::matrix(rows, row.size(), v);
}

// Random orthogonal d x d matrix from Gram-Schmidt on Gaussian columns.
Tensor random_rotation(std::size_t d, Rng& rng) {
  std::vector<std::vector<double>> q;
  while (q.size() < d) {
    std::vector<double> v(d);
    for (auto& x : v) x = rng.normal();
    for (const auto& u : q) {
      double dot = 0.0;
      for (std::size_t i = 0; i < d; ++i) dot += v[i] * u[i];
      for (std::size_t i = 0; i < d; ++i) v[i] -= dot * u[i];
    }
    double n = 0.0;
    for (double x : v) n += x * x;
    n = std::sqrt(n);
    for (auto& x : v) x /= n;
    q.push_back(v);
  }
  std::vector<double> flat;
  for (const auto& row : q) flat.insert(flat.end(), row.begin(), row.end());
  return Tensor::matrix(d, d, flat);
}

}  // namespace

TEST(Reconstruction, hand_examples) {
  auto x = Tensor::matrix(1, 2, {0, 0});
  EXPECT_EQ(reconstruction_loss(x, x, {1, 1}).item(), 0.0);
  EXPECT_DOUBLE_EQ(reconstruction_loss(Tensor::matrix(1, 2, {1, 1}), x, {1, 1}).item(), 1.0);
  // Two channels with per-channel MSE 1 and 3.
  auto two = Tensor::matrix(2, 2, {1, -1, std::sqrt(3.0), -std::sqrt(3.0)});
  EXPECT_NEAR(reconstruction_loss(two, Tensor({2, 2}, 0.0), {1, 1, 1, 1}).item(), 2.0, 1e-12);
}

TEST(Reconstruction, reaction_weights_emphasize_masked_points) {
  auto w = reaction_weights(make_mask(4, 2), 2.0);
  EXPECT_EQ(w, (std::vector<double>{1, 1, 2, 2}));
  auto loss = reconstruction_loss(Tensor::matrix(1, 4, {1, 1, 1, 1}), Tensor({1, 4}, 0.0), w);
  EXPECT_DOUBLE_EQ(loss.item(), 6.0 / 4.0);
}

TEST(Reconstruction, length_mismatch_is_an_error) {
  EXPECT_THROW(reconstruction_loss(Tensor({1, 3}, 0.0), Tensor({1, 4}, 0.0), {1, 1, 1, 1}), ShapeError);
}

TEST(Pooling, examples) {
  auto one = pool_interval(Tensor::matrix(1, 2, {4, -2}), 1, false);
  EXPECT_EQ(one[0], 4.0);
  EXPECT_EQ(one[1], -2.0);
  auto two = pool_interval(Tensor::matrix(2, 2, {1, 3, 5, 7}), 2, false);
  EXPECT_DOUBLE_EQ(two[0], 3.0);
  EXPECT_DOUBLE_EQ(two[1], 5.0);
  Rng rng(1);
  auto z = pool_interval(random_tensor({12, 5}, rng, -1, 1, false), 4, true);
  for (std::size_t r = 0; r < 3; ++r) {
    double n = 0.0;
    for (std::size_t c = 0; c < 5; ++c) n += z.at(r, c) * z.at(r, c);
    EXPECT_NEAR(std::sqrt(n), 1.0, 1e-9);
  }
}

TEST(Upsample, index_examples) {
  EXPECT_EQ(upsample_index(3, 8, 32), 0u);
  EXPECT_EQ(upsample_index(31, 8, 32), 7u);
  EXPECT_THROW(upsample_index(0, 8, 4), ShapeError);
}

TEST(Upsample, each_row_repeats_in_order) {
  auto z = Tensor::matrix(4, 1, {0, 1, 2, 3});
  auto up = upsample_reps(z, 4, 8);
  EXPECT_EQ(std::vector<double>(up.data().begin(), up.data().end()), (std::vector<double>{0, 0, 1, 1, 2, 2, 3, 3}));
}

TEST(Upsample, index_is_exact_monotone_and_onto) {
  for (std::size_t lo = 1; lo <= 32; ++lo) {
    for (std::size_t ln = lo; ln <= 256; ++ln) {
      std::vector<std::uint8_t> hit(lo, 0);
      std::size_t prev = 0;
      for (std::size_t i = 0; i < ln; ++i) {
        const auto xi = upsample_index(i, lo, ln);
        ASSERT_EQ(xi, (i * lo) / ln);
        ASSERT_GE(xi, prev);
        prev = xi;
        hit[xi] = 1;
      }
      for (auto h : hit) ASSERT_EQ(h, 1);
    }
  }
}

TEST(IntervalContrastive, all_equal_configuration_is_log_two) {
  const std::vector<double> row = {0.5, -0.5, 0.5, 0.5};
  std::vector<Tensor> views(3, constant_rows(2, row));
  std::vector<Tensor> negs(3, constant_rows(2, row));
  EXPECT_NEAR(interval_contrastive(views, negs, 2, true).item(), std::log(2.0), 1e-9);
}

TEST(IntervalContrastive, aligned_positives_beat_the_all_equal_case) {
  // Channel reps orthogonal, positives identical across views, negatives opposite.
  std::vector<Tensor> views(3, Tensor::matrix(2, 2, {1, 0, 0, 1}));
  std::vector<Tensor> negs(3, Tensor::matrix(2, 2, {-1, 0, 0, -1}));
  const double aligned = interval_contrastive(views, negs, 2, true).item();
  EXPECT_LT(aligned, std::log(2.0));
}

TEST(IntervalContrastive, decreases_with_numerator_affinity) {
  double prev = std::numeric_limits<double>::infinity();
  for (double alpha : {0.0, 0.5, 1.0, 1.5}) {
    std::vector<Tensor> views(3, Tensor::matrix(2, 2, {alpha, 0, 0, alpha}));
    std::vector<Tensor> negs(3, Tensor({2, 2}, 0.0));
    const double loss = interval_contrastive(views, negs, 2, false).item();
    EXPECT_NEAR(loss, -std::log(2.0 * std::exp(alpha * alpha) / 4.0), 1e-12);
    EXPECT_LT(loss, prev);
    prev = loss;
  }
}

TEST(IntervalContrastive, empty_denominator_is_an_error) {
  std::vector<Tensor> views(2, Tensor::matrix(1, 2, {1, 0}));
  EXPECT_THROW(interval_contrastive(views, {}, 1, true), DataError);
}

TEST(PointContrastive, identical_reps_give_closed_form) {
  const std::vector<double> row = {0.6, 0.8, 0.0};
  std::vector<Tensor> views(3, constant_rows(4, row));
  std::vector<Tensor> negs(3, constant_rows(4, row));
  EXPECT_NEAR(point_contrastive(views, negs, 4, true).item(), -std::log(2.0 / 10.0), 1e-9);
}

TEST(PointContrastive, orthogonal_time_points_beat_the_identical_case) {
  std::vector<double> eye(16, 0.0);
  for (std::size_t i = 0; i < 4; ++i) eye[i * 4 + i] = 1.0;
  std::vector<Tensor> views(3, Tensor::matrix(4, 4, eye));
  std::vector<Tensor> negs(3, constant_rows(4, {0.5, 0.5, 0.5, 0.5}));
  EXPECT_LT(point_contrastive(views, negs, 4, true).item(), -std::log(2.0 / 10.0));
}

TEST(PointContrastive, swapping_other_views_leaves_loss_unchanged) {
  Rng rng(3);
  std::vector<Tensor> views, negs;
  for (int v = 0; v < 3; ++v) {
    views.push_back(random_tensor({8, 4}, rng, -1, 1, false));
    negs.push_back(random_tensor({8, 4}, rng, -1, 1, false));
  }
  const double a = point_contrastive(views, negs, 4, true).item();
  std::swap(views[1], views[2]);
  std::swap(negs[1], negs[2]);
  EXPECT_NEAR(point_contrastive(views, negs, 4, true).item(), a, 1e-12);
}

TEST(PointContrastive, empty_denominator_is_an_error) {
  std::vector<Tensor> views(2, Tensor::matrix(1, 2, {1, 0}));
  EXPECT_THROW(point_contrastive(views, {}, 1, true), DataError);
}

TEST(Contrastive, rotation_invariant_without_normalization) {
  Rng rng(5);
  const std::size_t d = 6;
  auto rot = random_rotation(d, rng);
  std::vector<Tensor> iv, in, pv, pn;
  for (int v = 0; v < 3; ++v) {
    iv.push_back(random_tensor({4, d}, rng, -1, 1, false));
    in.push_back(random_tensor({4, d}, rng, -1, 1, false));
    pv.push_back(random_tensor({8, d}, rng, -1, 1, false));
    pn.push_back(random_tensor({8, d}, rng, -1, 1, false));
  }
  auto rotate = [&](std::vector<Tensor> xs) {
    for (auto& x : xs) x = ops::matmul(x, rot);
    return xs;
  };
  EXPECT_NEAR(interval_contrastive(iv, in, 2, false).item(),
              interval_contrastive(rotate(iv), rotate(in), 2, false).item(), 1e-12);
  EXPECT_NEAR(point_contrastive(pv, pn, 4, false).item(), point_contrastive(rotate(pv), rotate(pn), 4, false).item(),
              1e-12);
}

TEST(Contrastive, gradients_match_finite_differences) {
  Rng rng(6);
  for (bool normalize : {false, true}) {
    std::vector<Tensor> views, negs;
    for (int v = 0; v < 3; ++v) {
      views.push_back(random_tensor({4, 3}, rng));
      negs.push_back(random_tensor({4, 3}, rng));
    }
    std::vector<Tensor> params = views;
    params.insert(params.end(), negs.begin(), negs.end());
    auto ic = check_gradients(params, [&] { return interval_contrastive(views, negs, 2, normalize); });
    EXPECT_LT(ic.max_rel_error, 1e-4) << ic.worst;
    auto pc = check_gradients(params, [&] { return point_contrastive(views, negs, 2, normalize); });
    EXPECT_LT(pc.max_rel_error, 1e-4) << pc.worst;
  }
}

TEST(JointLoss, weighted_sum) {
  LossConfig cfg;
  auto r = joint_loss(0.5, 0.7, cfg);
  EXPECT_NEAR(r.total, 1.2, 1e-12);
  cfg.lambda_con = 0.0;
  EXPECT_DOUBLE_EQ(joint_loss(0.5, 0.7, cfg).total, 0.5);
  cfg.lambda_con = 1.0;
  cfg.lambda_rec = 0.0;
  EXPECT_DOUBLE_EQ(joint_loss(0.5, 0.7, cfg).total, 0.7);
  cfg.lambda_rec = 1.0;
  cfg.lambda_con = 2.0;
  EXPECT_NEAR(joint_loss(0.5, 0.7, cfg).total - joint_loss(0.5, 0.7, LossConfig{}).total, 0.7, 1e-12);
}

TEST(JointLoss, config_invariants) {
  LossConfig cfg;
  cfg.lambda_con = 0.0;
  cfg.lambda_rec = 0.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = LossConfig{};
  cfg.reaction_weight = 0.5;
  EXPECT_THROW(cfg.validate(), ConfigError);
}
