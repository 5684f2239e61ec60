#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <numeric>

#include "multirc/errors.hpp"
#include "multirc/ops.hpp"
#include "multirc/tensor.hpp"
#include "support/gradcheck.hpp"

using namespace multirc;
using multirc::testing::check_gradients;
using multirc::testing::random_tensor;

namespace {

constexpr double kTol = 1e-4;

Tensor backward_of(const std::function<Tensor()>& fn, Tape& tape) {
  Tensor loss;
  {
    Tape::Scope scope(tape);
    loss = fn();
  }
  tape.backward(loss);
  return loss;
}

// Scalar loss that touches every output element with a distinct weight.
Tensor weighted_sum(const Tensor& t) {
  std::vector<double> w(t.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = 0.3 + 0.1 * static_cast<double>(i % 7);
  Tensor wt = t.rank() == 2 ? Tensor::matrix(t.rows(), t.cols(), w) : Tensor(t.shape(), w);
  return ops::sum(ops::mul(t, wt));
}

}  // namespace

TEST(TensorCore, shape_invariant_holds) {
  Tensor t({2, 3}, 1.5);
  EXPECT_EQ(t.size(), 6u);
  EXPECT_EQ(shape_numel(t.shape()), t.size());
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
}

TEST(TensorCore, handle_copies_share_storage_clone_does_not) {
  Tensor a({2}, 1.0);
  Tensor b = a;
  Tensor c = a.clone();
  b.mutable_data()[0] = 7.0;
  EXPECT_EQ(a[0], 7.0);
  EXPECT_EQ(c[0], 1.0);
  EXPECT_TRUE(a.same_storage(b));
  EXPECT_FALSE(a.same_storage(c));
}

TEST(TensorCore, softmax_of_zero_row_is_uniform) {
  auto s = ops::softmax_rows(Tensor::matrix(1, 2, {0.0, 0.0}));
  EXPECT_DOUBLE_EQ(s[0], 0.5);
  EXPECT_DOUBLE_EQ(s[1], 0.5);
}

TEST(TensorCore, matmul_identity_returns_operand) {
  auto a = Tensor::matrix(2, 2, {1.5, -2.0, 0.25, 4.0});
  auto out = ops::matmul(Tensor::matrix(2, 2, {1, 0, 0, 1}), a);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(out[i], a[i]);
}

TEST(TensorCore, mean_pool_along_rows) {
  auto out = ops::mean_pool(Tensor::matrix(2, 2, {1, 3, 5, 7}), 1);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_DOUBLE_EQ(out[0], 2.0);
  EXPECT_DOUBLE_EQ(out[1], 6.0);
  auto cols = ops::mean_pool(Tensor::matrix(2, 2, {1, 3, 5, 7}), 0);
  EXPECT_DOUBLE_EQ(cols[0], 3.0);
  EXPECT_DOUBLE_EQ(cols[1], 5.0);
}

TEST(TensorCore, sum_of_squares_gradient) {
  Tensor w = Tensor::vector({3.0});
  w.set_requires_grad(true);
  Tape tape;
  backward_of([&] { return ops::sum(ops::mul(w, w)); }, tape);
  EXPECT_DOUBLE_EQ(w.grad()[0], 6.0);
}

TEST(TensorCore, unused_parameter_gets_zero_gradient) {
  Tensor w = Tensor::vector({1.0, 2.0});
  Tensor unused = Tensor::vector({5.0});
  w.set_requires_grad(true);
  unused.set_requires_grad(true);
  Tape tape;
  backward_of([&] { return ops::sum(w); }, tape);
  EXPECT_EQ(unused.grad()[0], 0.0);
}

TEST(TensorCore, repeated_backward_is_rejected) {
  Tensor w = Tensor::vector({1.0});
  w.set_requires_grad(true);
  Tape tape;
  auto loss = backward_of([&] { return ops::sum(ops::mul(w, w)); }, tape);
  EXPECT_THROW(tape.backward(loss), std::logic_error);
  tape.reset();
  EXPECT_EQ(tape.size(), 0u);
}

TEST(TensorCore, non_scalar_loss_is_rejected) {
  Tensor w = Tensor::vector({1.0, 2.0});
  w.set_requires_grad(true);
  Tape tape;
  Tensor out;
  {
    Tape::Scope scope(tape);
    out = ops::mul(w, w);
  }
  EXPECT_THROW(tape.backward(out), ShapeError);
}

TEST(TensorCore, ops_without_active_tape_record_nothing) {
  Tensor w = Tensor::vector({1.0});
  w.set_requires_grad(true);
  Tape tape;
  auto out = ops::mul(w, w);
  EXPECT_EQ(tape.size(), 0u);
  EXPECT_FALSE(out.requires_grad());
}

TEST(TensorCore, non_finite_forward_result_is_an_error) {
  EXPECT_THROW(ops::log(Tensor::vector({0.0})), NumericError);
  EXPECT_THROW(ops::exp(Tensor::vector({1000.0})), NumericError);
}

TEST(TensorCore, shape_mismatch_is_an_error) {
  EXPECT_THROW(ops::matmul(Tensor({2, 3}, 1.0), Tensor({2, 3}, 1.0)), ShapeError);
  EXPECT_THROW(ops::add(Tensor({2, 3}, 1.0), Tensor({3, 2}, 1.0)), ShapeError);
  EXPECT_THROW(ops::add_bias(Tensor({2, 3}, 1.0), Tensor({2}, 1.0)), ShapeError);
}

TEST(TensorCore, softmax_rows_sum_to_one) {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    auto x = random_tensor({5, 9}, rng, -20.0, 20.0, false);
    auto s = ops::softmax_rows(x);
    for (std::size_t r = 0; r < 5; ++r) {
      double total = 0.0;
      for (std::size_t c = 0; c < 9; ++c) total += s.at(r, c);
      EXPECT_NEAR(total, 1.0, 1e-12);
    }
  }
}

TEST(TensorCore, layer_norm_rows_have_zero_mean) {
  Rng rng(12);
  auto x = random_tensor({6, 16}, rng, -50.0, 50.0, false);
  auto y = ops::layer_norm(x, Tensor({16}, 1.0), Tensor({16}, 0.0));
  for (std::size_t r = 0; r < 6; ++r) {
    double m = 0.0;
    for (std::size_t c = 0; c < 16; ++c) m += y.at(r, c);
    EXPECT_LT(std::abs(m / 16.0), 1e-9);
  }
}

TEST(TensorCore, logsumexp_is_stable_for_large_inputs) {
  auto out = ops::logsumexp_rows(Tensor::matrix(1, 2, {1000.0, 1000.0}));
  EXPECT_NEAR(out[0], 1000.0 + std::log(2.0), 1e-9);
}

TEST(TensorCore, upsample_rows_uses_floor_index) {
  auto a = Tensor::matrix(3, 1, {10, 20, 30});
  auto out = ops::upsample_rows(a, 3, 7);
  for (std::size_t i = 0; i < 7; ++i) EXPECT_EQ(out[i], a[i * 3 / 7]);
}

TEST(TensorCore, masked_lse_ratio_matches_direct_formula) {
  auto s = Tensor::matrix(2, 3, {0.1, 0.7, -0.3, 1.2, 0.0, 0.4});
  std::vector<std::uint8_t> pos = {0, 1, 0, 1, 0, 0};
  std::vector<std::uint8_t> den = {1, 1, 1, 1, 1, 0};
  auto out = ops::masked_lse_ratio(s, 2, pos, den);
  const double r0 = -std::log(std::exp(0.7) / (std::exp(0.1) + std::exp(0.7) + std::exp(-0.3)));
  const double r1 = -std::log(std::exp(1.2) / (std::exp(1.2) + std::exp(0.0)));
  EXPECT_NEAR(out[0], r0, 1e-12);
  EXPECT_NEAR(out[1], r1, 1e-12);
}

TEST(TensorCore, dropout_zero_is_identity_and_keeps_expectation) {
  Rng rng(3);
  auto x = Tensor({1, 20000}, 1.0);
  auto same = ops::dropout(x, 0.0, rng);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(same[i], 1.0);
  auto d = ops::dropout(x, 0.25, rng);
  double m = 0.0;
  for (double v : d.data()) m += v;
  EXPECT_NEAR(m / 20000.0, 1.0, 0.03);
}

// Finite-difference checks of every primitive on tensors with <= 64 elements.

struct GradCase {
  const char* name;
  std::function<void(Rng&)> run;
};

class PrimitiveGradients : public ::testing::TestWithParam<int> {};

TEST_P(PrimitiveGradients, autodiff_matches_central_differences) {
  Rng rng(100 + GetParam());
  auto a = random_tensor({3, 4}, rng);
  auto b = random_tensor({3, 4}, rng);
  auto m = random_tensor({4, 2}, rng);
  auto bias = random_tensor({4}, rng);
  auto tile = random_tensor({3, 4}, rng);
  auto pos = random_tensor({3, 4}, rng, 0.5, 2.0);
  auto gamma = random_tensor({4}, rng, 0.5, 1.5);
  auto beta = random_tensor({4}, rng);
  auto qkv = random_tensor({8, 12}, rng);  // B=2, N=4, d=4, 2 heads
  auto g1 = random_tensor({6, 3}, rng);
  auto g2 = random_tensor({4, 3}, rng);
  const auto target = b.detach();

  const std::vector<std::pair<const char*, std::function<Tensor()>>> cases = {
      {"matmul", [&] { return weighted_sum(ops::matmul(a, m)); }},
      {"transpose", [&] { return weighted_sum(ops::transpose(a)); }},
      {"batched_gram", [&] { return weighted_sum(ops::batched_gram(g1, g2, 2)); }},
      {"add", [&] { return weighted_sum(ops::add(a, b)); }},
      {"sub", [&] { return weighted_sum(ops::sub(a, b)); }},
      {"mul", [&] { return weighted_sum(ops::mul(a, b)); }},
      {"scale", [&] { return weighted_sum(ops::scale(a, -1.7)); }},
      {"exp", [&] { return weighted_sum(ops::exp(a)); }},
      {"log", [&] { return weighted_sum(ops::log(pos)); }},
      {"gelu", [&] { return weighted_sum(ops::gelu(a)); }},
      {"add_bias", [&] { return weighted_sum(ops::add_bias(a, bias)); }},
      {"add_tiled", [&] { return weighted_sum(ops::add_tiled(ops::concat_rows({a, b}), tile)); }},
      {"reshape", [&] { return weighted_sum(ops::reshape(a, {2, 6})); }},
      {"concat_cols", [&] { return weighted_sum(ops::concat_cols({a, b})); }},
      {"concat_rows", [&] { return weighted_sum(ops::concat_rows({a, b})); }},
      {"slice_cols", [&] { return weighted_sum(ops::slice_cols(a, 1, 3)); }},
      {"slice_rows", [&] { return weighted_sum(ops::slice_rows(a, 1, 3)); }},
      {"upsample_rows", [&] { return weighted_sum(ops::upsample_rows(a, 3, 7)); }},
      {"mean", [&] { return ops::mean(ops::mul(a, b)); }},
      {"mean_pool0", [&] { return weighted_sum(ops::mean_pool(a, 0)); }},
      {"mean_pool1", [&] { return weighted_sum(ops::mean_pool(a, 1)); }},
      {"group_mean_rows", [&] { return weighted_sum(ops::group_mean_rows(ops::concat_rows({a, b}), 2)); }},
      {"logsumexp_rows", [&] { return weighted_sum(ops::logsumexp_rows(a)); }},
      {"softmax_rows", [&] { return weighted_sum(ops::softmax_rows(a)); }},
      {"layer_norm", [&] { return weighted_sum(ops::layer_norm(a, gamma, beta)); }},
      {"l2_normalize_rows", [&] { return weighted_sum(ops::l2_normalize_rows(a)); }},
      {"attention", [&] { return weighted_sum(ops::attention(qkv, 4, 2)); }},
      {"masked_lse_ratio",
       [&] {
         std::vector<std::uint8_t> p = {0, 1, 0, 0, 1, 0, 0, 0};
         std::vector<std::uint8_t> d = {1, 1, 1, 0, 1, 1, 0, 1};
         return weighted_sum(ops::masked_lse_ratio(ops::concat_rows({a, b}), 2, p, d));
       }},
      {"weighted_sq_error_mean",
       [&] {
         std::vector<double> w(12, 1.0);
         w[3] = 2.0;
         w[7] = 2.0;
         return ops::weighted_sq_error_mean(a, target, w);
       }},
  };
  for (const auto& [name, fn] : cases) {
    std::vector<Tensor> params = {a, b, m, bias, tile, pos, gamma, beta, qkv, g1, g2};
    auto res = check_gradients(params, fn);
    EXPECT_LT(res.max_rel_error, kTol) << name << ": " << res.worst;
  }
}

INSTANTIATE_TEST_SUITE_P(Seeds, PrimitiveGradients, ::testing::Range(0, 3));

TEST(TensorCore, two_layer_mlp_gradients_match_finite_differences) {
  Rng rng(42);
  auto x = random_tensor({5, 4}, rng, -1.0, 1.0, false);
  auto w1 = random_tensor({4, 6}, rng);
  auto b1 = random_tensor({6}, rng);
  auto w2 = random_tensor({6, 1}, rng);
  auto b2 = random_tensor({1}, rng);
  auto res = check_gradients({w1, b1, w2, b2}, [&] {
    auto h = ops::gelu(ops::add_bias(ops::matmul(x, w1), b1));
    return ops::mean(ops::mul(ops::add_bias(ops::matmul(h, w2), b2), ops::add_bias(ops::matmul(h, w2), b2)));
  });
  EXPECT_LT(res.max_rel_error, kTol) << res.worst;
}

TEST(TensorCore, identical_inputs_give_bit_identical_gradients) {
  auto run = [] {
    Rng rng(9);
    auto a = random_tensor({4, 4}, rng);
    Tape tape;
    backward_of([&] { return ops::sum(ops::softmax_rows(ops::matmul(a, a))); }, tape);
    return std::vector<double>(a.grad().begin(), a.grad().end());
  };
  EXPECT_EQ(run(), run());
}
