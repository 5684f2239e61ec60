#include "multirc/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "multirc/errors.hpp"

namespace multirc::ops {
namespace {

using Impl = std::shared_ptr<detail::TensorImpl>;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;
using StridedConst = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;
using StridedMut = Eigen::Map<RowMat, 0, Eigen::OuterStride<>>;

// Gradient buffer of an input that participates in autodiff, or nullptr.
double* grad_of(const Impl& impl) {
  if (!impl->requires_grad) return nullptr;
  impl->ensure_grad();
  return impl->grad.data();
}

// Gradient flowing into an op output, or nullptr when nothing reached it.
const double* upstream(const Impl& out) { return out->grad.size() == out->data.size() ? out->grad.data() : nullptr; }

// Messages are only built on failure; these checks sit on every op call.
#define MRC_REQUIRE(cond, msg)      \
  do {                              \
    if (!(cond)) throw ShapeError(msg); \
  } while (0)

void require_matrix(const Tensor& a, const char* op) {
  MRC_REQUIRE(a.rank() == 2, std::string(op) + ": expected a matrix, got " + shape_str(a.shape()));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  MRC_REQUIRE(a.shape() == b.shape(),
          std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& a, Fwd fwd, Deriv deriv) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(a[i]);
  Tensor r = make_result(a.shape(), std::move(out), a.requires_grad());
  record_if_needed(r, [ai = a.impl(), ri = r.impl(), deriv] {
    const double* g = upstream(ri);
    double* ga = grad_of(ai);
    if (!g || !ga) return;
    for (std::size_t i = 0; i < ai->data.size(); ++i) ga[i] += g[i] * deriv(ai->data[i], ri->data[i]);
  });
  return r;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  MRC_REQUIRE(b.rows() == k, "matmul: inner dimensions differ " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  std::vector<double> out(m * n);
  MutMap(out.data(), m, n).noalias() = ConstMap(a.data().data(), m, k) * ConstMap(b.data().data(), k, n);
  Tensor r = make_result({m, n}, std::move(out), a.requires_grad() || b.requires_grad());
  record_if_needed(r, [ai = a.impl(), bi = b.impl(), ri = r.impl(), m, k, n] {
    const double* g = upstream(ri);
    if (!g) return;
    ConstMap gm(g, m, n);
    if (double* ga = grad_of(ai)) MutMap(ga, m, k).noalias() += gm * ConstMap(bi->data.data(), k, n).transpose();
    if (double* gb = grad_of(bi)) MutMap(gb, k, n).noalias() += ConstMap(ai->data.data(), m, k).transpose() * gm;
  });
  return r;
}

Tensor transpose(const Tensor& a) {
  require_matrix(a, "transpose");
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m * n);
  MutMap(out.data(), n, m) = ConstMap(a.data().data(), m, n).transpose();
  Tensor r = make_result({n, m}, std::move(out), a.requires_grad());
  record_if_needed(r, [ai = a.impl(), ri = r.impl(), m, n] {
    const double* g = upstream(ri);
    double* ga = grad_of(ai);
    if (!g || !ga) return;
    MutMap(ga, m, n) += ConstMap(g, n, m).transpose();
  });
  return r;
}

Tensor batched_gram(const Tensor& a, const Tensor& b, std::size_t groups) {
  require_matrix(a, "batched_gram");
  require_matrix(b, "batched_gram");
  MRC_REQUIRE(groups > 0 && a.rows() % groups == 0 && b.rows() % groups == 0,
          "batched_gram: row counts not divisible by group count");
  MRC_REQUIRE(a.cols() == b.cols(), "batched_gram: feature widths differ");
  const std::size_t m = a.rows() / groups, k = b.rows() / groups, d = a.cols();
  std::vector<double> out(groups * m * k);
  for (std::size_t g = 0; g < groups; ++g) {
    MutMap(out.data() + g * m * k, m, k).noalias() =
        ConstMap(a.data().data() + g * m * d, m, d) * ConstMap(b.data().data() + g * k * d, k, d).transpose();
  }
  Tensor r = make_result({groups * m, k}, std::move(out), a.requires_grad() || b.requires_grad());
  record_if_needed(r, [ai = a.impl(), bi = b.impl(), ri = r.impl(), groups, m, k, d] {
    const double* g = upstream(ri);
    if (!g) return;
    double* ga = grad_of(ai);
    double* gb = grad_of(bi);
    for (std::size_t grp = 0; grp < groups; ++grp) {
      ConstMap gm(g + grp * m * k, m, k);
      if (ga) MutMap(ga + grp * m * d, m, d).noalias() += gm * ConstMap(bi->data.data() + grp * k * d, k, d);
      if (gb) {
        MutMap(gb + grp * k * d, k, d).noalias() += gm.transpose() * ConstMap(ai->data.data() + grp * m * d, m, d);
      }
    }
  });
  return r;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  Tensor r = make_result(a.shape(), std::move(out), a.requires_grad() || b.requires_grad());
  record_if_needed(r, [ai = a.impl(), bi = b.impl(), ri = r.impl()] {
    const double* g = upstream(ri);
    if (!g) return;
    const std::size_t n = ri->data.size();
    if (double* ga = grad_of(ai))
      for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
    if (double* gb = grad_of(bi))
      for (std::size_t i = 0; i < n; ++i) gb[i] += g[i];
  });
  return r;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  Tensor r = make_result(a.shape(), std::move(out), a.requires_grad() || b.requires_grad());
  record_if_needed(r, [ai = a.impl(), bi = b.impl(), ri = r.impl()] {
    const double* g = upstream(ri);
    if (!g) return;
    const std::size_t n = ri->data.size();
    if (double* ga = grad_of(ai))
      for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
    if (double* gb = grad_of(bi))
      for (std::size_t i = 0; i < n; ++i) gb[i] -= g[i];
  });
  return r;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  Tensor r = make_result(a.shape(), std::move(out), a.requires_grad() || b.requires_grad());
  record_if_needed(r, [ai = a.impl(), bi = b.impl(), ri = r.impl()] {
    const double* g = upstream(ri);
    if (!g) return;
    const std::size_t n = ri->data.size();
    if (double* ga = grad_of(ai))
      for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * bi->data[i];
    if (double* gb = grad_of(bi))
      for (std::size_t i = 0; i < n; ++i) gb[i] += g[i] * ai->data[i];
  });
  return r;
}

Tensor scale(const Tensor& a, double factor) {
  return unary(a, [factor](double x) { return factor * x; }, [factor](double, double) { return factor; });
}

Tensor exp(const Tensor& a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  for (double v : a.data()) {
    if (!(v > 0.0)) throw NumericError("log of non-positive value");
  }
  return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor relu(const Tensor& a) {
  return unary(a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor gelu(const Tensor& a) {
  constexpr double inv_sqrt2 = 0.70710678118654752440;
  const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  return unary(
      a, [=](double x) { return 0.5 * x * (1.0 + std::erf(x * inv_sqrt2)); },
      [=](double x, double) {
        const double cdf = 0.5 * (1.0 + std::erf(x * inv_sqrt2));
        return cdf + x * inv_sqrt_2pi * std::exp(-0.5 * x * x);
      });
}

Tensor add_bias(const Tensor& a, const Tensor& bias) {
  require_matrix(a, "add_bias");
  MRC_REQUIRE(bias.size() == a.cols(), "add_bias: bias length " + std::to_string(bias.size()) + " != columns " +
                                       std::to_string(a.cols()));
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(a.data().begin(), a.data().end());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += bias[j];
  Tensor r = make_result(a.shape(), std::move(out), a.requires_grad() || bias.requires_grad());
  record_if_needed(r, [ai = a.impl(), bi = bias.impl(), ri = r.impl(), m, n] {
    const double* g = upstream(ri);
    if (!g) return;
    if (double* ga = grad_of(ai))
      for (std::size_t i = 0; i < m * n; ++i) ga[i] += g[i];
    if (double* gb = grad_of(bi))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
  });
  return r;
}

Tensor add_tiled(const Tensor& a, const Tensor& tile) {
  require_matrix(a, "add_tiled");
  require_matrix(tile, "add_tiled");
  MRC_REQUIRE(tile.cols() == a.cols() && tile.rows() > 0 && a.rows() % tile.rows() == 0,
          "add_tiled: " + shape_str(tile.shape()) + " does not tile " + shape_str(a.shape()));
  const std::size_t block = tile.size();
  const std::size_t n = a.size();
  std::vector<double> out(a.data().begin(), a.data().end());
  for (std::size_t i = 0; i < n; ++i) out[i] += tile[i % block];
  Tensor r = make_result(a.shape(), std::move(out), a.requires_grad() || tile.requires_grad());
  record_if_needed(r, [ai = a.impl(), ti = tile.impl(), ri = r.impl(), block, n] {
    const double* g = upstream(ri);
    if (!g) return;
    if (double* ga = grad_of(ai))
      for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
    if (double* gt = grad_of(ti))
      for (std::size_t i = 0; i < n; ++i) gt[i % block] += g[i];
  });
  return r;
}

Tensor reshape(const Tensor& a, Shape shape) {
  MRC_REQUIRE(shape_numel(shape) == a.size(), "reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  std::vector<double> out(a.data().begin(), a.data().end());
  Tensor r = make_result(std::move(shape), std::move(out), a.requires_grad());
  record_if_needed(r, [ai = a.impl(), ri = r.impl()] {
    const double* g = upstream(ri);
    double* ga = grad_of(ai);
    if (!g || !ga) return;
    for (std::size_t i = 0; i < ai->data.size(); ++i) ga[i] += g[i];
  });
  return r;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  MRC_REQUIRE(!parts.empty(), "concat_cols: no inputs");
  const std::size_t m = parts.front().rows();
  std::size_t total = 0;
  bool grad = false;
  for (const auto& p : parts) {
    MRC_REQUIRE(p.rank() == 2 && p.rows() == m, "concat_cols: row counts differ");
    total += p.cols();
    grad = grad || p.requires_grad();
  }
  std::vector<double> out(m * total);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t n = p.cols();
    for (std::size_t i = 0; i < m; ++i) std::copy_n(p.data().data() + i * n, n, out.data() + i * total + offset);
    offset += n;
  }
  Tensor r = make_result({m, total}, std::move(out), grad);
  std::vector<Impl> impls;
  for (const auto& p : parts) impls.push_back(p.impl());
  record_if_needed(r, [impls, ri = r.impl(), m, total] {
    const double* g = upstream(ri);
    if (!g) return;
    std::size_t offset = 0;
    for (const auto& pi : impls) {
      const std::size_t n = pi->shape[1];
      if (double* gp = grad_of(pi))
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) gp[i * n + j] += g[i * total + offset + j];
      offset += n;
    }
  });
  return r;
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  MRC_REQUIRE(!parts.empty(), "concat_rows: no inputs");
  const std::size_t n = parts.front().cols();
  std::size_t total = 0;
  bool grad = false;
  for (const auto& p : parts) {
    MRC_REQUIRE(p.rank() == 2 && p.cols() == n, "concat_rows: column counts differ");
    total += p.rows();
    grad = grad || p.requires_grad();
  }
  std::vector<double> out;
  out.reserve(total * n);
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  Tensor r = make_result({total, n}, std::move(out), grad);
  std::vector<Impl> impls;
  for (const auto& p : parts) impls.push_back(p.impl());
  record_if_needed(r, [impls, ri = r.impl()] {
    const double* g = upstream(ri);
    if (!g) return;
    std::size_t offset = 0;
    for (const auto& pi : impls) {
      const std::size_t len = pi->data.size();
      if (double* gp = grad_of(pi))
        for (std::size_t i = 0; i < len; ++i) gp[i] += g[offset + i];
      offset += len;
    }
  });
  return r;
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end) {
  require_matrix(a, "slice_cols");
  MRC_REQUIRE(begin < end && end <= a.cols(), "slice_cols: bad range");
  const std::size_t m = a.rows(), n = a.cols(), w = end - begin;
  std::vector<double> out(m * w);
  for (std::size_t i = 0; i < m; ++i) std::copy_n(a.data().data() + i * n + begin, w, out.data() + i * w);
  Tensor r = make_result({m, w}, std::move(out), a.requires_grad());
  record_if_needed(r, [ai = a.impl(), ri = r.impl(), m, n, w, begin] {
    const double* g = upstream(ri);
    double* ga = grad_of(ai);
    if (!g || !ga) return;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < w; ++j) ga[i * n + begin + j] += g[i * w + j];
  });
  return r;
}

Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end) {
  require_matrix(a, "slice_rows");
  MRC_REQUIRE(begin < end && end <= a.rows(), "slice_rows: bad range");
  const std::size_t n = a.cols();
  std::vector<double> out(a.data().begin() + begin * n, a.data().begin() + end * n);
  Tensor r = make_result({end - begin, n}, std::move(out), a.requires_grad());
  record_if_needed(r, [ai = a.impl(), ri = r.impl(), begin, n] {
    const double* g = upstream(ri);
    double* ga = grad_of(ai);
    if (!g || !ga) return;
    for (std::size_t i = 0; i < ri->data.size(); ++i) ga[begin * n + i] += g[i];
  });
  return r;
}

Tensor upsample_rows(const Tensor& a, std::size_t from, std::size_t to) {
  require_matrix(a, "upsample_rows");
  MRC_REQUIRE(from > 0 && a.rows() % from == 0, "upsample_rows: rows not a multiple of the source length");
  MRC_REQUIRE(to >= from, "upsample_rows: target length " + std::to_string(to) + " shorter than source " +
                          std::to_string(from));
  const std::size_t groups = a.rows() / from, d = a.cols();
  std::vector<std::size_t> src(to);
  for (std::size_t i = 0; i < to; ++i) src[i] = i * from / to;
  std::vector<double> out(groups * to * d);
  for (std::size_t g = 0; g < groups; ++g)
    for (std::size_t i = 0; i < to; ++i)
      std::copy_n(a.data().data() + (g * from + src[i]) * d, d, out.data() + (g * to + i) * d);
  Tensor r = make_result({groups * to, d}, std::move(out), a.requires_grad());
  record_if_needed(r, [ai = a.impl(), ri = r.impl(), src, groups, from, to, d] {
    const double* g = upstream(ri);
    double* ga = grad_of(ai);
    if (!g || !ga) return;
    for (std::size_t grp = 0; grp < groups; ++grp)
      for (std::size_t i = 0; i < to; ++i)
        for (std::size_t j = 0; j < d; ++j) ga[(grp * from + src[i]) * d + j] += g[(grp * to + i) * d + j];
  });
  return r;
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  Tensor r = make_result({}, {s}, a.requires_grad());
  record_if_needed(r, [ai = a.impl(), ri = r.impl()] {
    const double* g = upstream(ri);
    double* ga = grad_of(ai);
    if (!g || !ga) return;
    for (std::size_t i = 0; i < ai->data.size(); ++i) ga[i] += g[0];
  });
  return r;
}

Tensor mean(const Tensor& a) {
  MRC_REQUIRE(a.size() > 0, "mean: empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

Tensor mean_pool(const Tensor& a, std::size_t axis) {
  require_matrix(a, "mean_pool");
  MRC_REQUIRE(axis < 2, "mean_pool: axis must be 0 or 1");
  const std::size_t m = a.rows(), n = a.cols();
  const std::size_t out_len = axis == 0 ? n : m;
  const double inv = 1.0 / static_cast<double>(axis == 0 ? m : n);
  std::vector<double> out(out_len, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[axis == 0 ? j : i] += a.data()[i * n + j] * inv;
  Tensor r = make_result({out_len}, std::move(out), a.requires_grad());
  record_if_needed(r, [ai = a.impl(), ri = r.impl(), m, n, axis, inv] {
    const double* g = upstream(ri);
    double* ga = grad_of(ai);
    if (!g || !ga) return;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[axis == 0 ? j : i] * inv;
  });
  return r;
}

Tensor group_mean_rows(const Tensor& a, std::size_t group_size) {
  require_matrix(a, "group_mean_rows");
  MRC_REQUIRE(group_size > 0 && a.rows() % group_size == 0, "group_mean_rows: rows not a multiple of group size");
  const std::size_t groups = a.rows() / group_size, d = a.cols();
  const double inv = 1.0 / static_cast<double>(group_size);
  std::vector<double> out(groups * d, 0.0);
  for (std::size_t g = 0; g < groups; ++g)
    for (std::size_t i = 0; i < group_size; ++i)
      for (std::size_t j = 0; j < d; ++j) out[g * d + j] += a.data()[(g * group_size + i) * d + j] * inv;
  Tensor r = make_result({groups, d}, std::move(out), a.requires_grad());
  record_if_needed(r, [ai = a.impl(), ri = r.impl(), groups, group_size, d, inv] {
    const double* g = upstream(ri);
    double* ga = grad_of(ai);
    if (!g || !ga) return;
    for (std::size_t grp = 0; grp < groups; ++grp)
      for (std::size_t i = 0; i < group_size; ++i)
        for (std::size_t j = 0; j < d; ++j) ga[(grp * group_size + i) * d + j] += g[grp * d + j] * inv;
  });
  return r;
}

Tensor logsumexp_rows(const Tensor& a) {
  require_matrix(a, "logsumexp_rows");
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = a.data().data() + i * n;
    const double mx = *std::max_element(row, row + n);
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += std::exp(row[j] - mx);
    out[i] = mx + std::log(s);
  }
  Tensor r = make_result({m}, std::move(out), a.requires_grad());
  record_if_needed(r, [ai = a.impl(), ri = r.impl(), m, n] {
    const double* g = upstream(ri);
    double* ga = grad_of(ai);
    if (!g || !ga) return;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[i] * std::exp(ai->data[i * n + j] - ri->data[i]);
  });
  return r;
}

Tensor softmax_rows(const Tensor& a) {
  require_matrix(a, "softmax_rows");
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = a.data().data() + i * n;
    double* o = out.data() + i * n;
    const double mx = *std::max_element(row, row + n);
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += (o[j] = std::exp(row[j] - mx));
    for (std::size_t j = 0; j < n; ++j) o[j] /= s;
  }
  Tensor r = make_result(a.shape(), std::move(out), a.requires_grad());
  record_if_needed(r, [ai = a.impl(), ri = r.impl(), m, n] {
    const double* g = upstream(ri);
    double* ga = grad_of(ai);
    if (!g || !ga) return;
    for (std::size_t i = 0; i < m; ++i) {
      const double* y = ri->data.data() + i * n;
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += g[i * n + j] * y[j];
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += y[j] * (g[i * n + j] - dot);
    }
  });
  return r;
}

Tensor layer_norm(const Tensor& a, const Tensor& gamma, const Tensor& beta, double eps) {
  require_matrix(a, "layer_norm");
  const std::size_t m = a.rows(), n = a.cols();
  MRC_REQUIRE(gamma.size() == n && beta.size() == n, "layer_norm: affine parameters do not match width");
  std::vector<double> xhat(m * n), inv_std(m), out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = a.data().data() + i * n;
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += row[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(n);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      xhat[i * n + j] = (row[j] - mu) * inv_std[i];
      out[i * n + j] = gamma[j] * xhat[i * n + j] + beta[j];
    }
  }
  Tensor r = make_result(a.shape(), std::move(out),
                         a.requires_grad() || gamma.requires_grad() || beta.requires_grad());
  record_if_needed(r, [ai = a.impl(), gi = gamma.impl(), bi = beta.impl(), ri = r.impl(), xhat = std::move(xhat),
                       inv_std = std::move(inv_std), m, n] {
    const double* g = upstream(ri);
    if (!g) return;
    double* ga = grad_of(ai);
    double* gg = grad_of(gi);
    double* gb = grad_of(bi);
    std::vector<double> dxhat(n);
    for (std::size_t i = 0; i < m; ++i) {
      double mean_d = 0.0, mean_dx = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double gij = g[i * n + j];
        if (gg) gg[j] += gij * xhat[i * n + j];
        if (gb) gb[j] += gij;
        dxhat[j] = gij * gi->data[j];
        mean_d += dxhat[j];
        mean_dx += dxhat[j] * xhat[i * n + j];
      }
      if (!ga) continue;
      mean_d /= static_cast<double>(n);
      mean_dx /= static_cast<double>(n);
      for (std::size_t j = 0; j < n; ++j)
        ga[i * n + j] += inv_std[i] * (dxhat[j] - mean_d - xhat[i * n + j] * mean_dx);
    }
  });
  return r;
}

Tensor l2_normalize_rows(const Tensor& a, double eps) {
  require_matrix(a, "l2_normalize_rows");
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> norms(m), out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += a.data()[i * n + j] * a.data()[i * n + j];
    norms[i] = std::max(std::sqrt(s), eps);
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = a.data()[i * n + j] / norms[i];
  }
  Tensor r = make_result(a.shape(), std::move(out), a.requires_grad());
  record_if_needed(r, [ai = a.impl(), ri = r.impl(), norms = std::move(norms), m, n, eps] {
    const double* g = upstream(ri);
    double* ga = grad_of(ai);
    if (!g || !ga) return;
    for (std::size_t i = 0; i < m; ++i) {
      const double* y = ri->data.data() + i * n;
      if (norms[i] <= eps) {
        for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[i * n + j] / eps;
        continue;
      }
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += y[j] * g[i * n + j];
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += (g[i * n + j] - y[j] * dot) / norms[i];
    }
  });
  return r;
}

Tensor attention(const Tensor& qkv, std::size_t seq_len, std::size_t heads, std::vector<double>* probs) {
  require_matrix(qkv, "attention");
  MRC_REQUIRE(seq_len > 0 && qkv.rows() % seq_len == 0, "attention: rows not a multiple of the sequence length");
  MRC_REQUIRE(heads > 0 && qkv.cols() % (3 * heads) == 0, "attention: width not divisible into Q|K|V heads");
  const std::size_t batch = qkv.rows() / seq_len;
  const std::size_t d = qkv.cols() / 3, dh = d / heads, n = seq_len, stride = 3 * d;
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(dh));

  std::vector<double> p(batch * heads * n * n);
  std::vector<double> out(batch * n * d);
  const double* base = qkv.data().data();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t h = 0; h < heads; ++h) {
      const double* q = base + b * n * stride + h * dh;
      StridedConst qm(q, n, dh, Eigen::OuterStride<>(stride));
      StridedConst km(q + d, n, dh, Eigen::OuterStride<>(stride));
      StridedConst vm(q + 2 * d, n, dh, Eigen::OuterStride<>(stride));
      MutMap pm(p.data() + (b * heads + h) * n * n, n, n);
      pm.noalias() = qm.lazyProduct(km.transpose()) * inv_scale;
      for (std::size_t i = 0; i < n; ++i) {
        auto row = pm.row(i);
        const double mx = row.maxCoeff();
        row = (row.array() - mx).exp();
        row /= row.sum();
      }
      StridedMut om(out.data() + b * n * d + h * dh, n, dh, Eigen::OuterStride<>(d));
      om.noalias() = pm.lazyProduct(vm);
    }
  }
  if (probs) *probs = p;
  Tensor r = make_result({batch * n, d}, std::move(out), qkv.requires_grad());
  record_if_needed(r, [qi = qkv.impl(), ri = r.impl(), p = std::move(p), batch, heads, n, d, dh, stride, inv_scale] {
    const double* g = upstream(ri);
    double* gq = grad_of(qi);
    if (!g || !gq) return;
    const double* base = qi->data.data();
    RowMat dp(n, n), ds(n, n);
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t h = 0; h < heads; ++h) {
        const std::size_t off = b * n * stride + h * dh;
        StridedConst qm(base + off, n, dh, Eigen::OuterStride<>(stride));
        StridedConst km(base + off + d, n, dh, Eigen::OuterStride<>(stride));
        StridedConst vm(base + off + 2 * d, n, dh, Eigen::OuterStride<>(stride));
        StridedMut dq(gq + off, n, dh, Eigen::OuterStride<>(stride));
        StridedMut dk(gq + off + d, n, dh, Eigen::OuterStride<>(stride));
        StridedMut dv(gq + off + 2 * d, n, dh, Eigen::OuterStride<>(stride));
        StridedConst dout(g + b * n * d + h * dh, n, dh, Eigen::OuterStride<>(d));
        ConstMap pm(p.data() + (b * heads + h) * n * n, n, n);
        dv.noalias() += pm.transpose().lazyProduct(dout);
        dp.noalias() = dout.lazyProduct(vm.transpose());
        for (std::size_t i = 0; i < n; ++i) {
          const double dot = pm.row(i).dot(dp.row(i));
          ds.row(i) = pm.row(i).array() * (dp.row(i).array() - dot);
        }
        ds *= inv_scale;
        dq.noalias() += ds.lazyProduct(km);
        dk.noalias() += ds.transpose().lazyProduct(qm);
      }
    }
  });
  return r;
}

Tensor masked_lse_ratio(const Tensor& s, std::size_t period, const std::vector<std::uint8_t>& pos_mask,
                        const std::vector<std::uint8_t>& den_mask) {
  require_matrix(s, "masked_lse_ratio");
  const std::size_t rows = s.rows(), k = s.cols();
  MRC_REQUIRE(period > 0 && rows % period == 0, "masked_lse_ratio: rows not a multiple of the mask period");
  MRC_REQUIRE(pos_mask.size() == period * k && den_mask.size() == period * k, "masked_lse_ratio: mask shape mismatch");
  constexpr double neg_inf = -std::numeric_limits<double>::infinity();

  // Softmax weights over each masked subset, kept for the backward pass.
  std::vector<double> w_pos(rows * k, 0.0), w_den(rows * k, 0.0), out(rows);
  auto masked_lse = [&](const double* row, const std::uint8_t* mask, double* weights) {
    double mx = neg_inf;
    for (std::size_t j = 0; j < k; ++j)
      if (mask[j]) mx = std::max(mx, row[j]);
    if (mx == neg_inf) throw ShapeError("masked_lse_ratio: empty mask row");
    double total = 0.0;
    for (std::size_t j = 0; j < k; ++j)
      if (mask[j]) total += (weights[j] = std::exp(row[j] - mx));
    for (std::size_t j = 0; j < k; ++j) weights[j] /= total;
    return mx + std::log(total);
  };
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = s.data().data() + r * k;
    const std::size_t pr = r % period;
    const double lp = masked_lse(row, pos_mask.data() + pr * k, w_pos.data() + r * k);
    const double ld = masked_lse(row, den_mask.data() + pr * k, w_den.data() + r * k);
    out[r] = ld - lp;
  }
  Tensor r = make_result({rows}, std::move(out), s.requires_grad());
  record_if_needed(r, [si = s.impl(), ri = r.impl(), w_pos = std::move(w_pos), w_den = std::move(w_den), rows, k] {
    const double* g = upstream(ri);
    double* gs = grad_of(si);
    if (!g || !gs) return;
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < k; ++j) gs[r * k + j] += g[r] * (w_den[r * k + j] - w_pos[r * k + j]);
  });
  return r;
}

Tensor dropout(const Tensor& a, double p, Rng& rng) {
  if (p < 0.0 || p >= 1.0) throw std::invalid_argument("dropout: p must lie in [0, 1)");
  if (p == 0.0) return a;
  const double keep = 1.0 / (1.0 - p);
  std::vector<double> mask(a.size());
  for (auto& m : mask) m = rng.bernoulli(p) ? 0.0 : keep;
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * mask[i];
  Tensor r = make_result(a.shape(), std::move(out), a.requires_grad());
  record_if_needed(r, [ai = a.impl(), ri = r.impl(), mask = std::move(mask)] {
    const double* g = upstream(ri);
    double* ga = grad_of(ai);
    if (!g || !ga) return;
    for (std::size_t i = 0; i < mask.size(); ++i) ga[i] += g[i] * mask[i];
  });
  return r;
}

Tensor weighted_sq_error_mean(const Tensor& pred, const Tensor& target, const std::vector<double>& weight) {
  require_same_shape(pred, target, "weighted_sq_error_mean");
  MRC_REQUIRE(weight.size() == pred.size(), "weighted_sq_error_mean: weight length mismatch");
  MRC_REQUIRE(pred.size() > 0, "weighted_sq_error_mean: empty input");
  const double inv = 1.0 / static_cast<double>(pred.size());
  double total = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double e = pred[i] - target[i];
    total += weight[i] * e * e;
  }
  Tensor r = make_result({}, {total * inv}, pred.requires_grad());
  record_if_needed(r, [pi = pred.impl(), ti = target.impl(), ri = r.impl(), weight, inv] {
    const double* g = upstream(ri);
    double* gp = grad_of(pi);
    if (!g || !gp) return;
    for (std::size_t i = 0; i < weight.size(); ++i)
      gp[i] += g[0] * 2.0 * weight[i] * (pi->data[i] - ti->data[i]) * inv;
  });
  return r;
}

}  // namespace multirc::ops
