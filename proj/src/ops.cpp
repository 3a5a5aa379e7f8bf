#include "sktune/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "sktune/error.hpp"

namespace sktune {

namespace {

using Impl = std::shared_ptr<detail::TensorImpl>;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;

[[noreturn]] void shape_error(const std::string& op, const Shape& a, const Shape& b) {
  throw Error(ErrorKind::ShapeMismatch, op + ": " + shape_string(a) + " vs " + shape_string(b));
}

std::size_t normalize_axis(int axis, std::size_t rank, const char* op) {
  const int r = static_cast<int>(rank);
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    throw Error(ErrorKind::ShapeMismatch,
                std::string(op) + ": axis " + std::to_string(axis) + " invalid for rank " + std::to_string(rank));
  }
  return static_cast<std::size_t>(a);
}

// Marks `out` as differentiable and appends a node when recording is on.
void record(Tensor& out, std::vector<Impl> inputs, std::function<void()> backward) {
  bool needs = false;
  for (const auto& in : inputs) needs = needs || in->requires_grad;
  if (!needs) return;
  out.set_requires_grad(true);
  if (Tape* tape = Tape::active()) tape->record(std::move(inputs), out.impl(), std::move(backward));
}

// Splits `shape` around `axis` into (outer, axis length, inner).
struct AxisView {
  std::size_t outer = 1, length = 1, inner = 1;
};

AxisView axis_view(const Shape& shape, std::size_t axis) {
  AxisView v;
  for (std::size_t i = 0; i < axis; ++i) v.outer *= shape[i];
  v.length = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) v.inner *= shape[i];
  return v;
}

struct MatmulPlan {
  Shape out_shape;
  std::size_t n = 0, k = 0, p = 0, batches = 1;
  std::vector<std::size_t> a_offset, b_offset;
};

MatmulPlan plan_matmul(const Shape& as, const Shape& bs) {
  if (as.size() < 2 || bs.size() < 2) shape_error("matmul", as, bs);
  const std::size_t rank = std::max(as.size(), bs.size());
  Shape a(rank - as.size(), 1), b(rank - bs.size(), 1);
  a.insert(a.end(), as.begin(), as.end());
  b.insert(b.end(), bs.begin(), bs.end());

  MatmulPlan plan;
  plan.n = a[rank - 2];
  plan.k = a[rank - 1];
  plan.p = b[rank - 1];
  if (b[rank - 2] != plan.k) shape_error("matmul", as, bs);

  Shape batch(rank - 2);
  for (std::size_t i = 0; i + 2 < rank; ++i) {
    if (a[i] != b[i] && a[i] != 1 && b[i] != 1) shape_error("matmul", as, bs);
    batch[i] = std::max(a[i], b[i]);
  }
  plan.batches = numel_of(batch);
  plan.out_shape = batch;
  plan.out_shape.push_back(plan.n);
  plan.out_shape.push_back(plan.p);

  plan.a_offset.resize(plan.batches);
  plan.b_offset.resize(plan.batches);
  for (std::size_t flat = 0; flat < plan.batches; ++flat) {
    std::size_t rem = flat, ai = 0, bi = 0, a_stride = 1, b_stride = 1;
    for (std::size_t i = batch.size(); i-- > 0;) {
      const std::size_t idx = rem % batch[i];
      rem /= batch[i];
      if (a[i] != 1) ai += idx * a_stride;
      if (b[i] != 1) bi += idx * b_stride;
      a_stride *= a[i];
      b_stride *= b[i];
    }
    plan.a_offset[flat] = ai * plan.n * plan.k;
    plan.b_offset[flat] = bi * plan.k * plan.p;
  }
  return plan;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  const MatmulPlan plan = plan_matmul(a.shape(), b.shape());
  std::vector<double> out(numel_of(plan.out_shape), 0.0);
  const std::size_t n = plan.n, k = plan.k, p = plan.p;
  for (std::size_t t = 0; t < plan.batches; ++t) {
    ConstMatMap am(a.data().data() + plan.a_offset[t], n, k);
    ConstMatMap bm(b.data().data() + plan.b_offset[t], k, p);
    MatMap cm(out.data() + t * n * p, n, p);
    cm.noalias() = am * bm;
  }
  Tensor result(plan.out_shape, std::move(out));
  Impl ai = a.impl(), bi = b.impl(), oi = result.impl();
  record(result, {ai, bi}, [ai, bi, oi, plan] {
    const std::size_t n = plan.n, k = plan.k, p = plan.p;
    for (std::size_t t = 0; t < plan.batches; ++t) {
      ConstMatMap gm(oi->grad.data() + t * n * p, n, p);
      if (ai->requires_grad) {
        MatMap ga(ai->grad_buffer().data() + plan.a_offset[t], n, k);
        ga.noalias() += gm * ConstMatMap(bi->data.data() + plan.b_offset[t], k, p).transpose();
      }
      if (bi->requires_grad) {
        MatMap gb(bi->grad_buffer().data() + plan.b_offset[t], k, p);
        gb.noalias() += ConstMatMap(ai->data.data() + plan.a_offset[t], n, k).transpose() * gm;
      }
    }
  });
  return result;
}

Tensor transpose(const Tensor& x) {
  if (x.rank() < 2) throw Error(ErrorKind::ShapeMismatch, "transpose needs rank >= 2");
  Shape shape = x.shape();
  const std::size_t rows = shape[shape.size() - 2], cols = shape.back();
  std::swap(shape[shape.size() - 2], shape.back());
  const std::size_t batches = x.numel() / std::max<std::size_t>(rows * cols, 1);
  std::vector<double> out(x.numel());
  for (std::size_t t = 0; t < batches; ++t) {
    const double* src = x.data().data() + t * rows * cols;
    double* dst = out.data() + t * rows * cols;
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j) dst[j * rows + i] = src[i * cols + j];
  }
  Tensor result(shape, std::move(out));
  Impl xi = x.impl(), oi = result.impl();
  record(result, {xi}, [xi, oi, rows, cols, batches] {
    auto& gx = xi->grad_buffer();
    for (std::size_t t = 0; t < batches; ++t) {
      const double* g = oi->grad.data() + t * rows * cols;
      double* dst = gx.data() + t * rows * cols;
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) dst[i * cols + j] += g[j * rows + i];
    }
  });
  return result;
}

namespace {

// Returns the repeat count when `b` equals `a` or is a trailing suffix of it.
std::size_t broadcast_repeats(const Shape& a, const Shape& b, const char* op) {
  if (b.size() > a.size() || !std::equal(b.rbegin(), b.rend(), a.rbegin())) shape_error(op, a, b);
  return numel_of(a) / std::max<std::size_t>(numel_of(b), 1);
}

Tensor add_scaled(const Tensor& a, const Tensor& b, double sign, const char* op) {
  const std::size_t repeats = broadcast_repeats(a.shape(), b.shape(), op);
  const std::size_t inner = b.numel();
  std::vector<double> out(a.data().begin(), a.data().end());
  for (std::size_t r = 0; r < repeats; ++r)
    for (std::size_t i = 0; i < inner; ++i) out[r * inner + i] += sign * b.data()[i];
  Tensor result(a.shape(), std::move(out));
  Impl ai = a.impl(), bi = b.impl(), oi = result.impl();
  record(result, {ai, bi}, [ai, bi, oi, repeats, inner, sign] {
    const auto& g = oi->grad;
    if (ai->requires_grad) {
      auto& ga = ai->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (bi->requires_grad) {
      auto& gb = bi->grad_buffer();
      for (std::size_t r = 0; r < repeats; ++r)
        for (std::size_t i = 0; i < inner; ++i) gb[i] += sign * g[r * inner + i];
    }
  });
  return result;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return add_scaled(a, b, 1.0, "add"); }

Tensor sub(const Tensor& a, const Tensor& b) { return add_scaled(a, b, -1.0, "sub"); }

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error("mul", a.shape(), b.shape());
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  Tensor result(a.shape(), std::move(out));
  Impl ai = a.impl(), bi = b.impl(), oi = result.impl();
  record(result, {ai, bi}, [ai, bi, oi] {
    const auto& g = oi->grad;
    if (ai->requires_grad) {
      auto& ga = ai->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bi->data[i];
    }
    if (bi->requires_grad) {
      auto& gb = bi->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * ai->data[i];
    }
  });
  return result;
}

Tensor scale(const Tensor& x, double factor) {
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] * factor;
  Tensor result(x.shape(), std::move(out));
  Impl xi = x.impl(), oi = result.impl();
  record(result, {xi}, [xi, oi, factor] {
    auto& gx = xi->grad_buffer();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += oi->grad[i] * factor;
  });
  return result;
}

Tensor softmax(const Tensor& x, int axis) {
  const std::size_t ax = normalize_axis(axis, x.rank(), "softmax");
  const AxisView v = axis_view(x.shape(), ax);
  std::vector<double> out(x.numel());
  const double* src = x.data().data();
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t in = 0; in < v.inner; ++in) {
      const std::size_t base = o * v.length * v.inner + in;
      double peak = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < v.length; ++j) peak = std::max(peak, src[base + j * v.inner]);
      double total = 0.0;
      for (std::size_t j = 0; j < v.length; ++j) {
        const double e = std::exp(src[base + j * v.inner] - peak);
        out[base + j * v.inner] = e;
        total += e;
      }
      for (std::size_t j = 0; j < v.length; ++j) out[base + j * v.inner] /= total;
    }
  }
  Tensor result(x.shape(), std::move(out));
  Impl xi = x.impl(), oi = result.impl();
  record(result, {xi}, [xi, oi, v] {
    auto& gx = xi->grad_buffer();
    const auto& y = oi->data;
    const auto& g = oi->grad;
    for (std::size_t o = 0; o < v.outer; ++o) {
      for (std::size_t in = 0; in < v.inner; ++in) {
        const std::size_t base = o * v.length * v.inner + in;
        double dot = 0.0;
        for (std::size_t j = 0; j < v.length; ++j) dot += g[base + j * v.inner] * y[base + j * v.inner];
        for (std::size_t j = 0; j < v.length; ++j) {
          const std::size_t idx = base + j * v.inner;
          gx[idx] += y[idx] * (g[idx] - dot);
        }
      }
    }
  });
  return result;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  if (x.rank() < 1 || gamma.rank() != 1 || beta.shape() != gamma.shape() || x.shape().back() != gamma.dim(0)) {
    shape_error("layer_norm", x.shape(), gamma.shape());
  }
  if (eps < 0.0) throw Error(ErrorKind::InvalidArgument, "layer_norm eps must be non-negative");
  const std::size_t d = gamma.dim(0);
  const std::size_t rows = d ? x.numel() / d : 0;
  std::vector<double> out(x.numel()), xhat(x.numel()), rstd(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = x.data().data() + r * d;
    double mu = 0.0;
    for (std::size_t i = 0; i < d; ++i) mu += row[i];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t i = 0; i < d; ++i) var += (row[i] - mu) * (row[i] - mu);
    var /= static_cast<double>(d);
    const double denom = std::sqrt(var + eps);
    rstd[r] = denom > 0.0 ? 1.0 / denom : 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      const double h = (row[i] - mu) * rstd[r];
      xhat[r * d + i] = h;
      out[r * d + i] = h * gamma.data()[i] + beta.data()[i];
    }
  }
  Tensor result(x.shape(), std::move(out));
  Impl xi = x.impl(), gi = gamma.impl(), bi = beta.impl(), oi = result.impl();
  record(result, {xi, gi, bi}, [xi, gi, bi, oi, xhat = std::move(xhat), rstd = std::move(rstd), d, rows] {
    const auto& g = oi->grad;
    if (gi->requires_grad) {
      auto& gg = gi->grad_buffer();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t i = 0; i < d; ++i) gg[i] += g[r * d + i] * xhat[r * d + i];
    }
    if (bi->requires_grad) {
      auto& gb = bi->grad_buffer();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t i = 0; i < d; ++i) gb[i] += g[r * d + i];
    }
    if (xi->requires_grad) {
      auto& gx = xi->grad_buffer();
      const double inv_d = 1.0 / static_cast<double>(d);
      for (std::size_t r = 0; r < rows; ++r) {
        double mean_dh = 0.0, mean_dh_h = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
          const double dh = g[r * d + i] * gi->data[i];
          mean_dh += dh;
          mean_dh_h += dh * xhat[r * d + i];
        }
        mean_dh *= inv_d;
        mean_dh_h *= inv_d;
        for (std::size_t i = 0; i < d; ++i) {
          const double dh = g[r * d + i] * gi->data[i];
          gx[r * d + i] += rstd[r] * (dh - mean_dh - xhat[r * d + i] * mean_dh_h);
        }
      }
    }
  });
  return result;
}

Tensor gelu(const Tensor& x) {
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = x.data()[i];
    out[i] = 0.5 * v * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
  }
  Tensor result(x.shape(), std::move(out));
  Impl xi = x.impl(), oi = result.impl();
  record(result, {xi}, [xi, oi] {
    auto& gx = xi->grad_buffer();
    const double inv_sqrt_2pi = 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
    for (std::size_t i = 0; i < gx.size(); ++i) {
      const double v = xi->data[i];
      const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
      gx[i] += oi->grad[i] * (cdf + v * pdf);
    }
  });
  return result;
}

Tensor tanh(const Tensor& x) {
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(x.data()[i]);
  Tensor result(x.shape(), std::move(out));
  Impl xi = x.impl(), oi = result.impl();
  record(result, {xi}, [xi, oi] {
    auto& gx = xi->grad_buffer();
    for (std::size_t i = 0; i < gx.size(); ++i) {
      const double t = oi->data[i];
      gx[i] += oi->grad[i] * (1.0 - t * t);
    }
  });
  return result;
}

Tensor embedding(const Tensor& table, std::span<const int> ids) {
  if (table.rank() != 2) throw Error(ErrorKind::ShapeMismatch, "embedding table must be [V,d]");
  const std::size_t vocab = table.dim(0), d = table.dim(1);
  std::vector<int> rows(ids.begin(), ids.end());
  std::vector<double> out(rows.size() * d);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || static_cast<std::size_t>(rows[i]) >= vocab) {
      throw Error(ErrorKind::TokenOutOfRange,
                  "token id " + std::to_string(rows[i]) + " outside vocab of " + std::to_string(vocab));
    }
    std::copy_n(table.data().data() + static_cast<std::size_t>(rows[i]) * d, d, out.data() + i * d);
  }
  Tensor result(Shape{rows.size(), d}, std::move(out));
  Impl ti = table.impl(), oi = result.impl();
  record(result, {ti}, [ti, oi, rows = std::move(rows), d] {
    auto& gt = ti->grad_buffer();
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t j = 0; j < d; ++j) gt[static_cast<std::size_t>(rows[i]) * d + j] += oi->grad[i * d + j];
  });
  return result;
}

Tensor concat(const Tensor& a, const Tensor& b, int axis) {
  const Tensor parts[] = {a, b};
  return concat(std::span<const Tensor>(parts), axis);
}

Tensor concat(std::span<const Tensor> parts, int axis) {
  if (parts.empty()) throw Error(ErrorKind::ShapeMismatch, "concat of zero tensors");
  const Shape& first = parts.front().shape();
  const std::size_t ax = normalize_axis(axis, first.size(), "concat");
  Shape out_shape = first;
  out_shape[ax] = 0;
  for (const auto& p : parts) {
    if (p.rank() != first.size()) shape_error("concat", first, p.shape());
    for (std::size_t i = 0; i < first.size(); ++i)
      if (i != ax && p.shape()[i] != first[i]) shape_error("concat", first, p.shape());
    out_shape[ax] += p.dim(ax);
  }
  const AxisView v = axis_view(out_shape, ax);
  std::vector<double> out(numel_of(out_shape));
  std::vector<std::size_t> widths;  // contiguous run per outer index
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.dim(ax) * v.inner;
    for (std::size_t o = 0; o < v.outer; ++o)
      std::copy_n(p.data().data() + o * w, w, out.data() + o * v.length * v.inner + offset);
    offset += w;
    widths.push_back(w);
  }
  Tensor result(out_shape, std::move(out));
  std::vector<Impl> inputs;
  for (const auto& p : parts) inputs.push_back(p.impl());
  Impl oi = result.impl();
  auto ins = inputs;
  record(result, std::move(inputs), [ins = std::move(ins), oi, widths = std::move(widths), v] {
    std::size_t offset = 0;
    for (std::size_t k = 0; k < ins.size(); ++k) {
      const std::size_t w = widths[k];
      if (ins[k]->requires_grad) {
        auto& g = ins[k]->grad_buffer();
        for (std::size_t o = 0; o < v.outer; ++o) {
          const double* src = oi->grad.data() + o * v.length * v.inner + offset;
          for (std::size_t i = 0; i < w; ++i) g[o * w + i] += src[i];
        }
      }
      offset += w;
    }
  });
  return result;
}

Tensor slice(const Tensor& x, int axis, std::size_t start, std::size_t length) {
  const std::size_t ax = normalize_axis(axis, x.rank(), "slice");
  if (start + length > x.dim(ax)) {
    throw Error(ErrorKind::IndexOutOfRange, "slice [" + std::to_string(start) + "," + std::to_string(start + length) +
                                                ") of axis with " + std::to_string(x.dim(ax)) + " entries");
  }
  const AxisView v = axis_view(x.shape(), ax);
  Shape out_shape = x.shape();
  out_shape[ax] = length;
  const std::size_t w = length * v.inner, src_w = v.length * v.inner, skip = start * v.inner;
  std::vector<double> out(numel_of(out_shape));
  for (std::size_t o = 0; o < v.outer; ++o) std::copy_n(x.data().data() + o * src_w + skip, w, out.data() + o * w);
  Tensor result(out_shape, std::move(out));
  Impl xi = x.impl(), oi = result.impl();
  record(result, {xi}, [xi, oi, v, w, src_w, skip] {
    auto& gx = xi->grad_buffer();
    for (std::size_t o = 0; o < v.outer; ++o)
      for (std::size_t i = 0; i < w; ++i) gx[o * src_w + skip + i] += oi->grad[o * w + i];
  });
  return result;
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel_of(shape) != x.numel()) shape_error("reshape", x.shape(), shape);
  Tensor result(std::move(shape), std::vector<double>(x.data().begin(), x.data().end()));
  Impl xi = x.impl(), oi = result.impl();
  record(result, {xi}, [xi, oi] {
    auto& gx = xi->grad_buffer();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += oi->grad[i];
  });
  return result;
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  Tensor result = Tensor::scalar(total);
  Impl xi = x.impl(), oi = result.impl();
  record(result, {xi}, [xi, oi] {
    auto& gx = xi->grad_buffer();
    const double g = oi->grad[0];
    for (double& v : gx) v += g;
  });
  return result;
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw Error(ErrorKind::Empty, "mean of an empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2) throw Error(ErrorKind::ShapeMismatch, "cross_entropy expects [b,C] logits");
  const std::size_t b = logits.dim(0), c = logits.dim(1);
  if (labels.size() != b) {
    throw Error(ErrorKind::ShapeMismatch,
                std::to_string(labels.size()) + " labels for " + std::to_string(b) + " logit rows");
  }
  if (b == 0) throw Error(ErrorKind::Empty, "cross_entropy over an empty batch");
  std::vector<int> ys(labels.begin(), labels.end());
  for (int y : ys) {
    if (y < 0 || static_cast<std::size_t>(y) >= c) {
      throw Error(ErrorKind::LabelOutOfRange, "label " + std::to_string(y) + " outside [0," + std::to_string(c) + ")");
    }
  }
  std::vector<double> probs(b * c);
  double total = 0.0;
  for (std::size_t r = 0; r < b; ++r) {
    const double* row = logits.data().data() + r * c;
    const double peak = *std::max_element(row, row + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      probs[r * c + j] = std::exp(row[j] - peak);
      z += probs[r * c + j];
    }
    for (std::size_t j = 0; j < c; ++j) probs[r * c + j] /= z;
    total += peak + std::log(z) - row[ys[r]];
  }
  Tensor result = Tensor::scalar(total / static_cast<double>(b));
  Impl li = logits.impl(), oi = result.impl();
  record(result, {li}, [li, oi, probs = std::move(probs), ys = std::move(ys), b, c] {
    auto& gl = li->grad_buffer();
    const double g = oi->grad[0] / static_cast<double>(b);
    for (std::size_t r = 0; r < b; ++r)
      for (std::size_t j = 0; j < c; ++j)
        gl[r * c + j] += g * (probs[r * c + j] - (static_cast<int>(j) == ys[r] ? 1.0 : 0.0));
  });
  return result;
}

double grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x, double eps) {
  const bool had_requires_grad = x.requires_grad();
  x.set_requires_grad(true);
  x.clear_grad();

  std::vector<double> analytic(x.numel(), 0.0);
  {
    Tape tape;
    TapeScope scope(&tape);
    Tensor loss = f(x);
    backward(loss);
    if (x.has_grad()) analytic.assign(x.grad().begin(), x.grad().end());
  }
  x.clear_grad();

  double worst = 0.0;
  {
    TapeScope no_record(nullptr);
    auto values = x.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + eps;
      const double up = f(x).item();
      values[i] = saved - eps;
      const double down = f(x).item();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      worst = std::max(worst, std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(numeric)));
    }
  }
  x.set_requires_grad(had_requires_grad);
  return worst;
}

}  // namespace sktune
