#pragma once

#include <functional>
#include <span>
#include <vector>

#include "sktune/tensor.hpp"

namespace sktune {

// Every op below records a tape node when a tape is active and at least one
// input requires grad. Reductions run sequentially left to right, so reruns
// under a fixed seed are bit-identical.

/// Batched matrix product over the last two axes. Leading batch axes must be
/// equal or 1 (broadcast); a lower-rank operand is left-padded with 1s.
Tensor matmul(const Tensor& a, const Tensor& b);

/// Swaps the last two axes.
Tensor transpose(const Tensor& x);

/// Elementwise sum. `b` may also be a trailing-suffix shape of `a` (a bias
/// broadcast over the leading axes); no other broadcasting is performed.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);

Tensor softmax(const Tensor& x, int axis = -1);
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps);
Tensor gelu(const Tensor& x);
Tensor tanh(const Tensor& x);

/// Row gather: out[i] = table[ids[i]] for a [V,d] table.
Tensor embedding(const Tensor& table, std::span<const int> ids);

Tensor concat(const Tensor& a, const Tensor& b, int axis);
Tensor concat(std::span<const Tensor> parts, int axis);
Tensor slice(const Tensor& x, int axis, std::size_t start, std::size_t length);
Tensor reshape(const Tensor& x, Shape shape);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

/// Mean over rows of -log softmax(logits)[label]; logits are [b,C].
Tensor cross_entropy(const Tensor& logits, std::span<const int> labels);

/// Central-difference check of d f / d x. Perturbs `x` in place (restoring it)
/// and returns max_i |g_autodiff - g_fd| / max(1, |g_fd|).
double grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x, double eps);

}  // namespace sktune
