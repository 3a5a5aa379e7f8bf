#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "sktune/tensor.hpp"

namespace sktune {

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

/// First/second moments per parameter plus the shared step counter.
struct OptimState {
  AdamWConfig hp;
  std::vector<std::vector<double>> first;
  std::vector<std::vector<double>> second;
  std::size_t step = 0;

  OptimState() = default;
  explicit OptimState(AdamWConfig config) : hp(config) {}
};

/// One AdamW update: decoupled decay `p -= lr * wd * p`, then the
/// bias-corrected Adam step. Tensors that do not require grad are skipped;
/// a trainable tensor without a grad raises MissingGrad.
void adamw_step(std::span<Tensor> params, OptimState& state);

}  // namespace sktune
