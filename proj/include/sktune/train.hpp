#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sktune/data.hpp"
#include "sktune/metrics.hpp"
#include "sktune/optim.hpp"
#include "sktune/peft.hpp"

namespace sktune {

struct TrainHyper {
  double lr = 1e-3;
  std::size_t epochs = 3;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;
  double loss_threshold = 0.2;
  double weight_decay = 0.01;
};

/// 1e-3 sequence, 1e-5 token, 1e-4 entailment.
double default_lr(TaskKind task);

struct TrainRun {
  MethodKind method = MethodKind::SKPrompt;
  std::string label;
  std::uint64_t seed = 0;
  std::vector<double> losses;  // one per optimizer step
  std::optional<std::size_t> convergence_step;
  MetricsReport metrics;
  ParamAccounting params;
  double wall_seconds = 0.0;
};

std::optional<std::size_t> convergence_step(std::span<const double> losses, double threshold);

/// Mean cross-entropy over the batch: one term per example, or per token
/// for the token task.
Tensor batch_loss(const FrozenModel& model, const PeftMethod& method, std::span<const Example> batch);

/// Seeded shuffled mini-batches; each step runs forward, cross-entropy,
/// backward and one AdamW update of the method's tensors. Metrics are taken
/// on `eval_set`, or on `data` when `eval_set` is empty. A non-finite loss
/// raises NonFiniteError with the step index.
TrainRun train(const FrozenModel& model, PeftMethod& method, std::span<const Example> data, const TrainHyper& hp,
               std::span<const Example> eval_set = {});

/// Argmax predictions; never mutates parameters.
MetricsReport evaluate(const FrozenModel& model, const PeftMethod& method, std::span<const Example> data);

}  // namespace sktune
