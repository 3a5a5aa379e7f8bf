#include "sktune/train.hpp"

#include <chrono>
#include <cmath>

#include "sktune/error.hpp"
#include "sktune/ops.hpp"

namespace sktune {

double default_lr(TaskKind task) {
  switch (task) {
    case TaskKind::Sequence: return 1e-3;
    case TaskKind::Token: return 1e-5;
    case TaskKind::Entailment: return 1e-4;
  }
  return 1e-3;
}

std::optional<std::size_t> convergence_step(std::span<const double> losses, double threshold) {
  if (!(threshold > 0)) throw Error(ErrorKind::InvalidArgument, "convergence threshold must be positive");
  for (std::size_t i = 0; i < losses.size(); ++i)
    if (losses[i] < threshold) return i;
  return std::nullopt;
}

namespace {

void append_targets(const Example& ex, std::vector<int>& targets) {
  if (ex.task == TaskKind::Token) {
    targets.insert(targets.end(), ex.tags.begin(), ex.tags.end());
  } else {
    targets.push_back(ex.label);
  }
}

int argmax_row(std::span<const double> row) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < row.size(); ++c)
    if (row[c] > row[best]) best = c;
  return static_cast<int>(best);
}

}  // namespace

Tensor batch_loss(const FrozenModel& model, const PeftMethod& method, std::span<const Example> batch) {
  if (batch.empty()) throw Error(ErrorKind::Empty, "empty batch");
  std::vector<Tensor> logits;
  std::vector<int> targets;
  logits.reserve(batch.size());
  for (const Example& ex : batch) {
    if (ex.task != method.options().task) {
      throw Error(ErrorKind::InvalidArgument, "example of task " + std::string(to_string(ex.task)) +
                                                  " given to a " + std::string(to_string(method.options().task)) +
                                                  " head");
    }
    logits.push_back(method_forward(model, method, ex.input_ids()).logits);
    append_targets(ex, targets);
  }
  return cross_entropy(logits.size() == 1 ? logits.front() : concat(logits, 0), targets);
}

TrainRun train(const FrozenModel& model, PeftMethod& method, std::span<const Example> data, const TrainHyper& hp,
               std::span<const Example> eval_set) {
  if (data.empty()) throw Error(ErrorKind::Empty, "training set is empty");
  if (!(hp.lr >= 0) || hp.batch_size == 0) {
    throw Error(ErrorKind::InvalidArgument, "training needs lr >= 0 and batch_size >= 1");
  }
  const auto start = std::chrono::steady_clock::now();

  TrainRun run;
  run.method = method.kind();
  run.label = method_label(method.kind(), method.options().rank);
  run.seed = hp.seed;
  run.params = trainable_params(method, model);

  std::vector<Tensor> params = method.trainable();
  OptimState state(AdamWConfig{.lr = hp.lr, .weight_decay = hp.weight_decay});
  std::vector<std::size_t> order(data.size());
  std::vector<Example> batch;

  for (std::size_t epoch = 0; epoch < hp.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    seeded_shuffle(order, hp.seed * 0x9e3779b97f4a7c15ULL + epoch);
    for (std::size_t begin = 0; begin < order.size(); begin += hp.batch_size) {
      batch.clear();
      for (std::size_t i = begin; i < std::min(order.size(), begin + hp.batch_size); ++i) batch.push_back(data[order[i]]);
      for (auto& p : params) p.clear_grad();
      Tape tape;
      TapeScope scope(&tape);
      Tensor loss = batch_loss(model, method, batch);
      const double value = loss.item();
      if (!std::isfinite(value)) throw NonFiniteError(run.losses.size(), value);
      backward(loss);
      adamw_step(params, state);
      run.losses.push_back(value);
    }
  }
  for (auto& p : params) p.clear_grad();

  run.convergence_step = convergence_step(run.losses, hp.loss_threshold);
  run.metrics = evaluate(model, method, eval_set.empty() ? data : eval_set);
  run.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return run;
}

MetricsReport evaluate(const FrozenModel& model, const PeftMethod& method, std::span<const Example> data) {
  TapeScope no_record(nullptr);
  std::vector<int> preds, labels;
  for (const Example& ex : data) {
    const Tensor logits = method_forward(model, method, ex.input_ids()).logits;
    const std::size_t classes = logits.dim(1);
    for (std::size_t r = 0; r < logits.dim(0); ++r) preds.push_back(argmax_row(logits.data().subspan(r * classes, classes)));
    append_targets(ex, labels);
  }
  return make_report(preds, labels, method.options().num_classes);
}

}  // namespace sktune
