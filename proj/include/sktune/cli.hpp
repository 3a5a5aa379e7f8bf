#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "sktune/data.hpp"
#include "sktune/model.hpp"
#include "sktune/peft.hpp"
#include "sktune/train.hpp"

namespace sktune::cli {

enum ExitCode : int { kOk = 0, kIoFailure = 1, kUsage = 2, kNumericAbort = 3, kVerifyFailure = 4 };

/// Entry point shared by the sktune binary and in-process callers. `args`
/// excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Pieces the commands are built from, exposed for tests.

inline constexpr std::size_t kCorpusSequences = 2000;
inline constexpr std::size_t kCorpusLength = 24;
inline constexpr std::uint64_t kDataSeed = 1;

struct PretrainResult {
  FrozenModel model;
  double held_out_loss = 0.0;
};

/// Reference config pretrained on the synthetic corpus; the last tenth of
/// the corpus is held out.
PretrainResult pretrain_reference(std::uint64_t seed, std::size_t steps);

/// Synthetic task of n examples split 70/10/20 with fixed seeds.
DataSplits synthetic_task(TaskKind task, std::size_t n, const Vocab& vocab);

std::size_t default_epochs(TaskKind task);

struct GradReport {
  std::string name;
  double max_rel_error = 0.0;
};

/// Every tensor primitive and both end-to-end adapter losses at d=8, m=2,
/// two heads.
std::vector<GradReport> gradcheck_all(double eps);

/// Attention of one SKPrompt forward restricted to the input rows:
/// [m, heads, n, l + n] with the prompt columns first.
Tensor input_row_attention(const FrozenModel& model, const PeftMethod& method, std::span<const int> input_ids);

}  // namespace sktune::cli
