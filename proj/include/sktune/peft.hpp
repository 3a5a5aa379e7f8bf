#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sktune/checkpoint.hpp"
#include "sktune/data.hpp"
#include "sktune/model.hpp"

namespace sktune {

enum class MethodKind { FullFT, PromptVirtual, PrefixVirtual, PTuning, LoRA, SKPrefix, SKPrompt };

/// CLI spelling: full, prompt, prefix, ptuning, lora, sk-prefix, sk-prompt.
std::string_view to_string(MethodKind kind);
/// Accepts the spellings above plus lora2 / lora4, which also set the rank.
MethodKind method_from_string(std::string_view name, std::size_t* rank = nullptr);
bool uses_prompt_text(MethodKind kind);
/// Display name; LoRA carries its rank ("lora2").
std::string method_label(MethodKind kind, std::size_t rank);

struct MethodOptions {
  TaskKind task = TaskKind::Sequence;
  std::size_t num_classes = 2;
  std::vector<int> prompt_ids;     // SK kinds
  std::size_t n_virtual = 20;      // virtual-token kinds
  std::size_t rank = 2;            // LoRA
  std::size_t bottleneck = 4;      // prompt adapter width
  std::size_t adapter_layers = 1;  // stacked prompt adapter blocks
  std::uint64_t seed = 0;
};

struct ParamBreakdown {
  std::string name;
  std::size_t count = 0;
};

struct ParamAccounting {
  std::size_t count = 0;
  double percentage = 0.0;
  std::vector<ParamBreakdown> breakdown;  // sorted by name, sums to count
};

/// One configured fine-tuning method: its trainable tensors and the task head.
/// Every method except FullFT leaves the model it is given untouched; FullFT
/// trains a private copy of the model's parameters.
class PeftMethod {
 public:
  static PeftMethod create(MethodKind kind, const FrozenModel& model, MethodOptions options);

  MethodKind kind() const { return kind_; }
  const MethodOptions& options() const { return options_; }

  /// Method-owned tensors plus the head, by name. FullFT entries carry a
  /// "model." prefix.
  const ParamMap& params() const { return params_; }
  const Tensor& param(const std::string& name) const;
  std::vector<Tensor> trainable() const;

  /// The model the method runs on: the private copy for FullFT, else `base`.
  const FrozenModel& model_for(const FrozenModel& base) const;

  /// Reinstalls tensors read from an adapter checkpoint.
  void load_params(const ParamMap& params);

  /// Frozen per-layer prompt states [m, l, d]; cached for the model the
  /// method was created on.
  Tensor prompt_states(const FrozenModel& model) const;

 private:
  PeftMethod() = default;

  MethodKind kind_ = MethodKind::SKPrompt;
  MethodOptions options_;
  ParamMap params_;
  std::shared_ptr<FrozenModel> tuned_;
  std::optional<Tensor> states_, states_source_;
};

struct MethodOutput {
  Tensor logits;                    // [1, C] or [n, C] for the token task
  std::optional<Tensor> attention;  // [m, heads, rows, cols] when captured
  std::size_t prompt_rows = 0;      // leading sequence rows that are not input
};

/// Dispatches on the method kind. Throws SequenceEmpty on an empty input.
MethodOutput method_forward(const FrozenModel& model, const PeftMethod& method, std::span<const int> input_ids,
                            bool capture_attention = false);

Tensor sk_prompt_forward(const FrozenModel& model, const PeftMethod& method, std::span<const int> input_ids);
Tensor sk_prefix_forward(const FrozenModel& model, const PeftMethod& method, std::span<const int> input_ids);
Tensor virtual_prompt_forward(const FrozenModel& model, const PeftMethod& method, std::span<const int> input_ids);
Tensor virtual_prefix_forward(const FrozenModel& model, const PeftMethod& method, std::span<const int> input_ids);
Tensor p_tuning_forward(const FrozenModel& model, const PeftMethod& method, std::span<const int> input_ids);
Tensor lora_forward(const FrozenModel& model, const PeftMethod& method, std::span<const int> input_ids);
Tensor full_ft_forward(const FrozenModel& model, const PeftMethod& method, std::span<const int> input_ids);

/// Head on the frozen model with no method at all.
Tensor base_forward(const FrozenModel& model, const PeftMethod& method, std::span<const int> input_ids);

/// Per-layer key/value rows the prefix methods inject.
KvPrefix sk_prefix_kv(const FrozenModel& model, const PeftMethod& method);
KvPrefix virtual_prefix_kv(const FrozenModel& model, const PeftMethod& method);

/// Counts the scalars flagged trainable. Percentage is relative to the model
/// plus the method's own scalars, and exactly 100 for FullFT.
ParamAccounting trainable_params(const PeftMethod& method, const FrozenModel& model);

Checkpoint adapter_checkpoint(const PeftMethod& method);
PeftMethod method_from_checkpoint(const FrozenModel& model, const Checkpoint& checkpoint);

}  // namespace sktune
