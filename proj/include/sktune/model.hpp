#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sktune/tensor.hpp"

namespace sktune {

using ParamMap = std::map<std::string, Tensor>;
using TokenSequence = std::vector<int>;

struct ModelConfig {
  std::size_t vocab_size = 64;
  std::size_t d_model = 32;
  std::size_t n_layers = 2;
  std::size_t n_heads = 4;
  std::size_t d_ffn = 64;
  std::size_t max_seq = 64;
  double ln_eps = 1e-5;
  std::uint64_t seed = 0;

  std::size_t head_dim() const { return d_model / n_heads; }
  // Throws InvalidArgument on a degenerate or inconsistent config.
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

/// Decoder-only causal transformer with learned absolute positions and
/// pre-norm blocks. The LM head is tied to the token embedding.
class FrozenModel {
 public:
  struct Block {
    Tensor wq, wk, wv, wo;
    Tensor ln1_gamma, ln1_beta, ln2_gamma, ln2_beta;
    Tensor ffn_w1, ffn_b1, ffn_w2, ffn_b2;
  };

  /// Seeded random initialization; the result is not frozen.
  static FrozenModel initialize(const ModelConfig& config);
  /// Rebuilds a model from named parameters (e.g. a loaded checkpoint).
  static FrozenModel from_params(const ModelConfig& config, ParamMap params);

  const ModelConfig& config() const { return config_; }
  const ParamMap& params() const { return params_; }
  const Tensor& param(const std::string& name) const;
  std::size_t parameter_count() const;

  bool frozen() const { return frozen_; }
  void freeze();
  // Flags every parameter trainable; used for pretraining and full fine-tuning.
  void unfreeze();

  /// Deep copy with storage independent of this model.
  FrozenModel clone() const;

  const Tensor& token_embedding() const { return token_emb_; }
  const Tensor& position_embedding() const { return pos_emb_; }
  const std::vector<Block>& blocks() const { return blocks_; }
  const Tensor& final_gamma() const { return final_gamma_; }
  const Tensor& final_beta() const { return final_beta_; }

 private:
  FrozenModel(ModelConfig config, ParamMap params);
  void bind();

  ModelConfig config_;
  ParamMap params_;
  bool frozen_ = false;
  Tensor token_emb_, pos_emb_, final_gamma_, final_beta_;
  std::vector<Block> blocks_;
};

/// Per-layer key/value rows prepended to every attention block. An instance
/// with no layers, or with zero rows per layer, is the empty prefix.
struct KvPrefix {
  struct Layer {
    Tensor keys;    // [l, d_model]
    Tensor values;  // [l, d_model]
  };
  std::vector<Layer> layers;

  std::size_t length() const { return layers.empty() ? 0 : layers.front().keys.dim(0); }
  bool empty() const { return length() == 0; }

  static KvPrefix zero_length(const ModelConfig& config);
};

/// Additive low-rank deltas for the query and value projections of each
/// block. Undefined entries leave the frozen weight untouched.
struct ProjectionDeltas {
  std::vector<std::optional<Tensor>> query;
  std::vector<std::optional<Tensor>> value;
};

struct ForwardOptions {
  bool capture_attention = false;
  const ProjectionDeltas* deltas = nullptr;
};

struct ForwardResult {
  Tensor hidden;                    // [n, d_model] after the final layer norm
  std::optional<Tensor> attention;  // [m, heads, n, l + n], row-normalized
};

/// Token embeddings only; positions are added inside forward().
Tensor embed(const FrozenModel& model, std::span<const int> ids);

ForwardResult forward(const FrozenModel& model, const Tensor& embeddings, const KvPrefix& prefix = {},
                      const ForwardOptions& options = {});

/// Inputs to each of the m blocks for the prompt run on its own, stacked as
/// [m, l, d]. Computed without recording, so nothing flows back into the model.
Tensor extract_layer_states(const FrozenModel& model, std::span<const int> prompt_ids);

/// Tied LM head: hidden · Eᵀ.
Tensor lm_logits(const FrozenModel& model, const Tensor& hidden);

/// Mean next-token cross-entropy over every position of every sequence.
double lm_loss(const FrozenModel& model, std::span<const TokenSequence> sequences);

struct PretrainOptions {
  std::size_t steps = 500;
  double lr = 1e-2;
  std::size_t batch_size = 8;
};

/// Next-token training on `corpus` from the seeded initialization. The
/// returned model is frozen. steps == 0 returns the initialization itself.
FrozenModel pretrain(const ModelConfig& config, std::span<const TokenSequence> corpus,
                     const PretrainOptions& options = {});

}  // namespace sktune
