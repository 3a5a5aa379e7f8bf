#include "sktune/model.hpp"

#include <cmath>
#include <limits>
#include <random>

#include "sktune/error.hpp"
#include "sktune/ops.hpp"
#include "sktune/optim.hpp"

namespace sktune {

namespace {

std::string block_name(std::size_t layer, const char* leaf) {
  return "blocks." + std::to_string(layer) + "." + leaf;
}

}  // namespace

void ModelConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorKind::InvalidArgument, "model config: " + what); };
  if (vocab_size < 4) fail("vocab_size must be at least 4");
  if (d_model == 0 || n_layers == 0 || n_heads == 0 || d_ffn == 0 || max_seq == 0) fail("dimensions must be positive");
  if (d_model % n_heads != 0) fail("d_model must be divisible by n_heads");
  if (!(ln_eps > 0.0)) fail("ln_eps must be positive");
}

FrozenModel::FrozenModel(ModelConfig config, ParamMap params) : config_(config), params_(std::move(params)) { bind(); }

FrozenModel FrozenModel::initialize(const ModelConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  const std::size_t d = config.d_model, f = config.d_ffn;
  const double attn_std = 1.0 / std::sqrt(static_cast<double>(d));
  const double residual_scale = 1.0 / std::sqrt(2.0 * static_cast<double>(config.n_layers));

  ParamMap params;
  params["token_emb"] = random_normal({config.vocab_size, d}, 0.1, rng);
  params["pos_emb"] = random_normal({config.max_seq, d}, 0.1, rng);
  for (std::size_t j = 0; j < config.n_layers; ++j) {
    params[block_name(j, "wq")] = random_normal({d, d}, attn_std, rng);
    params[block_name(j, "wk")] = random_normal({d, d}, attn_std, rng);
    params[block_name(j, "wv")] = random_normal({d, d}, attn_std, rng);
    params[block_name(j, "wo")] = random_normal({d, d}, attn_std * residual_scale, rng);
    params[block_name(j, "ln1.gamma")] = Tensor::full({d}, 1.0);
    params[block_name(j, "ln1.beta")] = Tensor::zeros({d});
    params[block_name(j, "ln2.gamma")] = Tensor::full({d}, 1.0);
    params[block_name(j, "ln2.beta")] = Tensor::zeros({d});
    params[block_name(j, "ffn.w1")] = random_normal({d, f}, attn_std, rng);
    params[block_name(j, "ffn.b1")] = Tensor::zeros({f});
    params[block_name(j, "ffn.w2")] =
        random_normal({f, d}, residual_scale / std::sqrt(static_cast<double>(f)), rng);
    params[block_name(j, "ffn.b2")] = Tensor::zeros({d});
  }
  params["final_ln.gamma"] = Tensor::full({d}, 1.0);
  params["final_ln.beta"] = Tensor::zeros({d});
  return FrozenModel(config, std::move(params));
}

FrozenModel FrozenModel::from_params(const ModelConfig& config, ParamMap params) {
  config.validate();
  FrozenModel reference = initialize(config);
  if (params.size() != reference.params_.size()) {
    throw Error(ErrorKind::ShapeMismatch, "expected " + std::to_string(reference.params_.size()) +
                                              " model parameters, got " + std::to_string(params.size()));
  }
  for (const auto& [name, tensor] : reference.params_) {
    auto it = params.find(name);
    if (it == params.end()) throw Error(ErrorKind::ShapeMismatch, "missing model parameter " + name);
    if (it->second.shape() != tensor.shape()) {
      throw Error(ErrorKind::ShapeMismatch,
                  name + ": expected " + shape_string(tensor.shape()) + ", got " + shape_string(it->second.shape()));
    }
  }
  return FrozenModel(config, std::move(params));
}

void FrozenModel::bind() {
  token_emb_ = param("token_emb");
  pos_emb_ = param("pos_emb");
  final_gamma_ = param("final_ln.gamma");
  final_beta_ = param("final_ln.beta");
  blocks_.clear();
  for (std::size_t j = 0; j < config_.n_layers; ++j) {
    blocks_.push_back(Block{
        param(block_name(j, "wq")), param(block_name(j, "wk")), param(block_name(j, "wv")),
        param(block_name(j, "wo")), param(block_name(j, "ln1.gamma")), param(block_name(j, "ln1.beta")),
        param(block_name(j, "ln2.gamma")), param(block_name(j, "ln2.beta")), param(block_name(j, "ffn.w1")),
        param(block_name(j, "ffn.b1")), param(block_name(j, "ffn.w2")), param(block_name(j, "ffn.b2")),
    });
  }
}

const Tensor& FrozenModel::param(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw Error(ErrorKind::InvalidArgument, "no model parameter named " + name);
  return it->second;
}

std::size_t FrozenModel::parameter_count() const {
  std::size_t total = 0;
  for (const auto& [name, tensor] : params_) total += tensor.numel();
  return total;
}

void FrozenModel::freeze() {
  for (auto& [name, tensor] : params_) {
    tensor.set_requires_grad(false);
    tensor.clear_grad();
  }
  frozen_ = true;
}

void FrozenModel::unfreeze() {
  for (auto& [name, tensor] : params_) tensor.set_requires_grad(true);
  frozen_ = false;
}

FrozenModel FrozenModel::clone() const {
  ParamMap copy;
  for (const auto& [name, tensor] : params_) copy[name] = tensor.clone();
  FrozenModel out(config_, std::move(copy));
  if (frozen_) {
    out.freeze();
  } else {
    for (auto& [name, tensor] : out.params_) tensor.set_requires_grad(params_.at(name).requires_grad());
  }
  return out;
}

KvPrefix KvPrefix::zero_length(const ModelConfig& config) {
  KvPrefix prefix;
  for (std::size_t j = 0; j < config.n_layers; ++j) {
    prefix.layers.push_back({Tensor::zeros({0, config.d_model}), Tensor::zeros({0, config.d_model})});
  }
  return prefix;
}

Tensor embed(const FrozenModel& model, std::span<const int> ids) {
  return embedding(model.token_embedding(), ids);
}

namespace {

// Additive mask over [n, l + n]: prefix columns are always visible, real
// columns follow the causal rule.
Tensor attention_mask(std::size_t n, std::size_t l) {
  const double blocked = -std::numeric_limits<double>::infinity();
  std::vector<double> data(n * (l + n), 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t t = i + 1; t < n; ++t) data[i * (l + n) + l + t] = blocked;
  return Tensor(Shape{n, l + n}, std::move(data));
}

struct BlockTrace {
  std::vector<Tensor>* block_inputs = nullptr;  // filled when extracting layer states
  std::size_t stop_before = std::numeric_limits<std::size_t>::max();
};

ForwardResult run(const FrozenModel& model, const Tensor& embeddings, const KvPrefix& prefix,
                  const ForwardOptions& options, const BlockTrace& trace) {
  const ModelConfig& cfg = model.config();
  if (embeddings.rank() != 2 || embeddings.dim(1) != cfg.d_model) {
    throw Error(ErrorKind::ShapeMismatch, "forward expects [n," + std::to_string(cfg.d_model) + "] embeddings, got " +
                                              shape_string(embeddings.shape()));
  }
  const std::size_t n = embeddings.dim(0);
  if (n > cfg.max_seq) {
    throw Error(ErrorKind::SequenceTooLong,
                std::to_string(n) + " positions exceed max_seq " + std::to_string(cfg.max_seq));
  }
  if (!prefix.layers.empty() && prefix.layers.size() != cfg.n_layers) {
    throw Error(ErrorKind::PrefixLayerMismatch, "prefix has " + std::to_string(prefix.layers.size()) +
                                                    " layers, model has " + std::to_string(cfg.n_layers));
  }
  const std::size_t l = prefix.length();
  for (const auto& layer : prefix.layers) {
    const Shape expected{l, cfg.d_model};
    if (layer.keys.shape() != expected || layer.values.shape() != expected) {
      throw Error(ErrorKind::ShapeMismatch, "every prefix layer must be " + shape_string(expected));
    }
  }

  const std::size_t heads = cfg.n_heads, dh = cfg.head_dim();
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
  const Tensor mask = attention_mask(n, l);

  std::optional<std::vector<double>> captured;
  if (options.capture_attention) captured.emplace(cfg.n_layers * heads * n * (l + n), 0.0);

  Tensor x = add(embeddings, slice(model.position_embedding(), 0, 0, n));
  const auto& blocks = model.blocks();
  for (std::size_t j = 0; j < blocks.size(); ++j) {
    if (trace.block_inputs) trace.block_inputs->push_back(x);
    if (j >= trace.stop_before) break;
    const auto& blk = blocks[j];

    Tensor wq = blk.wq, wv = blk.wv;
    if (options.deltas) {
      if (j < options.deltas->query.size() && options.deltas->query[j]) wq = add(wq, *options.deltas->query[j]);
      if (j < options.deltas->value.size() && options.deltas->value[j]) wv = add(wv, *options.deltas->value[j]);
    }

    Tensor a = layer_norm(x, blk.ln1_gamma, blk.ln1_beta, cfg.ln_eps);
    Tensor q = matmul(a, wq);
    Tensor k = matmul(a, blk.wk);
    Tensor v = matmul(a, wv);
    if (l > 0) {
      k = concat(prefix.layers[j].keys, k, 0);
      v = concat(prefix.layers[j].values, v, 0);
    }

    std::vector<Tensor> head_outputs;
    head_outputs.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
      Tensor qh = slice(q, 1, h * dh, dh);
      Tensor kh = slice(k, 1, h * dh, dh);
      Tensor vh = slice(v, 1, h * dh, dh);
      Tensor scores = add(scale(matmul(qh, transpose(kh)), inv_sqrt_dh), mask);
      Tensor probs = softmax(scores, 1);
      if (captured) {
        std::copy(probs.data().begin(), probs.data().end(), captured->begin() + (j * heads + h) * n * (l + n));
      }
      head_outputs.push_back(matmul(probs, vh));
    }
    Tensor attn = heads == 1 ? head_outputs.front() : concat(head_outputs, 1);
    x = add(x, matmul(attn, blk.wo));

    Tensor f = layer_norm(x, blk.ln2_gamma, blk.ln2_beta, cfg.ln_eps);
    Tensor ffn = add(matmul(gelu(add(matmul(f, blk.ffn_w1), blk.ffn_b1)), blk.ffn_w2), blk.ffn_b2);
    x = add(x, ffn);
  }

  ForwardResult result;
  if (trace.stop_before < blocks.size()) {
    result.hidden = x;
    return result;
  }
  result.hidden = layer_norm(x, model.final_gamma(), model.final_beta(), cfg.ln_eps);
  if (captured) result.attention = Tensor(Shape{cfg.n_layers, heads, n, l + n}, std::move(*captured));
  return result;
}

}  // namespace

ForwardResult forward(const FrozenModel& model, const Tensor& embeddings, const KvPrefix& prefix,
                      const ForwardOptions& options) {
  return run(model, embeddings, prefix, options, {});
}

Tensor extract_layer_states(const FrozenModel& model, std::span<const int> prompt_ids) {
  const ModelConfig& cfg = model.config();
  if (prompt_ids.empty()) throw Error(ErrorKind::IllegalPrefixLength, "prompt must contain at least one token");
  TapeScope no_record(nullptr);
  std::vector<Tensor> inputs;
  BlockTrace trace{&inputs, cfg.n_layers - 1};
  run(model, embed(model, prompt_ids), {}, {}, trace);

  const std::size_t l = prompt_ids.size(), d = cfg.d_model;
  std::vector<double> stacked;
  stacked.reserve(cfg.n_layers * l * d);
  for (const Tensor& t : inputs) stacked.insert(stacked.end(), t.data().begin(), t.data().end());
  return Tensor(Shape{cfg.n_layers, l, d}, std::move(stacked));
}

Tensor lm_logits(const FrozenModel& model, const Tensor& hidden) {
  return matmul(hidden, transpose(model.token_embedding()));
}

namespace {

// Logits for positions 0..n-2 against targets 1..n-1.
Tensor next_token_loss(const FrozenModel& model, std::span<const TokenSequence> batch) {
  std::vector<Tensor> rows;
  std::vector<int> targets;
  for (const auto& seq : batch) {
    if (seq.size() < 2) continue;
    const std::size_t n = std::min(seq.size(), model.config().max_seq);
    std::span<const int> ids(seq.data(), n);
    Tensor hidden = forward(model, embed(model, ids.first(n - 1))).hidden;
    rows.push_back(lm_logits(model, hidden));
    targets.insert(targets.end(), ids.begin() + 1, ids.end());
  }
  if (rows.empty()) throw Error(ErrorKind::Empty, "no sequence with at least two tokens");
  return cross_entropy(rows.size() == 1 ? rows.front() : concat(rows, 0), targets);
}

void check_tokens(const ModelConfig& config, std::span<const TokenSequence> corpus) {
  for (const auto& seq : corpus)
    for (int id : seq)
      if (id < 0 || static_cast<std::size_t>(id) >= config.vocab_size) {
        throw Error(ErrorKind::TokenOutOfRange, "corpus token " + std::to_string(id) + " outside vocab of " +
                                                    std::to_string(config.vocab_size));
      }
}

}  // namespace

double lm_loss(const FrozenModel& model, std::span<const TokenSequence> sequences) {
  check_tokens(model.config(), sequences);
  TapeScope no_record(nullptr);
  return next_token_loss(model, sequences).item();
}

FrozenModel pretrain(const ModelConfig& config, std::span<const TokenSequence> corpus,
                     const PretrainOptions& options) {
  check_tokens(config, corpus);
  FrozenModel model = FrozenModel::initialize(config);
  if (options.steps > 0 && corpus.empty()) throw Error(ErrorKind::Empty, "pretraining corpus is empty");
  model.unfreeze();

  std::vector<Tensor> params;
  for (const auto& [name, tensor] : model.params()) params.push_back(tensor);
  OptimState state(AdamWConfig{.lr = options.lr});
  std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<TokenSequence> batch(options.batch_size);

  for (std::size_t step = 0; step < options.steps; ++step) {
    for (auto& seq : batch) seq = corpus[rng() % corpus.size()];
    for (auto& p : params) p.clear_grad();
    Tape tape;
    TapeScope scope(&tape);
    Tensor loss = next_token_loss(model, batch);
    if (!std::isfinite(loss.item())) throw NonFiniteError(step, loss.item());
    backward(loss);
    adamw_step(params, state);
  }
  model.freeze();
  return model;
}

}  // namespace sktune
