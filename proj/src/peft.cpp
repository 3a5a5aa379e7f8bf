#include "sktune/peft.hpp"

#include <cmath>
#include <random>

#include "sktune/error.hpp"
#include "sktune/ops.hpp"

namespace sktune {

std::string_view to_string(MethodKind kind) {
  switch (kind) {
    case MethodKind::FullFT: return "full";
    case MethodKind::PromptVirtual: return "prompt";
    case MethodKind::PrefixVirtual: return "prefix";
    case MethodKind::PTuning: return "ptuning";
    case MethodKind::LoRA: return "lora";
    case MethodKind::SKPrefix: return "sk-prefix";
    case MethodKind::SKPrompt: return "sk-prompt";
  }
  return "unknown";
}

MethodKind method_from_string(std::string_view name, std::size_t* rank) {
  static constexpr MethodKind kinds[] = {MethodKind::FullFT, MethodKind::PromptVirtual, MethodKind::PrefixVirtual,
                                         MethodKind::PTuning, MethodKind::LoRA,          MethodKind::SKPrefix,
                                         MethodKind::SKPrompt};
  for (MethodKind k : kinds)
    if (name == to_string(k)) return k;
  if (name == "lora2" || name == "lora4") {
    if (rank) *rank = name == "lora2" ? 2 : 4;
    return MethodKind::LoRA;
  }
  throw Error(ErrorKind::InvalidArgument, "unknown method '" + std::string(name) + "'");
}

bool uses_prompt_text(MethodKind kind) { return kind == MethodKind::SKPrefix || kind == MethodKind::SKPrompt; }

std::string method_label(MethodKind kind, std::size_t rank) {
  std::string label(to_string(kind));
  if (kind == MethodKind::LoRA) label += std::to_string(rank);
  return label;
}

namespace {

std::string layer_name(const char* group, std::size_t j, const char* leaf) {
  return std::string(group) + "." + std::to_string(j) + "." + leaf;
}

void require_kind(const PeftMethod& method, MethodKind kind) {
  if (method.kind() != kind) {
    throw Error(ErrorKind::InvalidArgument, "expected a " + std::string(to_string(kind)) + " method, got " +
                                                std::string(to_string(method.kind())));
  }
}

void require_input(std::span<const int> input_ids) {
  if (input_ids.empty()) throw Error(ErrorKind::SequenceEmpty, "input must contain at least one token");
}

// Reads the last real position, or every real position for the token task.
Tensor apply_head(const PeftMethod& method, const Tensor& hidden, std::size_t prompt_rows) {
  const std::size_t n = hidden.dim(0) - prompt_rows;
  Tensor rows = method.options().task == TaskKind::Token ? slice(hidden, 0, prompt_rows, n)
                                                         : slice(hidden, 0, hidden.dim(0) - 1, 1);
  return add(matmul(rows, method.param("head.w")), method.param("head.b"));
}

// x + gelu(x·W1 + b1)·W2 + b2, once per stacked block.
Tensor prompt_adapter(const PeftMethod& method, Tensor x) {
  for (std::size_t k = 0; k < method.options().adapter_layers; ++k) {
    Tensor h = gelu(add(matmul(x, method.param(layer_name("adapter", k, "w1"))),
                        method.param(layer_name("adapter", k, "b1"))));
    x = add(x, add(matmul(h, method.param(layer_name("adapter", k, "w2"))),
                   method.param(layer_name("adapter", k, "b2"))));
  }
  return x;
}

struct Sequenced {
  Tensor embeddings;
  std::size_t prompt_rows = 0;
};

Sequenced prepend(const Tensor& rows, const Tensor& input) {
  if (rows.dim(0) == 0) return {input, 0};
  return {concat(rows, input, 0), rows.dim(0)};
}

Tensor virtual_rows(const PeftMethod& method) {
  if (method.kind() == MethodKind::PromptVirtual) return method.param("virtual.emb");
  const Tensor& seeds = method.param("ptuning.seed");
  Tensor h = gelu(add(matmul(seeds, method.param("ptuning.w1")), method.param("ptuning.b1")));
  return add(matmul(h, method.param("ptuning.w2")), method.param("ptuning.b2"));
}

ProjectionDeltas lora_deltas(const PeftMethod& method, std::size_t layers) {
  const double alpha = static_cast<double>(method.options().rank);
  const double factor = alpha / static_cast<double>(method.options().rank);
  ProjectionDeltas deltas;
  for (std::size_t j = 0; j < layers; ++j) {
    deltas.query.push_back(
        scale(matmul(method.param(layer_name("lora", j, "q.a")), method.param(layer_name("lora", j, "q.b"))), factor));
    deltas.value.push_back(
        scale(matmul(method.param(layer_name("lora", j, "v.a")), method.param(layer_name("lora", j, "v.b"))), factor));
  }
  return deltas;
}

}  // namespace

// ---------------------------------------------------------------------------

PeftMethod PeftMethod::create(MethodKind kind, const FrozenModel& model, MethodOptions options) {
  const ModelConfig& cfg = model.config();
  const std::size_t d = cfg.d_model, m = cfg.n_layers, f = cfg.d_ffn;
  if (options.num_classes < 2) throw Error(ErrorKind::InvalidArgument, "a task head needs at least 2 classes");
  if (uses_prompt_text(kind) && options.prompt_ids.empty()) {
    throw Error(ErrorKind::IllegalPrefixLength, std::string(to_string(kind)) + " needs a non-empty prompt");
  }
  for (int id : options.prompt_ids)
    if (id < 0 || static_cast<std::size_t>(id) >= cfg.vocab_size) {
      throw Error(ErrorKind::TokenOutOfRange, "prompt token " + std::to_string(id));
    }
  if (kind == MethodKind::LoRA && (options.rank < 1 || options.rank > d)) {
    throw Error(ErrorKind::BadRank, "rank " + std::to_string(options.rank) + " outside [1," + std::to_string(d) + "]");
  }
  if (kind == MethodKind::SKPrompt && (options.bottleneck < 1 || options.adapter_layers < 1)) {
    throw Error(ErrorKind::InvalidArgument, "prompt adapter needs bottleneck >= 1 and at least one block");
  }

  PeftMethod method;
  method.kind_ = kind;
  method.options_ = std::move(options);
  const MethodOptions& o = method.options_;
  std::mt19937_64 rng(o.seed ^ 0xc2b2ae3d27d4eb4fULL);
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  ParamMap& p = method.params_;

  switch (kind) {
    case MethodKind::FullFT:
      method.tuned_ = std::make_shared<FrozenModel>(model.clone());
      method.tuned_->unfreeze();
      for (const auto& [name, tensor] : method.tuned_->params()) p.emplace("model." + name, tensor);
      break;
    case MethodKind::PromptVirtual:
      p["virtual.emb"] = random_normal({o.n_virtual, d}, 0.02, rng);
      break;
    case MethodKind::PTuning:
      p["ptuning.seed"] = random_normal({o.n_virtual, d}, 1.0, rng);
      p["ptuning.w1"] = random_normal({d, f}, inv_sqrt_d, rng);
      p["ptuning.b1"] = Tensor::zeros({f});
      p["ptuning.w2"] = random_normal({f, d}, 0.02, rng);
      p["ptuning.b2"] = Tensor::zeros({d});
      break;
    case MethodKind::PrefixVirtual:
      p["prefix.seed"] = random_normal({o.n_virtual, d}, 1.0, rng);
      p["prefix.w1"] = random_normal({d, f}, inv_sqrt_d, rng);
      p["prefix.b1"] = Tensor::zeros({f});
      p["prefix.w2"] = random_normal({f, 2 * m * d}, 0.02, rng);
      p["prefix.b2"] = Tensor::zeros({2 * m * d});
      break;
    case MethodKind::LoRA:
      for (std::size_t j = 0; j < m; ++j) {
        for (const char* which : {"q", "v"}) {
          p[layer_name("lora", j, (std::string(which) + ".a").c_str())] = random_normal({d, o.rank}, inv_sqrt_d, rng);
          p[layer_name("lora", j, (std::string(which) + ".b").c_str())] = Tensor::zeros({o.rank, d});
        }
      }
      break;
    case MethodKind::SKPrefix:
      for (std::size_t j = 0; j < m; ++j) {
        p[layer_name("adapter", j, "wk")] = random_normal({d, d}, 0.02, rng);
        p[layer_name("adapter", j, "bk")] = Tensor::zeros({d});
        p[layer_name("adapter", j, "wv")] = Tensor::zeros({d, d});
        p[layer_name("adapter", j, "bv")] = Tensor::zeros({d});
      }
      method.states_ = extract_layer_states(model, o.prompt_ids);
      method.states_source_ = model.token_embedding();
      break;
    case MethodKind::SKPrompt:
      for (std::size_t k = 0; k < o.adapter_layers; ++k) {
        p[layer_name("adapter", k, "w1")] = random_normal({d, o.bottleneck}, inv_sqrt_d, rng);
        p[layer_name("adapter", k, "b1")] = Tensor::zeros({o.bottleneck});
        p[layer_name("adapter", k, "w2")] = Tensor::zeros({o.bottleneck, d});
        p[layer_name("adapter", k, "b2")] = Tensor::zeros({d});
      }
      break;
  }
  p["head.w"] = random_normal({d, o.num_classes}, 0.02, rng);
  p["head.b"] = Tensor::zeros({o.num_classes});
  for (auto& [name, tensor] : p) tensor.set_requires_grad(true);
  return method;
}

const Tensor& PeftMethod::param(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw Error(ErrorKind::InvalidArgument, "method has no parameter '" + name + "'");
  return it->second;
}

std::vector<Tensor> PeftMethod::trainable() const {
  std::vector<Tensor> out;
  for (const auto& [name, tensor] : params_) out.push_back(tensor);
  return out;
}

const FrozenModel& PeftMethod::model_for(const FrozenModel& base) const { return tuned_ ? *tuned_ : base; }

void PeftMethod::load_params(const ParamMap& loaded) {
  if (loaded.size() != params_.size()) {
    throw Error(ErrorKind::ShapeMismatch, "adapter has " + std::to_string(loaded.size()) + " tensors, method expects " +
                                              std::to_string(params_.size()));
  }
  for (auto& [name, tensor] : params_) {
    auto it = loaded.find(name);
    if (it == loaded.end()) throw Error(ErrorKind::ShapeMismatch, "adapter lacks '" + name + "'");
    if (it->second.shape() != tensor.shape()) {
      throw Error(ErrorKind::ShapeMismatch, name + ": expected " + shape_string(tensor.shape()) + ", got " +
                                                shape_string(it->second.shape()));
    }
    std::copy(it->second.data().begin(), it->second.data().end(), tensor.mutable_data().begin());
  }
}

Tensor PeftMethod::prompt_states(const FrozenModel& model) const {
  if (states_ && states_source_->same_storage(model.token_embedding())) return *states_;
  return extract_layer_states(model, options_.prompt_ids);
}

// ---------------------------------------------------------------------------

KvPrefix sk_prefix_kv(const FrozenModel& model, const PeftMethod& method) {
  require_kind(method, MethodKind::SKPrefix);
  const Tensor states = method.prompt_states(model);
  const std::size_t l = states.dim(1), d = states.dim(2);
  KvPrefix prefix;
  for (std::size_t j = 0; j < model.config().n_layers; ++j) {
    Tensor h = reshape(slice(states, 0, j, 1), {l, d});
    prefix.layers.push_back({add(matmul(h, method.param(layer_name("adapter", j, "wk"))),
                                 method.param(layer_name("adapter", j, "bk"))),
                             add(matmul(h, method.param(layer_name("adapter", j, "wv"))),
                                 method.param(layer_name("adapter", j, "bv")))});
  }
  return prefix;
}

KvPrefix virtual_prefix_kv(const FrozenModel& model, const PeftMethod& method) {
  require_kind(method, MethodKind::PrefixVirtual);
  const std::size_t d = model.config().d_model;
  Tensor h = tanh(add(matmul(method.param("prefix.seed"), method.param("prefix.w1")), method.param("prefix.b1")));
  Tensor kv = add(matmul(h, method.param("prefix.w2")), method.param("prefix.b2"));
  KvPrefix prefix;
  for (std::size_t j = 0; j < model.config().n_layers; ++j)
    prefix.layers.push_back({slice(kv, 1, 2 * j * d, d), slice(kv, 1, (2 * j + 1) * d, d)});
  return prefix;
}

MethodOutput method_forward(const FrozenModel& base, const PeftMethod& method, std::span<const int> input_ids,
                            bool capture_attention) {
  require_input(input_ids);
  const FrozenModel& model = method.model_for(base);
  ForwardOptions fo;
  fo.capture_attention = capture_attention;
  Sequenced seq{embed(model, input_ids), 0};
  KvPrefix prefix;
  ProjectionDeltas deltas;

  switch (method.kind()) {
    case MethodKind::FullFT:
      break;
    case MethodKind::SKPrompt:
      seq = prepend(prompt_adapter(method, embed(model, method.options().prompt_ids)), seq.embeddings);
      break;
    case MethodKind::PromptVirtual:
    case MethodKind::PTuning:
      seq = prepend(virtual_rows(method), seq.embeddings);
      break;
    case MethodKind::SKPrefix:
      prefix = sk_prefix_kv(model, method);
      break;
    case MethodKind::PrefixVirtual:
      prefix = virtual_prefix_kv(model, method);
      break;
    case MethodKind::LoRA:
      deltas = lora_deltas(method, model.config().n_layers);
      fo.deltas = &deltas;
      break;
  }

  ForwardResult r = forward(model, seq.embeddings, prefix, fo);
  MethodOutput out;
  out.logits = apply_head(method, r.hidden, seq.prompt_rows);
  out.attention = std::move(r.attention);
  out.prompt_rows = seq.prompt_rows;
  return out;
}

Tensor sk_prompt_forward(const FrozenModel& model, const PeftMethod& method, std::span<const int> input_ids) {
  require_kind(method, MethodKind::SKPrompt);
  return method_forward(model, method, input_ids).logits;
}

Tensor sk_prefix_forward(const FrozenModel& model, const PeftMethod& method, std::span<const int> input_ids) {
  require_kind(method, MethodKind::SKPrefix);
  return method_forward(model, method, input_ids).logits;
}

Tensor virtual_prompt_forward(const FrozenModel& model, const PeftMethod& method, std::span<const int> input_ids) {
  require_kind(method, MethodKind::PromptVirtual);
  return method_forward(model, method, input_ids).logits;
}

Tensor virtual_prefix_forward(const FrozenModel& model, const PeftMethod& method, std::span<const int> input_ids) {
  require_kind(method, MethodKind::PrefixVirtual);
  return method_forward(model, method, input_ids).logits;
}

Tensor p_tuning_forward(const FrozenModel& model, const PeftMethod& method, std::span<const int> input_ids) {
  require_kind(method, MethodKind::PTuning);
  return method_forward(model, method, input_ids).logits;
}

Tensor lora_forward(const FrozenModel& model, const PeftMethod& method, std::span<const int> input_ids) {
  require_kind(method, MethodKind::LoRA);
  return method_forward(model, method, input_ids).logits;
}

Tensor full_ft_forward(const FrozenModel& model, const PeftMethod& method, std::span<const int> input_ids) {
  require_kind(method, MethodKind::FullFT);
  return method_forward(model, method, input_ids).logits;
}

Tensor base_forward(const FrozenModel& model, const PeftMethod& method, std::span<const int> input_ids) {
  require_input(input_ids);
  return apply_head(method, forward(model, embed(model, input_ids)).hidden, 0);
}

// ---------------------------------------------------------------------------

ParamAccounting trainable_params(const PeftMethod& method, const FrozenModel& model) {
  ParamAccounting acc;
  for (const auto& [name, tensor] : method.params()) {
    if (!tensor.requires_grad()) continue;
    acc.breakdown.push_back({name, tensor.numel()});
    acc.count += tensor.numel();
  }
  if (method.kind() == MethodKind::FullFT) {
    acc.percentage = 100.0;
  } else {
    std::size_t owned = 0;
    for (const auto& [name, tensor] : method.params()) owned += tensor.numel();
    acc.percentage = 100.0 * static_cast<double>(acc.count) / static_cast<double>(model.parameter_count() + owned);
  }
  return acc;
}

Checkpoint adapter_checkpoint(const PeftMethod& method) {
  const MethodOptions& o = method.options();
  Checkpoint ck;
  ck.metadata["method"] = {{"kind", std::string(to_string(method.kind()))},
                           {"task", std::string(to_string(o.task))},
                           {"num_classes", o.num_classes},
                           {"prompt_ids", o.prompt_ids},
                           {"n_virtual", o.n_virtual},
                           {"rank", o.rank},
                           {"bottleneck", o.bottleneck},
                           {"adapter_layers", o.adapter_layers},
                           {"seed", o.seed}};
  ck.params = method.params();
  return ck;
}

PeftMethod method_from_checkpoint(const FrozenModel& model, const Checkpoint& checkpoint) {
  if (!checkpoint.metadata.contains("method")) {
    throw Error(ErrorKind::MalformedLine, "checkpoint has no method metadata");
  }
  const auto& j = checkpoint.metadata["method"];
  MethodOptions o;
  MethodKind kind;
  try {
    kind = method_from_string(j.at("kind").get<std::string>());
    o.task = task_from_string(j.at("task").get<std::string>());
    o.num_classes = j.at("num_classes").get<std::size_t>();
    o.prompt_ids = j.at("prompt_ids").get<std::vector<int>>();
    o.n_virtual = j.at("n_virtual").get<std::size_t>();
    o.rank = j.at("rank").get<std::size_t>();
    o.bottleneck = j.at("bottleneck").get<std::size_t>();
    o.adapter_layers = j.at("adapter_layers").get<std::size_t>();
    o.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::MalformedLine, std::string("method metadata: ") + e.what());
  }
  PeftMethod method = PeftMethod::create(kind, model, std::move(o));
  method.load_params(checkpoint.params);
  return method;
}

}  // namespace sktune
