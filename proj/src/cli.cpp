#include "sktune/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <map>
#include <ostream>
#include <random>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "sktune/checkpoint.hpp"
#include "sktune/error.hpp"
#include "sktune/metrics.hpp"
#include "sktune/ops.hpp"

#ifndef SKTUNE_DATA_DIR
#define SKTUNE_DATA_DIR "data"
#endif

namespace fs = std::filesystem;

namespace sktune::cli {

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct VerifyFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string printf_string(const char* fmt, auto... args) {
  const int n = std::snprintf(nullptr, 0, fmt, args...);
  std::string s(static_cast<std::size_t>(n), '\0');
  std::snprintf(s.data(), s.size() + 1, fmt, args...);
  return s;
}

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag) {
  if (flag) return *flag;
  const char* env = std::getenv("SKTUNE_SEED");
  if (env == nullptr || *env == '\0') return 0;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(env, &end, 10);
  if (*end != '\0') throw UsageError("SKTUNE_SEED must be a non-negative integer, got '" + std::string(env) + "'");
  return v;
}

FrozenModel load_model(const std::string& path) {
  if (path.empty()) return pretrain_reference(0, PretrainOptions{}.steps).model;
  fs::path p = path;
  if (fs::is_directory(p)) p /= "model.json";
  return model_from_checkpoint(load_checkpoint(p));
}

// Flags shared by every command that builds a method.
struct MethodFlags {
  std::string model;
  std::string method = "sk-prompt";
  std::string task = "seqcls";
  std::optional<std::string> prompt;
  std::size_t n_virtual = 20;
  std::size_t bottleneck = 4;
  std::size_t adapter_layers = 1;
  std::optional<std::uint64_t> seed;
  std::string out = ".";

  void attach(CLI::App* cmd) {
    cmd->add_option("--model", model, "model checkpoint (file or directory); pretrained in-process if absent");
    cmd->add_option("--method", method, "full|prompt|prefix|ptuning|lora|lora2|lora4|sk-prompt|sk-prefix");
    cmd->add_option("--task", task, "seqcls|tokcls|nli");
    cmd->add_option("--prompt", prompt, "prompt text for sk-prompt / sk-prefix");
    cmd->add_option("--n-virtual", n_virtual, "virtual tokens for prompt/prefix/ptuning");
    cmd->add_option("--bottleneck", bottleneck, "prompt adapter width");
    cmd->add_option("--adapter-layers", adapter_layers, "stacked prompt adapter blocks");
    cmd->add_option("--seed", seed, "seed (falls back to SKTUNE_SEED, then 0)");
    cmd->add_option("--out", out, "output directory");
  }
};

struct DataFlags {
  std::optional<std::string> path;
  std::optional<std::size_t> synthetic;

  void attach(CLI::App* cmd) {
    auto* d = cmd->add_option("--data", path, "JSONL dataset");
    auto* s = cmd->add_option("--synthetic", synthetic, "generate N synthetic examples (default 2000)");
    d->excludes(s);
  }

  DataSplits load(TaskKind task, const Vocab& vocab) const {
    if (path) return split(load_jsonl(*path, task, vocab), {}, kDataSeed);
    return synthetic_task(task, synthetic.value_or(2000), vocab);
  }
};

struct HyperFlags {
  std::optional<double> lr;
  std::optional<std::size_t> epochs;
  std::size_t batch = 16;
  double threshold = 0.2;

  void attach(CLI::App* cmd) {
    cmd->add_option("--lr", lr, "learning rate (default per task)");
    cmd->add_option("--epochs", epochs, "epochs (default 3 seqcls, 10 otherwise)");
    cmd->add_option("--batch", batch, "mini-batch size");
    cmd->add_option("--threshold", threshold, "loss threshold for the convergence step");
  }

  TrainHyper resolve(TaskKind task, std::uint64_t seed) const {
    TrainHyper hp;
    hp.lr = lr.value_or(default_lr(task));
    hp.epochs = epochs.value_or(default_epochs(task));
    hp.batch_size = batch;
    hp.loss_threshold = threshold;
    hp.seed = seed;
    return hp;
  }
};

MethodOptions method_options(const MethodFlags& f, TaskKind task, MethodKind kind, std::size_t rank,
                             const std::string& prompt, const Vocab& vocab, std::uint64_t seed) {
  MethodOptions o;
  o.task = task;
  o.num_classes = default_num_classes(task);
  if (uses_prompt_text(kind)) o.prompt_ids = vocab.encode(prompt);
  o.n_virtual = f.n_virtual;
  o.rank = rank;
  o.bottleneck = f.bottleneck;
  o.adapter_layers = f.adapter_layers;
  o.seed = seed;
  return o;
}

TaskKind parse_task(const std::string& name) {
  try {
    return task_from_string(name);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
}

MethodKind parse_method(const std::string& name, std::size_t& rank) {
  try {
    return method_from_string(name, &rank);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
}

std::string table_header() { return "method                   params   params%   accuracy     f1\n"; }

std::string table_row(const std::string& label, const ParamAccounting& p, const MetricsReport& m) {
  return printf_string("%-22s %9zu %8.4f%% %9.2f%% %6.2f%%\n", label.c_str(), p.count, p.percentage,
                       100.0 * m.accuracy, 100.0 * m.f1);
}

// ---------------------------------------------------------------------------

int cmd_pretrain(std::optional<std::uint64_t> seed_flag, std::size_t steps, const std::string& out_dir,
                 std::ostream& out) {
  const std::uint64_t seed = resolve_seed(seed_flag);
  PretrainResult r = pretrain_reference(seed, steps);
  fs::create_directories(out_dir);
  save_checkpoint(fs::path(out_dir) / "model.json", model_checkpoint(r.model));
  out << "held-out loss " << printf_string("%.6f", r.held_out_loss) << "\n";
  return kOk;
}

int cmd_train(const MethodFlags& mf, const DataFlags& df, const HyperFlags& hf, std::ostream& out) {
  const TaskKind task = parse_task(mf.task);
  std::size_t rank = 2;
  const MethodKind kind = parse_method(mf.method, rank);
  if (uses_prompt_text(kind) && !mf.prompt) throw UsageError("--prompt is required for " + mf.method);
  if (!uses_prompt_text(kind) && mf.prompt) throw UsageError("--prompt only applies to sk-prompt and sk-prefix");
  const std::uint64_t seed = resolve_seed(mf.seed);
  const Vocab vocab = synthetic_vocab();

  const DataSplits data = df.load(task, vocab);
  const FrozenModel model = load_model(mf.model);
  PeftMethod method =
      PeftMethod::create(kind, model, method_options(mf, task, kind, rank, mf.prompt.value_or(""), vocab, seed));
  TrainRun run = train(model, method, data.train, hf.resolve(task, seed), data.test);

  const fs::path dir = mf.out;
  fs::create_directories(dir);
  save_checkpoint(dir / "adapter.json", adapter_checkpoint(method));
  emit_run_csv(run, dir / "run.csv");
  out << table_header() << table_row(run.label, run.params, run.metrics);
  return kOk;
}

struct Variant {
  MethodKind kind;
  std::size_t rank = 2;
  std::size_t layers = 1;
  std::string prompt;
  std::string label;
  std::string tag;  // distinguishes ablation rows of one method
};

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::vector<std::string> read_prompt_file(const fs::path& path) {
  std::vector<std::string> prompts;
  std::istringstream in(read_text_file(path));
  for (std::string line; std::getline(in, line);)
    if (!tokenize(line).empty()) prompts.push_back(line);
  if (prompts.empty()) throw Error(ErrorKind::IoError, "no prompt texts in " + path.string());
  return prompts;
}

int cmd_compare(const MethodFlags& mf, const DataFlags& df, const HyperFlags& hf,
                const std::vector<std::string>& methods, const std::vector<std::uint64_t>& seeds,
                const std::vector<std::size_t>& depth, bool prompt_ablation, const std::string& prompt_file,
                std::ostream& out) {
  const TaskKind task = parse_task(mf.task);
  const Vocab vocab = synthetic_vocab();
  if (seeds.empty()) throw UsageError("--seeds needs at least one seed");
  const std::vector<std::string> prompts =
      prompt_ablation ? read_prompt_file(prompt_file) : std::vector<std::string>{mf.prompt.value_or(std::string(kDefaultPrompt))};

  std::vector<Variant> variants;
  for (const auto& name : methods) {
    Variant v;
    v.kind = parse_method(name, v.rank);
    v.label = method_label(v.kind, v.rank);
    v.layers = mf.adapter_layers;
    std::vector<std::size_t> layer_set{mf.adapter_layers};
    if (v.kind == MethodKind::SKPrompt && !depth.empty()) layer_set = depth;
    for (std::size_t k : layer_set) {
      for (std::size_t p = 0; p < (uses_prompt_text(v.kind) ? prompts.size() : 1); ++p) {
        Variant w = v;
        w.layers = k;
        if (uses_prompt_text(v.kind)) w.prompt = prompts[p];
        if (!depth.empty() && v.kind == MethodKind::SKPrompt) w.tag = "layers=" + std::to_string(k);
        if (prompt_ablation && uses_prompt_text(v.kind))
          w.tag += std::string(w.tag.empty() ? "" : ";") + "prompt=" + std::to_string(p + 1);
        variants.push_back(w);
      }
    }
  }

  const DataSplits data = df.load(task, vocab);
  const FrozenModel model = load_model(mf.model);

  std::string csv = "method,variant,seed,convergence_step,accuracy,f1,params,params_pct\n";
  nlohmann::ordered_json summary = nlohmann::ordered_json::array();
  out << table_header();
  for (const auto& v : variants) {
    std::vector<double> conv, acc, f1s;
    ParamAccounting params;
    for (std::uint64_t seed : seeds) {
      MethodFlags copy = mf;
      copy.adapter_layers = v.layers;
      PeftMethod method =
          PeftMethod::create(v.kind, model, method_options(copy, task, v.kind, v.rank, v.prompt, vocab, seed));
      TrainRun run = train(model, method, data.train, hf.resolve(task, seed), data.test);
      params = run.params;
      conv.push_back(run.convergence_step ? static_cast<double>(*run.convergence_step)
                                          : std::numeric_limits<double>::infinity());
      acc.push_back(run.metrics.accuracy);
      f1s.push_back(run.metrics.f1);
      csv += csv_field(v.label) + "," + csv_field(v.tag) + "," + std::to_string(seed) + "," +
             (run.convergence_step ? std::to_string(*run.convergence_step) : "") + "," +
             format_double(run.metrics.accuracy) + "," + format_double(run.metrics.f1) + "," +
             std::to_string(run.params.count) + "," + format_double(run.params.percentage) + "\n";
    }
    const double med_conv = median(conv);
    MetricsReport shown;
    shown.accuracy = median(acc);
    shown.f1 = median(f1s);
    out << table_row(v.label + (v.tag.empty() ? "" : " " + v.tag), params, shown);

    nlohmann::ordered_json row;
    row["method"] = v.label;
    row["variant"] = v.tag;
    if (!v.prompt.empty()) row["prompt"] = v.prompt;
    row["params"] = params.count;
    row["params_pct"] = params.percentage;
    row["seeds"] = seeds.size();
    row["converged"] = std::count_if(conv.begin(), conv.end(), [](double c) { return std::isfinite(c); });
    row["median_convergence_step"] = std::isfinite(med_conv) ? nlohmann::ordered_json(med_conv) : nullptr;
    row["median_accuracy"] = shown.accuracy;
    row["median_f1"] = shown.f1;
    summary.push_back(row);
  }

  const fs::path dir = mf.out;
  fs::create_directories(dir);
  write_text_file(dir / "compare.csv", csv);
  write_text_file(dir / "compare_summary.json", summary.dump(2) + "\n");
  return kOk;
}

int cmd_gradcheck(double eps, std::ostream& out, std::ostream& err) {
  if (eps < 1e-5 || eps > 1e-2)
    err << "warning: eps " << eps << " is outside [1e-5, 1e-2]; finite differences may be unreliable\n";
  std::vector<std::string> failed;
  for (const auto& r : gradcheck_all(eps)) {
    const bool ok = r.max_rel_error < 1e-4;
    out << printf_string("%-16s %.3e %s\n", r.name.c_str(), r.max_rel_error, ok ? "ok" : "FAIL");
    if (!ok) failed.push_back(r.name);
  }
  if (!failed.empty()) {
    std::string names;
    for (const auto& n : failed) names += (names.empty() ? "" : ", ") + n;
    throw VerifyFailure("gradient check failed: " + names);
  }
  return kOk;
}

int cmd_attn(const MethodFlags& mf, const std::string& input, std::optional<std::size_t> layer_flag, std::size_t head,
             const std::string& adapter, std::ostream& out) {
  if (!mf.prompt) throw UsageError("--prompt is required");
  const Vocab vocab = synthetic_vocab();
  const FrozenModel model = load_model(mf.model);
  const ModelConfig& c = model.config();
  const std::size_t layer = layer_flag.value_or(c.n_layers - 1);
  if (layer >= c.n_layers) throw UsageError("--layer must be below " + std::to_string(c.n_layers));
  if (head >= c.n_heads) throw UsageError("--head must be below " + std::to_string(c.n_heads));

  const auto prompt_words = tokenize(*mf.prompt);
  const auto input_words = tokenize(input);
  if (input_words.empty()) throw UsageError("--input is empty");
  PeftMethod method = adapter.empty()
                          ? PeftMethod::create(MethodKind::SKPrompt, model,
                                               method_options(mf, TaskKind::Sequence, MethodKind::SKPrompt, 2,
                                                              *mf.prompt, vocab, resolve_seed(mf.seed)))
                          : method_from_checkpoint(model, load_checkpoint(adapter));
  if (method.kind() != MethodKind::SKPrompt) throw UsageError("attention export needs an sk-prompt adapter");
  if (!adapter.empty() && method.options().prompt_ids != vocab.encode(prompt_words))
    throw UsageError("--prompt differs from the prompt the adapter was trained with");

  const Tensor attention = input_row_attention(model, method, vocab.encode(input_words));
  std::vector<std::string> columns = prompt_words;
  columns.insert(columns.end(), input_words.begin(), input_words.end());
  const fs::path dir = mf.out;
  fs::create_directories(dir);
  emit_attention_csv(attention, layer, head, input_words, columns, dir / "attn.csv");
  out << "wrote " << (dir / "attn.csv").string() << " (layer " << layer << ", head " << head << ")\n";
  return kOk;
}

int cmd_params(const MethodFlags& mf, std::ostream& out) {
  const TaskKind task = parse_task(mf.task);
  std::size_t rank = 2;
  const MethodKind kind = parse_method(mf.method, rank);
  const Vocab vocab = synthetic_vocab();
  // Counts do not depend on the weights, so an unpretrained model will do.
  const FrozenModel model = mf.model.empty() ? FrozenModel::initialize(ModelConfig{}) : load_model(mf.model);
  PeftMethod method = PeftMethod::create(
      kind, model,
      method_options(mf, task, kind, rank, mf.prompt.value_or(std::string(kDefaultPrompt)), vocab,
                     resolve_seed(mf.seed)));
  const ParamAccounting acc = trainable_params(method, model);
  out << "method " << method_label(kind, rank) << "\n";
  out << "count " << acc.count << "\n";
  out << printf_string("percentage %.3f%%\n", acc.percentage);
  for (const auto& b : acc.breakdown) out << "  " << b.name << " " << b.count << "\n";
  return kOk;
}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::IoError:
    case ErrorKind::MalformedLine:
    case ErrorKind::LengthMismatch:
    case ErrorKind::UnknownLabel:
      return kIoFailure;
    case ErrorKind::NonFinite:
      return kNumericAbort;
    default:
      return kUsage;
  }
}

}  // namespace

// ---------------------------------------------------------------------------

PretrainResult pretrain_reference(std::uint64_t seed, std::size_t steps) {
  ModelConfig config;
  config.seed = seed;
  const Vocab vocab = synthetic_vocab();
  const auto corpus = gen_pretrain_corpus(vocab, kCorpusSequences, kCorpusLength, seed);
  const std::size_t held = corpus.size() / 10;
  const std::span<const TokenSequence> all(corpus);
  PretrainOptions opts;
  opts.steps = steps;
  FrozenModel model = pretrain(config, all.first(all.size() - held), opts);
  const double loss = lm_loss(model, all.last(held));
  return {std::move(model), loss};
}

DataSplits synthetic_task(TaskKind task, std::size_t n, const Vocab& vocab) {
  return split(gen_synthetic(task, n, kDataSeed, vocab), {}, kDataSeed);
}

std::size_t default_epochs(TaskKind task) { return task == TaskKind::Sequence ? 3 : 10; }

Tensor input_row_attention(const FrozenModel& model, const PeftMethod& method, std::span<const int> input_ids) {
  if (method.kind() != MethodKind::SKPrompt) throw Error(ErrorKind::InvalidArgument, "expected an sk-prompt method");
  TapeScope none(nullptr);
  MethodOutput o = method_forward(model, method, input_ids, true);
  const Tensor& a = *o.attention;
  return slice(a, 2, o.prompt_rows, a.shape()[2] - o.prompt_rows);
}

std::vector<GradReport> gradcheck_all(double eps) {
  std::mt19937_64 rng(2024);
  auto rand = [&](Shape s, double scale = 1.0) { return random_normal(std::move(s), scale, rng); };
  std::vector<GradReport> report;

  using Fn = std::function<Tensor(const std::vector<Tensor>&)>;
  // Each output is contracted with fixed random weights so every element of
  // the Jacobian contributes to the checked scalar.
  auto check = [&](const std::string& name, std::vector<Tensor> inputs, const Fn& fn) {
    Tensor weights;
    {
      TapeScope none(nullptr);
      weights = rand(fn(inputs).shape());
    }
    double worst = 0.0;
    for (auto& x : inputs) {
      worst = std::max(worst, grad_check([&](const Tensor&) { return sum(mul(fn(inputs), weights)); }, x, eps));
    }
    report.push_back({name, worst});
  };

  check("matmul", {rand({3, 4}), rand({4, 2})}, [](auto& v) { return matmul(v[0], v[1]); });
  check("matmul_batched", {rand({2, 3, 4}), rand({4, 5})}, [](auto& v) { return matmul(v[0], v[1]); });
  check("transpose", {rand({2, 3, 4})}, [](auto& v) { return transpose(v[0]); });
  check("add", {rand({3, 4}), rand({3, 4})}, [](auto& v) { return add(v[0], v[1]); });
  check("add_bias", {rand({2, 3, 4}), rand({4})}, [](auto& v) { return add(v[0], v[1]); });
  check("sub", {rand({3, 4}), rand({4})}, [](auto& v) { return sub(v[0], v[1]); });
  check("mul", {rand({3, 4}), rand({3, 4})}, [](auto& v) { return mul(v[0], v[1]); });
  check("scale", {rand({3, 4})}, [](auto& v) { return scale(v[0], -0.7); });
  check("softmax", {rand({3, 5})}, [](auto& v) { return softmax(v[0]); });
  check("softmax_axis0", {rand({3, 5})}, [](auto& v) { return softmax(v[0], 0); });
  check("layer_norm", {rand({3, 6}), rand({6}), rand({6})},
        [](auto& v) { return layer_norm(v[0], v[1], v[2], 1e-5); });
  check("gelu", {rand({3, 4}, 2.0)}, [](auto& v) { return gelu(v[0]); });
  check("tanh", {rand({3, 4})}, [](auto& v) { return tanh(v[0]); });
  const std::vector<int> ids{3, 0, 3, 5};
  check("embedding", {rand({6, 4})}, [&](auto& v) { return embedding(v[0], ids); });
  check("concat", {rand({2, 3}), rand({4, 3})}, [](auto& v) { return concat(v[0], v[1], 0); });
  check("slice", {rand({3, 6})}, [](auto& v) { return slice(v[0], 1, 2, 3); });
  check("reshape", {rand({3, 4})}, [](auto& v) { return reshape(v[0], {2, 6}); });
  check("sum", {rand({3, 4})}, [](auto& v) { return sum(v[0]); });
  check("mean", {rand({3, 4})}, [](auto& v) { return mean(v[0]); });
  const std::vector<int> labels{2, 0, 1, 2};
  check("cross_entropy", {rand({4, 3})}, [&](auto& v) { return cross_entropy(v[0], labels); });

  ModelConfig c;
  c.vocab_size = 16;
  c.d_model = 8;
  c.n_layers = 2;
  c.n_heads = 2;
  c.d_ffn = 16;
  c.max_seq = 24;
  c.seed = 7;
  const FrozenModel model = FrozenModel::initialize(c);
  std::vector<Example> batch;
  for (int i = 0; i < 3; ++i) {
    Example ex;
    for (int t = 0; t < 3 + i; ++t) ex.tokens.push_back(static_cast<int>(3 + rng() % 13));
    ex.label = i % 2;
    batch.push_back(ex);
  }
  for (MethodKind kind : {MethodKind::SKPrompt, MethodKind::SKPrefix}) {
    MethodOptions o;
    o.prompt_ids = {4, 7, 3, 9};
    o.seed = 1;
    PeftMethod method = PeftMethod::create(kind, model, o);
    // Fresh adapters carry exact zeros; random values exercise every path.
    for (auto& [name, tensor] : method.params()) {
      Tensor t = tensor;
      for (double& v : t.mutable_data()) v = 0.3 * std::normal_distribution<double>()(rng);
    }
    double worst = 0.0;
    for (const auto& [name, tensor] : method.params())
      worst = std::max(worst, grad_check([&](const Tensor&) { return batch_loss(model, method, batch); }, tensor, eps));
    report.push_back({std::string(to_string(kind)) + " loss", worst});
  }
  return report;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Fine-tuning methods on a small frozen transformer", "sktune"};
  app.require_subcommand(1);

  auto* pretrain_cmd = app.add_subcommand("pretrain", "pretrain the reference model on the synthetic corpus");
  std::optional<std::uint64_t> pretrain_seed;
  std::size_t pretrain_steps = PretrainOptions{}.steps;
  std::string pretrain_out = ".";
  pretrain_cmd->add_option("--seed", pretrain_seed, "seed (falls back to SKTUNE_SEED, then 0)");
  pretrain_cmd->add_option("--steps", pretrain_steps, "optimizer steps");
  pretrain_cmd->add_option("--out", pretrain_out, "output directory");

  MethodFlags mf;
  DataFlags df;
  HyperFlags hf;
  auto* train_cmd = app.add_subcommand("train", "train one method and evaluate on the held-out split");
  mf.attach(train_cmd);
  df.attach(train_cmd);
  hf.attach(train_cmd);

  auto* compare_cmd = app.add_subcommand("compare", "train several methods over several seeds");
  std::vector<std::string> methods{"sk-prompt", "prompt", "prefix"};
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::vector<std::size_t> depth;
  bool prompt_ablation = false;
  std::string prompt_file = std::string(SKTUNE_DATA_DIR) + "/prompt_texts.txt";
  // compare takes a list for --adapter-layers, so it gets its own copy of the shared flags.
  MethodFlags cmf;
  DataFlags cdf;
  HyperFlags chf;
  compare_cmd->add_option("--model", cmf.model, "model checkpoint; pretrained in-process if absent");
  compare_cmd->add_option("--task", cmf.task, "seqcls|tokcls|nli");
  compare_cmd->add_option("--prompt", cmf.prompt, "prompt text for the SK methods");
  compare_cmd->add_option("--n-virtual", cmf.n_virtual, "virtual tokens");
  compare_cmd->add_option("--bottleneck", cmf.bottleneck, "prompt adapter width");
  compare_cmd->add_option("--out", cmf.out, "output directory");
  compare_cmd->add_option("--methods", methods, "comma-separated methods")->delimiter(',');
  compare_cmd->add_option("--seeds", seeds, "comma-separated seeds")->delimiter(',');
  compare_cmd->add_option("--adapter-layers", depth, "comma-separated prompt adapter depths")->delimiter(',');
  compare_cmd->add_flag("--prompt-ablation", prompt_ablation, "run the SK methods once per bundled prompt text");
  compare_cmd->add_option("--prompt-file", prompt_file, "prompt texts for --prompt-ablation, one per line");
  cdf.attach(compare_cmd);
  chf.attach(compare_cmd);

  auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference check of every primitive");
  double eps = 1e-3;
  grad_cmd->add_option("--eps", eps, "central-difference step");

  auto* attn_cmd = app.add_subcommand("attn", "export one layer/head of the sk-prompt attention map");
  MethodFlags amf;
  std::string input, adapter;
  std::optional<std::size_t> layer;
  std::size_t head = 0;
  attn_cmd->add_option("--model", amf.model, "model checkpoint; pretrained in-process if absent");
  attn_cmd->add_option("--prompt", amf.prompt, "prompt text")->required();
  attn_cmd->add_option("--input", input, "input text")->required();
  attn_cmd->add_option("--layer", layer, "layer (default last)");
  attn_cmd->add_option("--head", head, "head");
  attn_cmd->add_option("--adapter", adapter, "trained sk-prompt adapter checkpoint");
  attn_cmd->add_option("--seed", amf.seed, "seed for a fresh adapter");
  attn_cmd->add_option("--out", amf.out, "output directory");

  auto* params_cmd = app.add_subcommand("params", "count trainable parameters of a method");
  MethodFlags pmf;
  pmf.attach(params_cmd);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return kOk;
    }
    err << "error: " << e.what() << "\n";
    return kUsage;
  }

  try {
    if (*pretrain_cmd) return cmd_pretrain(pretrain_seed, pretrain_steps, pretrain_out, out);
    if (*train_cmd) return cmd_train(mf, df, hf, out);
    if (*compare_cmd)
      return cmd_compare(cmf, cdf, chf, methods, seeds, depth, prompt_ablation, prompt_file, out);
    if (*grad_cmd) return cmd_gradcheck(eps, out, err);
    if (*attn_cmd) return cmd_attn(amf, input, layer, head, adapter, out);
    if (*params_cmd) return cmd_params(pmf, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const VerifyFailure& e) {
    err << "error: " << e.what() << "\n";
    return kVerifyFailure;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kIoFailure;
  }
  return kUsage;
}

}  // namespace sktune::cli
