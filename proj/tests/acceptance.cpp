// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "sktune/checkpoint.hpp"
#include "sktune/cli.hpp"
#include "sktune/metrics.hpp"
#include "sktune/ops.hpp"
#include "support.hpp"

using namespace sktune;
using namespace sktune::testing;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

const fs::path& work_dir() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / "sktune_acceptance";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

// The pretrained reference model, saved once so CLI runs can load it.
const FrozenModel& reference_model() {
  static const FrozenModel model = [] {
    FrozenModel m = cli::pretrain_reference(0, PretrainOptions{}.steps).model;
    save_checkpoint(work_dir() / "model.json", model_checkpoint(m));
    return m;
  }();
  return model;
}

int cli_run(std::vector<std::string> args, std::string* captured = nullptr) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  if (captured) *captured = out.str();
  return code;
}

std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
  // Plain split; the files read here never quote.
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(read_text_file(path));
  for (std::string line; std::getline(in, line);) {
    std::vector<std::string> row;
    std::stringstream ls(line);
    for (std::string cell; std::getline(ls, cell, ',');) row.push_back(cell);
    if (!line.empty() && line.back() == ',') row.emplace_back();
    rows.push_back(row);
  }
  return rows;
}

MethodOptions reference_options(MethodKind kind, std::size_t rank = 2) {
  MethodOptions o;
  o.rank = rank;
  if (uses_prompt_text(kind)) o.prompt_ids = synthetic_vocab().encode(kDefaultPrompt);
  return o;
}

// ---------------------------------------------------------------------------

Outcome gradient_correctness() {
  const auto t0 = std::chrono::steady_clock::now();
  std::string report;
  const int code = cli_run({"gradcheck"}, &report);
  const double elapsed = seconds_since(t0);
  std::map<std::string, int> seen;
  std::istringstream in(report);
  double worst = 0.0;
  for (std::string name, err, status; in >> name;) {
    if (name == "sk-prompt" || name == "sk-prefix") {
      std::string loss;
      in >> loss;
      name += " " + loss;
    }
    in >> err >> status;
    ++seen[name];
    worst = std::max(worst, std::stod(err));
  }
  bool once = seen.count("sk-prompt loss") && seen.count("sk-prefix loss");
  for (const auto& [name, n] : seen) once = once && n == 1;
  return {code == 0 && once && elapsed < 60.0,
          fmt("%zu checks, max rel error %.2e, %.2f s", seen.size(), worst, elapsed)};
}

Outcome frozen_theta() {
  const FrozenModel& model = reference_model();
  const std::string before = serialize_checkpoint(model_checkpoint(model));
  const Vocab vocab = synthetic_vocab();
  auto data = cli::synthetic_task(TaskKind::Sequence, 2000, vocab).train;
  data.resize(1400);
  TrainHyper hp;
  hp.batch_size = 7;  // 1400 / 7 = 200 steps
  hp.epochs = 1;
  bool ok = true;
  std::string bad;
  for (MethodKind kind : kAllMethods) {
    if (kind == MethodKind::FullFT) continue;
    PeftMethod method = PeftMethod::create(kind, model, reference_options(kind));
    TrainRun run = train(model, method, data, hp);
    std::set<std::string> declared, flagged;
    for (const auto& [name, t] : method.params()) declared.insert(name);
    for (const auto& [name, t] : method.params())
      if (t.requires_grad()) flagged.insert(name);
    for (const auto& [name, t] : model.params())
      if (t.requires_grad()) flagged.insert("model:" + name);
    const bool same = serialize_checkpoint(model_checkpoint(model)) == before;
    const bool good = run.losses.size() == 200 && same && flagged == declared &&
                      trainable_params(method, model).count ==
                          symbolic_count(kind, model.config(), reference_options(kind));
    if (!good) bad += std::string(" ") + std::string(to_string(kind));
    ok = ok && good;
  }
  return {ok, ok ? "6 methods x 200 steps, checkpoint byte-identical, enumeration = declared set"
                 : "violations:" + bad};
}

Outcome zero_shot_identity() {
  const FrozenModel& model = reference_model();
  std::mt19937_64 rng(301);
  double sk = 0.0, lora = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    MethodOptions o = reference_options(MethodKind::SKPrompt);
    o.prompt_ids = random_ids(1 + rng() % 12, 61, rng);
    for (int& id : o.prompt_ids) id += 3;
    o.seed = trial;
    const auto input = random_ids(1 + rng() % 12, 64, rng);
    PeftMethod method = PeftMethod::create(MethodKind::SKPrompt, model, o);
    std::vector<int> joined = o.prompt_ids;
    joined.insert(joined.end(), input.begin(), input.end());
    sk = std::max(sk, max_abs_diff(sk_prompt_forward(model, method, input), base_forward(model, method, joined)));

    MethodOptions lo = reference_options(MethodKind::LoRA, 1 + trial % 4);
    lo.seed = trial;
    PeftMethod l = PeftMethod::create(MethodKind::LoRA, model, lo);
    lora = std::max(lora, max_abs_diff(lora_forward(model, l, input), base_forward(model, l, input)));
  }
  return {sk <= 1e-9 && lora <= 1e-12, fmt("sk-prompt max diff %.2e, lora max diff %.2e over 100 pairs", sk, lora)};
}

Outcome empty_prefix_identity() {
  const FrozenModel& model = reference_model();
  std::mt19937_64 rng(401);
  int equal = 0;
  for (int trial = 0; trial < 100; ++trial) {
    Tensor e = embed(model, random_ids(1 + rng() % 32, 64, rng));
    equal += bitwise_equal(forward(model, e).hidden, forward(model, e, KvPrefix::zero_length(model.config())).hidden);
  }
  return {equal == 100, fmt("%d/100 bitwise equal", equal)};
}

Outcome parameter_accounting() {
  std::mt19937_64 rng(501);
  int mismatches = 0;
  for (int trial = 0; trial < 20; ++trial) {
    ModelConfig c;
    c.n_heads = 1 + rng() % 4;
    c.d_model = c.n_heads * (2 + rng() % 6);
    c.n_layers = 1 + rng() % 3;
    c.d_ffn = 4 + rng() % 40;
    c.vocab_size = 8 + rng() % 60;
    c.max_seq = 30 + rng() % 30;
    c.seed = trial;
    FrozenModel model = FrozenModel::initialize(c);
    MethodOptions o;
    o.prompt_ids = random_ids(1 + rng() % 8, c.vocab_size, rng);
    o.n_virtual = rng() % 24;
    o.rank = 1 + rng() % c.d_model;
    o.bottleneck = 1 + rng() % 8;
    o.adapter_layers = 1 + rng() % 4;
    o.num_classes = 2 + rng() % 3;
    for (MethodKind kind : kAllMethods)
      mismatches += trainable_params(PeftMethod::create(kind, model, o), model).count != symbolic_count(kind, c, o);
  }
  const FrozenModel model = FrozenModel::initialize(ModelConfig{});
  auto count = [&](MethodKind kind, std::size_t rank = 2) {
    return trainable_params(PeftMethod::create(kind, model, reference_options(kind, rank)), model).count;
  };
  const std::vector<std::pair<std::string, std::size_t>> chain{
      {"sk-prompt", count(MethodKind::SKPrompt)}, {"prompt", count(MethodKind::PromptVirtual)},
      {"sk-prefix", count(MethodKind::SKPrefix)}, {"lora2", count(MethodKind::LoRA, 2)},
      {"lora4", count(MethodKind::LoRA, 4)},      {"full", count(MethodKind::FullFT)}};
  bool ordered = chain[0].second == 358 && chain[1].second == 706 && chain[2].second == 4290;
  std::string text;
  for (std::size_t i = 0; i < chain.size(); ++i) {
    if (i > 0) {
      const bool lt = chain[i - 1].second < chain[i].second;
      ordered = ordered && lt;
      text += lt ? " < " : " !< ";
    }
    text += chain[i].first + "(" + std::to_string(chain[i].second) + ")";
  }
  return {mismatches == 0 && ordered, fmt("%d symbolic mismatches over 20 configs; ", mismatches) + text};
}

Outcome convergence_claim() {
  reference_model();
  const fs::path out = work_dir() / "criterion6";
  const int code = cli_run({"compare", "--model", (work_dir() / "model.json").string(), "--methods",
                            "sk-prompt,prompt,prefix", "--seeds", "1,2,3,4,5", "--synthetic", "2000", "--lr", "1e-3",
                            "--threshold", "0.2", "--epochs", "3", "--out", out.string()});
  if (code != 0) return {false, fmt("compare exited %d", code)};
  std::map<std::string, double> med;
  for (const auto& row : nlohmann::json::parse(read_text_file(out / "compare_summary.json")))
    med[row["method"]] = row["median_convergence_step"].is_null() ? INFINITY
                                                                  : row["median_convergence_step"].get<double>();
  const bool ok = med["sk-prompt"] <= med["prompt"] && med["sk-prompt"] <= med["prefix"];
  return {ok, fmt("median convergence step sk-prompt %.0f, prompt %.0f, prefix %.0f (5 seeds)", med["sk-prompt"],
                  med["prompt"], med["prefix"])};
}

Outcome learnability() {
  const FrozenModel& model = reference_model();
  const Vocab vocab = synthetic_vocab();
  const std::vector<std::string> methods{"full", "prompt", "prefix", "ptuning", "lora2", "lora4", "sk-prefix", "sk-prompt"};
  double worst = 1.0;
  std::string worst_at, failures;
  for (TaskKind task : {TaskKind::Sequence, TaskKind::Token, TaskKind::Entailment}) {
    const DataSplits data = cli::synthetic_task(task, 2000, vocab);
    for (const auto& name : methods) {
      std::size_t rank = 2;
      const MethodKind kind = method_from_string(name, &rank);
      MethodOptions o = reference_options(kind, rank);
      o.task = task;
      o.num_classes = default_num_classes(task);
      o.seed = 1;
      PeftMethod method = PeftMethod::create(kind, model, o);
      TrainHyper hp;
      hp.lr = 1e-3;
      hp.epochs = cli::default_epochs(task);
      hp.seed = 1;
      const double acc = train(model, method, data.train, hp, data.test).metrics.accuracy;
      if (acc < worst) worst = acc, worst_at = name + "/" + std::string(to_string(task));
      if (acc < 0.95) failures += fmt(" %s/%s=%.3f", name.c_str(), std::string(to_string(task)).c_str(), acc);
    }
  }
  return {failures.empty(), failures.empty() ? fmt("24 runs, min held-out accuracy %.4f (%s)", worst, worst_at.c_str())
                                             : "below 0.95:" + failures};
}

Outcome metric_oracles() {
  std::mt19937_64 rng(801);
  int mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int classes = trial % 2 == 0 ? 2 : 3 + static_cast<int>(rng() % 3);
    std::vector<int> p(1 + rng() % 60), y(p.size());
    for (auto& v : p) v = static_cast<int>(rng() % classes);
    for (auto& v : y) v = static_cast<int>(rng() % classes);
    // Counts straight from the pairs, one class at a time.
    auto counts = [&](int c) {
      long tp = 0, fp = 0, fn = 0, tn = 0;
      for (std::size_t i = 0; i < p.size(); ++i) {
        tp += p[i] == c && y[i] == c;
        fp += p[i] == c && y[i] != c;
        fn += p[i] != c && y[i] == c;
        tn += p[i] != c && y[i] != c;
      }
      return std::array<long, 4>{tp, fp, fn, tn};
    };
    auto class_f1 = [](const std::array<long, 4>& k) {
      return k[0] == 0 ? 0.0 : static_cast<double>(2 * k[0]) / static_cast<double>(2 * k[0] + k[1] + k[2]);
    };
    long hits = 0;
    for (std::size_t i = 0; i < p.size(); ++i) hits += p[i] == y[i];
    const double acc = static_cast<double>(hits) / static_cast<double>(p.size());
    MetricsReport r = make_report(p, y, classes);
    mismatches += r.accuracy != acc || accuracy(p, y) != acc;
    if (classes == 2) {
      const auto k = counts(1);
      const long num = k[0] * k[3] - k[1] * k[2];
      const long den = (k[0] + k[1]) * (k[0] + k[2]) * (k[3] + k[1]) * (k[3] + k[2]);
      const double m = den == 0 ? 0.0 : static_cast<double>(num) / std::sqrt(static_cast<double>(den));
      mismatches += r.f1 != class_f1(k) || f1(p, y, F1Averaging::BinaryPositive) != class_f1(k);
      mismatches += !r.mcc || *r.mcc != m || mcc(p, y) != m;
    } else {
      double total = 0.0;
      for (int c = 0; c < classes; ++c) total += class_f1(counts(c));
      mismatches += r.f1 != total / classes || r.mcc.has_value();
    }
  }
  int relabel = 0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<int> perm{0, 1, 2, 3, 4};
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<int> p(50), y(50), pp(50), yy(50);
    for (int i = 0; i < 50; ++i) {
      p[i] = static_cast<int>(rng() % 5), y[i] = static_cast<int>(rng() % 5);
      pp[i] = perm[p[i]], yy[i] = perm[y[i]];
    }
    relabel += std::abs(make_report(p, y, 5).f1 - make_report(pp, yy, 5).f1) > 1e-12;
  }
  return {mismatches == 0 && relabel == 0,
          fmt("%d oracle mismatches in 1000 cases, %d relabel violations in 100 bijections", mismatches, relabel)};
}

Outcome determinism() {
  reference_model();
  const std::string model = (work_dir() / "model.json").string();
  auto train_into = [&](const std::string& dir) {
    return cli_run({"train", "--model", model, "--method", "sk-prompt", "--prompt", std::string(kDefaultPrompt),
                    "--synthetic", "600", "--lr", "1e-3", "--seed", "4", "--out", (work_dir() / dir).string()});
  };
  auto compare_into = [&](const std::string& dir) {
    return cli_run({"compare", "--model", model, "--methods", "lora2,sk-prefix", "--seeds", "1,2", "--synthetic",
                    "400", "--lr", "1e-3", "--out", (work_dir() / dir).string()});
  };
  const int codes = train_into("det_a") + train_into("det_b") + compare_into("det_c") + compare_into("det_d");
  auto same = [&](const std::string& a, const std::string& b, const std::string& file) {
    return read_text_file(work_dir() / a / file) == read_text_file(work_dir() / b / file);
  };
  const bool ok = codes == 0 && same("det_a", "det_b", "run.csv") && same("det_a", "det_b", "summary.json") &&
                  same("det_a", "det_b", "adapter.json") && same("det_c", "det_d", "compare.csv") &&
                  same("det_c", "det_d", "compare_summary.json");
  return {ok, ok ? "reruns byte-identical: run.csv, summary.json, adapter.json, compare.csv, compare_summary.json"
                 : "rerun artifacts differ or a command failed"};
}

Outcome attention_export() {
  reference_model();
  const fs::path out = work_dir() / "attn";
  const std::string prompt = "classify the positive or negative sentiment of the text";
  const std::string input = "i love this movie";
  const int code = cli_run({"attn", "--model", (work_dir() / "model.json").string(), "--prompt", prompt, "--input",
                            input, "--out", out.string()});
  if (code != 0) return {false, fmt("attn exited %d", code)};
  const auto rows = read_csv(out / "attn.csv");
  const auto prompt_words = tokenize(prompt), input_words = tokenize(input);
  std::vector<std::string> header{"token"};
  header.insert(header.end(), prompt_words.begin(), prompt_words.end());
  header.insert(header.end(), input_words.begin(), input_words.end());
  bool ok = rows.size() == 1 + input_words.size() && rows[0] == header;
  double worst = 0.0;
  std::optional<double> cross;
  for (std::size_t r = 1; ok && r < rows.size(); ++r) {
    ok = rows[r].size() == header.size() && rows[r][0] == input_words[r - 1];
    double s = 0.0;
    for (std::size_t c = 1; ok && c < rows[r].size(); ++c) {
      const double v = std::stod(rows[r][c]);
      s += v;
      if (rows[r][0] == "love" && header[c] == "positive") cross = v;
    }
    worst = std::max(worst, std::abs(s - 1.0));
  }
  ok = ok && worst <= 1e-9 && cross && std::isfinite(*cross);
  return {ok, fmt("%zu x %zu matrix, max |row sum - 1| %.1e, love<-positive weight %.3e", rows.size() - 1,
                  header.size() - 1, worst, cross.value_or(NAN))};
}

Outcome depth_ablation() {
  reference_model();
  const fs::path out = work_dir() / "depth";
  const int code = cli_run({"compare", "--model", (work_dir() / "model.json").string(), "--methods", "sk-prompt",
                            "--adapter-layers", "1,3,5", "--seeds", "1", "--lr", "1e-3", "--out", out.string()});
  if (code != 0) return {false, fmt("compare exited %d", code)};
  const auto rows = read_csv(out / "compare.csv");
  std::vector<long> counts;
  std::string steps;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    counts.push_back(std::stol(rows[r][6]));
    steps += (steps.empty() ? "" : ", ") + rows[r][1] + ":" + (rows[r][3].empty() ? "none" : rows[r][3]);
  }
  const bool ok = counts.size() == 3 && counts[0] < counts[1] && counts[1] < counts[2] && rows[0][3] == "convergence_step";
  return {ok, fmt("counts %ld < %ld < %ld; convergence steps ", counts.size() > 0 ? counts[0] : 0L,
                  counts.size() > 1 ? counts[1] : 0L, counts.size() > 2 ? counts[2] : 0L) +
                  steps};
}

}  // namespace

int main() {
  const std::vector<std::function<Outcome()>> criteria{
      gradient_correctness, frozen_theta,  zero_shot_identity, empty_prefix_identity, parameter_accounting,
      convergence_claim,    learnability,  metric_oracles,     determinism,           attention_export,
      depth_ablation};
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i]();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("criterion %2zu %s  %s  [%.1f s]\n", i + 1, o.pass ? "PASS" : "FAIL", o.detail.c_str(),
                seconds_since(t0));
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria pass\n", criteria.size() - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
