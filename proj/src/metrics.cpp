#include "sktune/metrics.hpp"

#include <cmath>

#include "json.hpp"
#include "sktune/checkpoint.hpp"
#include "sktune/error.hpp"
#include "sktune/train.hpp"

namespace sktune {

std::string_view to_string(F1Averaging averaging) {
  return averaging == F1Averaging::Macro ? "macro" : "binary_pos";
}

namespace {

void check_pair(std::span<const int> preds, std::span<const int> labels) {
  if (preds.size() != labels.size()) {
    throw Error(ErrorKind::LengthMismatch, std::to_string(preds.size()) + " predictions for " +
                                               std::to_string(labels.size()) + " labels");
  }
  if (preds.empty()) throw Error(ErrorKind::Empty, "no predictions to score");
}

std::size_t class_count(std::span<const int> preds, std::span<const int> labels) {
  int top = 1;
  for (std::span<const int> s : {preds, labels})
    for (int v : s) {
      if (v < 0) throw Error(ErrorKind::LabelOutOfRange, "negative class " + std::to_string(v));
      top = std::max(top, v);
    }
  return static_cast<std::size_t>(top) + 1;
}

double class_f1(const std::vector<std::vector<std::size_t>>& cm, std::size_t c) {
  std::size_t tp = cm[c][c], predicted = 0, actual = 0;
  for (std::size_t k = 0; k < cm.size(); ++k) {
    predicted += cm[k][c];
    actual += cm[c][k];
  }
  // 2PR/(P+R) = 2TP/(predicted+actual); zero when nothing is predicted or present.
  if (tp == 0) return 0.0;
  return 2.0 * static_cast<double>(tp) / static_cast<double>(predicted + actual);
}

}  // namespace

std::vector<std::vector<std::size_t>> confusion_matrix(std::span<const int> preds, std::span<const int> labels,
                                                       std::size_t num_classes) {
  check_pair(preds, labels);
  std::vector<std::vector<std::size_t>> cm(num_classes, std::vector<std::size_t>(num_classes, 0));
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] < 0 || labels[i] < 0 || static_cast<std::size_t>(preds[i]) >= num_classes ||
        static_cast<std::size_t>(labels[i]) >= num_classes) {
      throw Error(ErrorKind::LabelOutOfRange, "class outside [0," + std::to_string(num_classes) + ")");
    }
    ++cm[static_cast<std::size_t>(labels[i])][static_cast<std::size_t>(preds[i])];
  }
  return cm;
}

double accuracy(std::span<const int> preds, std::span<const int> labels) {
  check_pair(preds, labels);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) hits += preds[i] == labels[i];
  return static_cast<double>(hits) / static_cast<double>(preds.size());
}

double f1(std::span<const int> preds, std::span<const int> labels, F1Averaging averaging) {
  check_pair(preds, labels);
  const auto cm = confusion_matrix(preds, labels, class_count(preds, labels));
  if (averaging == F1Averaging::BinaryPositive) return class_f1(cm, 1);
  double total = 0.0;
  for (std::size_t c = 0; c < cm.size(); ++c) total += class_f1(cm, c);
  return total / static_cast<double>(cm.size());
}

double mcc(std::span<const int> preds, std::span<const int> labels) {
  check_pair(preds, labels);
  if (class_count(preds, labels) > 2) throw Error(ErrorKind::NonBinary, "MCC needs binary labels");
  const auto cm = confusion_matrix(preds, labels, 2);
  const double tn = static_cast<double>(cm[0][0]), fp = static_cast<double>(cm[0][1]);
  const double fn = static_cast<double>(cm[1][0]), tp = static_cast<double>(cm[1][1]);
  const double denom = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn);
  if (denom == 0.0) return 0.0;
  return (tp * tn - fp * fn) / std::sqrt(denom);
}

MetricsReport make_report(std::span<const int> preds, std::span<const int> labels, std::size_t num_classes) {
  MetricsReport r;
  r.confusion = confusion_matrix(preds, labels, num_classes);
  r.n = preds.size();
  std::size_t trace = 0;
  for (std::size_t c = 0; c < num_classes; ++c) trace += r.confusion[c][c];
  r.accuracy = static_cast<double>(trace) / static_cast<double>(r.n);
  if (num_classes == 2) {
    r.averaging = F1Averaging::BinaryPositive;
    r.f1 = class_f1(r.confusion, 1);
    r.mcc = mcc(preds, labels);
  } else {
    r.averaging = F1Averaging::Macro;
    double total = 0.0;
    for (std::size_t c = 0; c < num_classes; ++c) total += class_f1(r.confusion, c);
    r.f1 = total / static_cast<double>(num_classes);
  }
  return r;
}

// ---------------------------------------------------------------------------

std::string csv_field(std::string_view text) {
  if (text.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(text);
  std::string out = "\"";
  for (char c : text) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::string run_csv(std::span<const double> losses) {
  std::string out = "step,loss\n";
  for (std::size_t i = 0; i < losses.size(); ++i) out += std::to_string(i) + "," + format_double(losses[i]) + "\n";
  return out;
}

std::string summary_json(const TrainRun& run) {
  nlohmann::ordered_json j;
  j["method"] = run.label;
  j["params"] = run.params.count;
  j["params_pct"] = run.params.percentage;
  j["convergence_step"] = run.convergence_step ? nlohmann::ordered_json(*run.convergence_step) : nullptr;
  j["steps"] = run.losses.size();
  j["seed"] = run.seed;
  j["accuracy"] = run.metrics.accuracy;
  j["f1"] = run.metrics.f1;
  j["f1_averaging"] = std::string(to_string(run.metrics.averaging));
  j["mcc"] = run.metrics.mcc ? nlohmann::ordered_json(*run.metrics.mcc) : nullptr;
  j["n_eval"] = run.metrics.n;
  return j.dump(2) + "\n";
}

void emit_run_csv(const TrainRun& run, const std::filesystem::path& path) {
  write_text_file(path, run_csv(run.losses));
  write_text_file(path.parent_path() / "summary.json", summary_json(run));
}

std::string attention_csv(const Tensor& attention, std::size_t layer, std::size_t head,
                          std::span<const std::string> row_tokens, std::span<const std::string> col_tokens) {
  if (attention.rank() != 4) throw Error(ErrorKind::ShapeMismatch, "attention must be [m,heads,rows,cols]");
  if (layer >= attention.dim(0)) {
    throw Error(ErrorKind::IndexOutOfRange, "layer " + std::to_string(layer) + " of " + std::to_string(attention.dim(0)));
  }
  if (head >= attention.dim(1)) {
    throw Error(ErrorKind::IndexOutOfRange, "head " + std::to_string(head) + " of " + std::to_string(attention.dim(1)));
  }
  const std::size_t rows = attention.dim(2), cols = attention.dim(3);
  if (row_tokens.size() != rows || col_tokens.size() != cols) {
    throw Error(ErrorKind::IndexOutOfRange, "token labels (" + std::to_string(row_tokens.size()) + " rows, " +
                                                std::to_string(col_tokens.size()) + " cols) do not match attention " +
                                                shape_string(attention.shape()));
  }
  std::string out = "token";
  for (const auto& t : col_tokens) out += "," + csv_field(t);
  out += '\n';
  const auto data = attention.data().subspan((layer * attention.dim(1) + head) * rows * cols, rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    out += csv_field(row_tokens[r]);
    for (std::size_t c = 0; c < cols; ++c) out += "," + format_double(data[r * cols + c]);
    out += '\n';
  }
  return out;
}

void emit_attention_csv(const Tensor& attention, std::size_t layer, std::size_t head,
                        std::span<const std::string> row_tokens, std::span<const std::string> col_tokens,
                        const std::filesystem::path& path) {
  write_text_file(path, attention_csv(attention, layer, head, row_tokens, col_tokens));
}

}  // namespace sktune
