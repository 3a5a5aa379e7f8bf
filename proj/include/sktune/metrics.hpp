#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sktune/tensor.hpp"

namespace sktune {

enum class F1Averaging { BinaryPositive, Macro };

std::string_view to_string(F1Averaging averaging);

struct MetricsReport {
  double accuracy = 0.0;
  double f1 = 0.0;
  F1Averaging averaging = F1Averaging::BinaryPositive;
  std::optional<double> mcc;                        // binary tasks only
  std::vector<std::vector<std::size_t>> confusion;  // [label][prediction]
  std::size_t n = 0;

  bool operator==(const MetricsReport&) const = default;
};

double accuracy(std::span<const int> preds, std::span<const int> labels);
/// Class F1 is 0 when precision + recall is 0. BinaryPositive scores class 1.
/// Macro averages over classes 0..max(preds, labels); make_report takes the
/// class count explicitly.
double f1(std::span<const int> preds, std::span<const int> labels, F1Averaging averaging);
/// Binary Matthews correlation; 0 when any marginal is empty.
double mcc(std::span<const int> preds, std::span<const int> labels);

std::vector<std::vector<std::size_t>> confusion_matrix(std::span<const int> preds, std::span<const int> labels,
                                                       std::size_t num_classes);

/// Positive-class F1 and MCC for two classes, macro F1 otherwise.
MetricsReport make_report(std::span<const int> preds, std::span<const int> labels, std::size_t num_classes);

struct TrainRun;

/// Writes `step,loss` rows to `path` and summary.json next to it.
void emit_run_csv(const TrainRun& run, const std::filesystem::path& path);
std::string run_csv(std::span<const double> losses);
std::string summary_json(const TrainRun& run);

/// Labeled matrix of one layer/head of a [m, heads, rows, cols] attention map.
void emit_attention_csv(const Tensor& attention, std::size_t layer, std::size_t head,
                        std::span<const std::string> row_tokens, std::span<const std::string> col_tokens,
                        const std::filesystem::path& path);
std::string attention_csv(const Tensor& attention, std::size_t layer, std::size_t head,
                          std::span<const std::string> row_tokens, std::span<const std::string> col_tokens);

/// Minimal RFC 4180 quoting.
std::string csv_field(std::string_view text);

}  // namespace sktune
