#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace artstyle {

double accuracy(std::span<const std::size_t> predictions, std::span<const std::size_t> labels);

/// counts[t * M + p]: items of true class t predicted as p.
class ConfusionMatrix {
 public:
  ConfusionMatrix() = default;
  /// `class_names` may be empty; names then default to the class index.
  explicit ConfusionMatrix(std::size_t class_count, std::vector<std::string> class_names = {});

  std::size_t class_count() const { return class_count_; }
  const std::vector<std::string>& class_names() const { return names_; }
  std::uint64_t at(std::size_t truth, std::size_t predicted) const { return counts_[truth * class_count_ + predicted]; }
  void add(std::size_t truth, std::size_t predicted, std::uint64_t n = 1);
  /// Element-wise sum; both matrices must share the class count.
  ConfusionMatrix& operator+=(const ConfusionMatrix& other);

  std::uint64_t total() const;
  std::uint64_t trace() const;
  std::uint64_t row_sum(std::size_t truth) const;

  bool operator==(const ConfusionMatrix&) const = default;

 private:
  std::size_t class_count_ = 0;
  std::vector<std::string> names_;
  std::vector<std::uint64_t> counts_;
};

ConfusionMatrix confusion_matrix(std::span<const std::size_t> predictions, std::span<const std::size_t> labels,
                                 std::size_t class_count, std::vector<std::string> class_names = {});

/// diagonal / row sum; classes without items are nullopt, never 0.
std::vector<std::optional<double>> per_class_accuracy(const ConfusionMatrix& matrix);

struct ConfusedPair {
  std::size_t truth = 0;
  std::size_t predicted = 0;
  std::uint64_t count = 0;
  std::string truth_name;
  std::string predicted_name;

  bool operator==(const ConfusedPair&) const = default;
};

/// Non-zero off-diagonal cells by descending count, ties in (row, col) order.
std::vector<ConfusedPair> top_confused_pairs(const ConfusionMatrix& matrix, std::size_t k);

struct EvaluationReport {
  std::string model_id;
  std::string split;
  double overall_accuracy = 0.0;
  std::vector<std::optional<double>> per_class_accuracy;
  ConfusionMatrix confusion;
  std::vector<ConfusedPair> top_confused;

  bool operator==(const EvaluationReport&) const = default;
};

EvaluationReport make_report(std::string model_id, std::string split, const ConfusionMatrix& matrix,
                             std::size_t top_k = 10);

std::string report_to_json(const EvaluationReport& report);
EvaluationReport report_from_json(std::string_view json_text);
/// Aligned plain-text rendering.
std::string report_to_text(const EvaluationReport& report);
/// CSV with a header row of predicted class names and one row per true class.
std::string confusion_to_csv(const ConfusionMatrix& matrix);

}  // namespace artstyle
