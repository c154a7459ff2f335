#include "artstyle/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <json.hpp>
#include <sstream>

#include "artstyle/common.hpp"

namespace artstyle {

double accuracy(std::span<const std::size_t> predictions, std::span<const std::size_t> labels) {
  if (predictions.size() != labels.size()) throw DataError("accuracy: prediction and label counts differ");
  if (labels.empty()) throw DataError("accuracy: no items");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += predictions[i] == labels[i];
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

ConfusionMatrix::ConfusionMatrix(std::size_t class_count, std::vector<std::string> class_names)
    : class_count_(class_count), names_(std::move(class_names)), counts_(class_count * class_count, 0) {
  if (class_count == 0) throw DataError("confusion matrix: class count must be positive");
  if (names_.empty()) {
    for (std::size_t i = 0; i < class_count; ++i) names_.push_back(std::to_string(i));
  }
  if (names_.size() != class_count) throw DataError("confusion matrix: class name count mismatch");
}

void ConfusionMatrix::add(std::size_t truth, std::size_t predicted, std::uint64_t n) {
  if (truth >= class_count_ || predicted >= class_count_) throw DataError("confusion matrix: class id out of range");
  counts_[truth * class_count_ + predicted] += n;
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
  if (other.class_count_ != class_count_) throw DataError("confusion matrix: class count mismatch");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
  return *this;
}

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t t = 0;
  for (auto c : counts_) t += c;
  return t;
}

std::uint64_t ConfusionMatrix::trace() const {
  std::uint64_t t = 0;
  for (std::size_t i = 0; i < class_count_; ++i) t += at(i, i);
  return t;
}

std::uint64_t ConfusionMatrix::row_sum(std::size_t truth) const {
  std::uint64_t t = 0;
  for (std::size_t p = 0; p < class_count_; ++p) t += at(truth, p);
  return t;
}

ConfusionMatrix confusion_matrix(std::span<const std::size_t> predictions, std::span<const std::size_t> labels,
                                 std::size_t class_count, std::vector<std::string> class_names) {
  if (predictions.size() != labels.size()) throw DataError("confusion matrix: prediction and label counts differ");
  ConfusionMatrix m(class_count, std::move(class_names));
  for (std::size_t i = 0; i < labels.size(); ++i) m.add(labels[i], predictions[i]);
  return m;
}

std::vector<std::optional<double>> per_class_accuracy(const ConfusionMatrix& matrix) {
  std::vector<std::optional<double>> out(matrix.class_count());
  for (std::size_t c = 0; c < matrix.class_count(); ++c) {
    const auto row = matrix.row_sum(c);
    if (row > 0) out[c] = static_cast<double>(matrix.at(c, c)) / static_cast<double>(row);
  }
  return out;
}

std::vector<ConfusedPair> top_confused_pairs(const ConfusionMatrix& matrix, std::size_t k) {
  if (k == 0) throw DataError("top confused pairs: k must be at least 1");
  std::vector<ConfusedPair> cells;
  const std::size_t m = matrix.class_count();
  for (std::size_t t = 0; t < m; ++t) {
    for (std::size_t p = 0; p < m; ++p) {
      if (t == p || matrix.at(t, p) == 0) continue;
      cells.push_back({t, p, matrix.at(t, p), matrix.class_names()[t], matrix.class_names()[p]});
    }
  }
  // cells are generated in (row, col) order, so a stable sort keeps that as the tie-break
  std::stable_sort(cells.begin(), cells.end(), [](const auto& a, const auto& b) { return a.count > b.count; });
  if (cells.size() > k) cells.resize(k);
  return cells;
}

EvaluationReport make_report(std::string model_id, std::string split, const ConfusionMatrix& matrix,
                             std::size_t top_k) {
  EvaluationReport r;
  r.model_id = std::move(model_id);
  r.split = std::move(split);
  const auto total = matrix.total();
  r.overall_accuracy = total == 0 ? 0.0 : static_cast<double>(matrix.trace()) / static_cast<double>(total);
  r.per_class_accuracy = per_class_accuracy(matrix);
  r.confusion = matrix;
  r.top_confused = top_confused_pairs(matrix, top_k);
  return r;
}

std::string report_to_json(const EvaluationReport& report) {
  const auto& cm = report.confusion;
  nlohmann::json per_class = nlohmann::json::array();
  for (std::size_t c = 0; c < report.per_class_accuracy.size(); ++c) {
    nlohmann::json entry = {{"class", cm.class_names()[c]}, {"count", cm.row_sum(c)}};
    entry["accuracy"] = report.per_class_accuracy[c] ? nlohmann::json(*report.per_class_accuracy[c]) : nlohmann::json();
    per_class.push_back(entry);
  }
  nlohmann::json counts = nlohmann::json::array();
  for (std::size_t t = 0; t < cm.class_count(); ++t) {
    nlohmann::json row = nlohmann::json::array();
    for (std::size_t p = 0; p < cm.class_count(); ++p) row.push_back(cm.at(t, p));
    counts.push_back(row);
  }
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& p : report.top_confused) {
    pairs.push_back({{"true", p.truth}, {"predicted", p.predicted}, {"count", p.count},
                     {"true_name", p.truth_name}, {"predicted_name", p.predicted_name}});
  }
  nlohmann::json doc = {{"model_id", report.model_id},
                        {"split", report.split},
                        {"overall_accuracy", report.overall_accuracy},
                        {"per_class", per_class},
                        {"confusion", {{"classes", cm.class_names()}, {"counts", counts}}},
                        {"top_confused", pairs}};
  return doc.dump(2) + "\n";
}

EvaluationReport report_from_json(std::string_view json_text) {
  try {
    const auto doc = nlohmann::json::parse(json_text);
    EvaluationReport r;
    r.model_id = doc.at("model_id").get<std::string>();
    r.split = doc.at("split").get<std::string>();
    r.overall_accuracy = doc.at("overall_accuracy").get<double>();
    const auto& conf = doc.at("confusion");
    const auto names = conf.at("classes").get<std::vector<std::string>>();
    ConfusionMatrix cm(names.size(), names);
    const auto& counts = conf.at("counts");
    if (counts.size() != names.size()) throw DataError("report: confusion row count mismatch");
    for (std::size_t t = 0; t < names.size(); ++t) {
      if (counts[t].size() != names.size()) throw DataError("report: confusion column count mismatch");
      for (std::size_t p = 0; p < names.size(); ++p) cm.add(t, p, counts[t][p].get<std::uint64_t>());
    }
    r.confusion = std::move(cm);
    for (const auto& entry : doc.at("per_class")) {
      const auto& acc = entry.at("accuracy");
      r.per_class_accuracy.push_back(acc.is_null() ? std::nullopt : std::optional<double>(acc.get<double>()));
    }
    for (const auto& p : doc.at("top_confused")) {
      r.top_confused.push_back({p.at("true").get<std::size_t>(), p.at("predicted").get<std::size_t>(),
                                p.at("count").get<std::uint64_t>(), p.at("true_name").get<std::string>(),
                                p.at("predicted_name").get<std::string>()});
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("report: ") + e.what());
  }
}

namespace {

std::string percent(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%6.2f%%", 100.0 * v);
  return buf;
}

std::string pad(std::string s, std::size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}

}  // namespace

std::string report_to_text(const EvaluationReport& report) {
  const auto& cm = report.confusion;
  std::size_t name_width = 5;
  for (const auto& n : cm.class_names()) name_width = std::max(name_width, n.size());
  std::ostringstream out;
  out << "model:    " << report.model_id << '\n'
      << "split:    " << report.split << '\n'
      << "items:    " << cm.total() << '\n'
      << "accuracy: " << percent(report.overall_accuracy) << "\n\n"
      << pad("class", name_width) << "  " << "  count" << "  accuracy\n";
  for (std::size_t c = 0; c < cm.class_count(); ++c) {
    char count[32];
    std::snprintf(count, sizeof count, "%7llu", static_cast<unsigned long long>(cm.row_sum(c)));
    out << pad(cm.class_names()[c], name_width) << "  " << count << "  "
        << (report.per_class_accuracy[c] ? percent(*report.per_class_accuracy[c]) : std::string("    n/a")) << '\n';
  }
  if (!report.top_confused.empty()) {
    out << "\nmost confused (true -> predicted):\n";
    for (const auto& p : report.top_confused) {
      out << "  " << pad(p.truth_name, name_width) << " -> " << pad(p.predicted_name, name_width) << "  " << p.count
          << '\n';
    }
  }
  return out.str();
}

std::string confusion_to_csv(const ConfusionMatrix& matrix) {
  std::string out = "true\\predicted";
  for (const auto& n : matrix.class_names()) out += ',' + csv::quote(n);
  out += '\n';
  for (std::size_t t = 0; t < matrix.class_count(); ++t) {
    out += csv::quote(matrix.class_names()[t]);
    for (std::size_t p = 0; p < matrix.class_count(); ++p) out += ',' + std::to_string(matrix.at(t, p));
    out += '\n';
  }
  return out;
}

}  // namespace artstyle
