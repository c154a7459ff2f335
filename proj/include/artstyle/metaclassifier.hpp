#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "artstyle/common.hpp"
#include "artstyle/submodel.hpp"

namespace artstyle {

/// Shape of the stacking meta-classifier: input_dim -> hidden (1 or 2 dense
/// rectifier layers, each followed by dropout) -> output_dim softmax.
struct LayerLayout {
  std::vector<std::size_t> hidden_widths{64};
  double dropout_rate = 0.5;
  std::size_t input_dim = 0;
  std::size_t output_dim = 0;

  /// input_dim = n_models * class_count, output_dim = class_count.
  static LayerLayout for_stack(std::size_t n_models, std::size_t class_count,
                               std::vector<std::size_t> hidden_widths = {64}, double dropout_rate = 0.5);
  void validate() const;
  bool operator==(const LayerLayout&) const = default;
};

/// Row-major weights: weights[o * inputs + i].
struct DenseLayer {
  std::size_t inputs = 0;
  std::size_t outputs = 0;
  std::vector<double> weights;
  std::vector<double> biases;

  bool operator==(const DenseLayer&) const = default;
};

struct MetaClassifier {
  LayerLayout layout;
  std::vector<DenseLayer> layers;
  std::uint64_t seed = 0;

  std::size_t parameter_count() const;
  bool operator==(const MetaClassifier&) const = default;
};

/// Zero-mean normal weights with variance 2 / fan_in; zero biases.
MetaClassifier init_meta(const LayerLayout& layout, std::uint64_t seed);

/// Inference is deterministic and applies no dropout. With `training` set,
/// inverted dropout draws its masks from `rng`, which must then be non-null.
ProbabilityVector forward(const MetaClassifier& meta, std::span<const double> features, bool training = false,
                          Rng* rng = nullptr);

inline constexpr double kLogEpsilon = 1e-12;

/// -w[label] * ln(p[label] + 1e-12); weights default to one when empty.
double loss(std::span<const double> probs, std::size_t label, std::span<const double> class_weights = {});

/// Gradient of loss(forward(meta, features), label) with respect to every
/// parameter, laid out like meta.layers. Dropout masks are drawn from `rng`
/// when it is non-null, otherwise dropout is off.
std::vector<DenseLayer> loss_gradient(const MetaClassifier& meta, std::span<const double> features,
                                      std::size_t label, std::span<const double> class_weights = {},
                                      Rng* dropout_rng = nullptr, double* loss_out = nullptr);

/// Max over parameters of |analytic - numeric| / max(|analytic|, |numeric|, 1e-8),
/// numeric by central differences with step `epsilon` in [1e-7, 1e-3].
double gradient_check(const MetaClassifier& meta, std::span<const double> features, std::size_t label,
                      double epsilon, std::span<const double> class_weights = {});

/// Row-major feature matrix with one label per row.
struct FeatureSet {
  std::size_t dim = 0;
  std::vector<double> values;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  std::span<const double> row(std::size_t i) const { return std::span<const double>(values).subspan(i * dim, dim); }
  void add(std::span<const double> features, int label);
};

struct TrainConfig {
  double learning_rate = 0.01;
  double momentum = 0.9;
  std::size_t batch_size = 64;
  std::size_t max_epochs = 200;
  std::size_t early_stop_patience = 10;
  std::vector<double> class_weights;  // empty: all ones
  std::uint64_t seed = 0;

  void validate(std::size_t class_count) const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double validation_accuracy = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;  // 1-based; 0 when no epoch ran
};

struct TrainResult {
  MetaClassifier model;
  TrainHistory history;
};

/// Mini-batch gradient descent with momentum on mean weighted cross-entropy.
/// Stops after max_epochs or when validation accuracy has not improved for
/// `early_stop_patience` epochs, and returns the best-validation parameters.
/// Throws RuntimeFailure when the loss or parameters become non-finite.
TrainResult train_meta(const MetaClassifier& meta, const FeatureSet& train, const FeatureSet& validation,
                       const TrainConfig& config);

double accuracy_of(const MetaClassifier& meta, const FeatureSet& data);

/// SHA-256 over layout dimensions and raw parameter bytes.
std::string parameter_digest(const MetaClassifier& meta);

/// JSON checkpoint with layout, seed, row-major parameters and digest.
std::string serialize_checkpoint(const MetaClassifier& meta);
MetaClassifier parse_checkpoint(std::string_view json_text);
MetaClassifier load_checkpoint(const std::filesystem::path& path);

/// CSV `epoch,train_loss,train_accuracy,val_accuracy`.
std::string serialize_history(const TrainHistory& history);

}  // namespace artstyle
