#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

#include "artstyle/dataset.hpp"
#include "artstyle/imageproc.hpp"

namespace artstyle {

/// Non-negative class scores summing to one.
class ProbabilityVector {
 public:
  /// Input tolerance for the sum; stored values are renormalized.
  static constexpr double kInputTolerance = 1e-4;

  /// Throws DataError if a value is negative, non-finite or above one, or if
  /// the sum deviates from one by more than `tolerance`.
  static ProbabilityVector from_values(std::vector<double> values, double tolerance = kInputTolerance);

  std::span<const double> values() const { return values_; }
  std::size_t size() const { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }

  bool operator==(const ProbabilityVector&) const = default;

 private:
  explicit ProbabilityVector(std::vector<double> values) : values_(std::move(values)) {}
  std::vector<double> values_;
};

/// Frozen first-stage predictions: image_id -> probability vector.
class PredictionCache {
 public:
  PredictionCache(std::size_t class_count, std::vector<std::pair<std::string, ProbabilityVector>> rows,
                  std::string digest);

  std::size_t class_count() const { return class_count_; }
  std::size_t size() const { return rows_.size(); }
  /// SHA-256 of the file bytes the cache was read from.
  const std::string& digest() const { return digest_; }
  const std::vector<std::pair<std::string, ProbabilityVector>>& rows() const { return rows_; }
  const ProbabilityVector* find(std::string_view image_id) const;

 private:
  std::size_t class_count_;
  std::vector<std::pair<std::string, ProbabilityVector>> rows_;
  std::string digest_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// CSV `image_id,p_0,...,p_{M-1}`.
PredictionCache parse_prediction_cache(std::string_view text, std::size_t expected_class_count);
PredictionCache load_prediction_cache(const std::filesystem::path& path, std::size_t expected_class_count);
std::string serialize_prediction_cache(std::span<const std::pair<std::string, ProbabilityVector>> rows,
                                       std::size_t class_count);

struct CacheBackend {
  std::filesystem::path path;
};

/// Command template with an `{input}` placeholder for a preprocessed PNG;
/// the command prints one line of M space-separated probabilities.
struct ExternalBackend {
  std::string command_template;
};

/// Expert that is right with strong_accuracy on strong_classes and with
/// weak_accuracy elsewhere; wrong answers are uniform over the other classes.
struct SyntheticConfig {
  std::vector<int> strong_classes;
  double strong_accuracy = 1.0;
  double weak_accuracy = 1.0;
  std::uint64_t seed = 0;
  /// Mass moved off the emitted class and spread over the rest.
  double smoothing = 0.0;
};

using Backend = std::variant<CacheBackend, ExternalBackend, SyntheticConfig>;

struct SubModelDescriptor {
  std::string id;
  InputSpec input_spec;
  Backend backend;
  std::size_t class_count = 0;
};

/// Builds a validated synthetic-expert descriptor.
SubModelDescriptor synthetic_expert(std::string id, const SyntheticConfig& config, std::size_t class_count,
                                    InputSpec input_spec = {});

/// Roster file: JSON array of descriptors. Relative cache paths resolve
/// against `base_dir`.
std::vector<SubModelDescriptor> parse_roster(std::string_view json_text, const std::filesystem::path& base_dir);
std::vector<SubModelDescriptor> load_roster(const std::filesystem::path& path);
std::string serialize_roster(std::span<const SubModelDescriptor> roster);

class SubModel {
 public:
  explicit SubModel(SubModelDescriptor descriptor);
  virtual ~SubModel() = default;
  SubModel(const SubModel&) = delete;
  SubModel& operator=(const SubModel&) = delete;

  const SubModelDescriptor& descriptor() const { return descriptor_; }
  const std::string& id() const { return descriptor_.id; }
  std::size_t class_count() const { return descriptor_.class_count; }

  /// `image` may be null for backends that do not look at pixels.
  virtual ProbabilityVector predict(std::string_view image_id, const RasterImage* image) const = 0;
  virtual bool needs_image() const { return false; }

 private:
  SubModelDescriptor descriptor_;
};

/// Opens a descriptor. Cache backends load their file; synthetic backends
/// read true labels from `manifest`, which is then required.
std::unique_ptr<SubModel> open_submodel(const SubModelDescriptor& descriptor, const Manifest* manifest = nullptr);

/// Cache-backed model over an already loaded cache.
std::unique_ptr<SubModel> make_cached_submodel(SubModelDescriptor descriptor,
                                               std::shared_ptr<const PredictionCache> cache);

/// Exposes the backing cache of a cache-backed model, or null.
std::shared_ptr<const PredictionCache> cache_of(const SubModel& model);

}  // namespace artstyle
