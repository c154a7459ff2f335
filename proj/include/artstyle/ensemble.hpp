#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "artstyle/metaclassifier.hpp"
#include "artstyle/submodel.hpp"

namespace artstyle {

enum class CombinationMode { Average, Maximum, Minimum };

std::string_view mode_name(CombinationMode mode);  // average | max | min
CombinationMode parse_mode(std::string_view name);

/// Per-class combination of several probability vectors. Only the Average
/// mode is guaranteed to sum to one; Max/Min are left unnormalized.
struct CombinedScores {
  std::vector<double> values;
  CombinationMode mode = CombinationMode::Average;
};

CombinedScores combine_simple(std::span<const ProbabilityVector> vectors, CombinationMode mode);

/// Argmax with ties going to the lowest index.
std::size_t classify(std::span<const double> scores);
inline std::size_t classify(const CombinedScores& scores) { return classify(scores.values); }
inline std::size_t classify(const ProbabilityVector& probs) { return classify(probs.values()); }

/// Model-major concatenation of N probability vectors of length M.
struct StackedFeature {
  std::vector<double> values;
  std::size_t n_models = 0;
  std::size_t class_count = 0;
};

StackedFeature stack_features(std::span<const ProbabilityVector> vectors);

struct EnsembleConfig {
  std::vector<std::shared_ptr<const SubModel>> roster;
  /// Simple combination mode, or a trained stacking meta-classifier.
  std::variant<CombinationMode, std::shared_ptr<const MetaClassifier>> strategy = CombinationMode::Average;

  void validate() const;
  std::size_t class_count() const;
};

struct EnsemblePrediction {
  std::size_t class_id = 0;
  /// Combined scores (simple) or the meta-classifier output (stacking).
  std::vector<double> scores;
  /// Sub-model outputs in roster order.
  std::vector<ProbabilityVector> member_outputs;
};

/// Collects every member's vector in roster order. Each member prepares its
/// own input from the raw image according to its InputSpec.
std::vector<ProbabilityVector> collect_outputs(std::span<const std::shared_ptr<const SubModel>> roster,
                                               std::string_view image_id, const RasterImage* image);

EnsemblePrediction ensemble_predict(const EnsembleConfig& config, std::string_view image_id,
                                    const RasterImage* image = nullptr);

}  // namespace artstyle
