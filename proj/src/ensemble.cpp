#include "artstyle/ensemble.hpp"

#include <algorithm>

namespace artstyle {

std::string_view mode_name(CombinationMode mode) {
  switch (mode) {
    case CombinationMode::Average: return "average";
    case CombinationMode::Maximum: return "max";
    case CombinationMode::Minimum: return "min";
  }
  return "?";
}

CombinationMode parse_mode(std::string_view name) {
  if (name == "average" || name == "avg") return CombinationMode::Average;
  if (name == "max" || name == "maximum") return CombinationMode::Maximum;
  if (name == "min" || name == "minimum") return CombinationMode::Minimum;
  throw UsageError("unknown combination mode '" + std::string(name) + "' (expected average, max or min)");
}

CombinedScores combine_simple(std::span<const ProbabilityVector> vectors, CombinationMode mode) {
  if (vectors.empty()) throw DataError("combine: no vectors");
  const std::size_t m = vectors.front().size();
  for (const auto& v : vectors) {
    if (v.size() != m) throw DataError("combine: vectors have different lengths");
  }
  CombinedScores out{std::vector<double>(vectors.front().values().begin(), vectors.front().values().end()), mode};
  for (std::size_t k = 1; k < vectors.size(); ++k) {
    const auto v = vectors[k].values();
    for (std::size_t i = 0; i < m; ++i) {
      switch (mode) {
        case CombinationMode::Average: out.values[i] += v[i]; break;
        case CombinationMode::Maximum: out.values[i] = std::max(out.values[i], v[i]); break;
        case CombinationMode::Minimum: out.values[i] = std::min(out.values[i], v[i]); break;
      }
    }
  }
  if (mode == CombinationMode::Average && vectors.size() > 1) {
    const double n = static_cast<double>(vectors.size());
    for (auto& x : out.values) x /= n;
  }
  return out;
}

std::size_t classify(std::span<const double> scores) {
  if (scores.empty()) throw DataError("classify: empty score vector");
  // max_element returns the first maximum
  return static_cast<std::size_t>(std::max_element(scores.begin(), scores.end()) - scores.begin());
}

StackedFeature stack_features(std::span<const ProbabilityVector> vectors) {
  if (vectors.empty()) throw DataError("stack: no vectors");
  StackedFeature f;
  f.n_models = vectors.size();
  f.class_count = vectors.front().size();
  f.values.reserve(f.n_models * f.class_count);
  for (const auto& v : vectors) {
    if (v.size() != f.class_count) throw DataError("stack: vectors have different lengths");
    f.values.insert(f.values.end(), v.values().begin(), v.values().end());
  }
  return f;
}

void EnsembleConfig::validate() const {
  if (roster.empty()) throw DataError("ensemble: empty roster");
  const std::size_t m = roster.front()->class_count();
  for (const auto& model : roster) {
    if (!model) throw DataError("ensemble: null roster entry");
    if (model->class_count() != m) {
      throw DataError("ensemble: sub-model '" + model->id() + "' has " + std::to_string(model->class_count()) +
                      " classes, expected " + std::to_string(m));
    }
  }
  if (const auto* meta = std::get_if<std::shared_ptr<const MetaClassifier>>(&strategy)) {
    if (!*meta) throw DataError("ensemble: null meta-classifier");
    if ((*meta)->layout.input_dim != roster.size() * m || (*meta)->layout.output_dim != m) {
      throw DataError("ensemble: meta-classifier expects " + std::to_string((*meta)->layout.input_dim) +
                      " inputs, roster provides " + std::to_string(roster.size() * m));
    }
  }
}

std::size_t EnsembleConfig::class_count() const { return roster.empty() ? 0 : roster.front()->class_count(); }

std::vector<ProbabilityVector> collect_outputs(std::span<const std::shared_ptr<const SubModel>> roster,
                                               std::string_view image_id, const RasterImage* image) {
  std::vector<ProbabilityVector> outputs;
  outputs.reserve(roster.size());
  for (const auto& model : roster) {
    try {
      auto v = model->predict(image_id, image);
      if (v.size() != model->class_count()) throw DataError("output length does not match class count");
      outputs.push_back(std::move(v));
    } catch (const DataError& e) {
      const std::string msg = e.what();
      if (msg.find(model->id()) != std::string::npos) throw;
      throw DataError("sub-model '" + model->id() + "': " + msg);
    }
  }
  return outputs;
}

EnsemblePrediction ensemble_predict(const EnsembleConfig& config, std::string_view image_id, const RasterImage* image) {
  config.validate();
  EnsemblePrediction out;
  out.member_outputs = collect_outputs(config.roster, image_id, image);
  if (const auto* mode = std::get_if<CombinationMode>(&config.strategy)) {
    auto combined = combine_simple(out.member_outputs, *mode);
    out.class_id = classify(combined);
    out.scores = std::move(combined.values);
  } else {
    const auto& meta = *std::get<std::shared_ptr<const MetaClassifier>>(config.strategy);
    const auto feature = stack_features(out.member_outputs);
    const auto probs = forward(meta, feature.values);
    out.class_id = classify(probs);
    out.scores.assign(probs.values().begin(), probs.values().end());
  }
  return out;
}

}  // namespace artstyle
