#include "artstyle/submodel.hpp"

#include <unistd.h>

#include <atomic>
#include <cmath>
#include <cstdio>
#include <json.hpp>
#include <set>
#include <sstream>

#include "artstyle/image_io.hpp"

namespace artstyle {

ProbabilityVector ProbabilityVector::from_values(std::vector<double> values, double tolerance) {
  if (values.empty()) throw DataError("probability vector is empty");
  double sum = 0.0;
  for (double v : values) {
    if (!std::isfinite(v) || v < 0.0 || v > 1.0 + tolerance) {
      throw DataError("probability value out of range: " + format_double(v));
    }
    sum += v;
  }
  if (std::abs(sum - 1.0) > tolerance) {
    throw DataError("probabilities sum to " + format_double(sum) + ", expected 1");
  }
  for (double& v : values) v = std::min(1.0, v / sum);
  return ProbabilityVector(std::move(values));
}

PredictionCache::PredictionCache(std::size_t class_count,
                                 std::vector<std::pair<std::string, ProbabilityVector>> rows, std::string digest)
    : class_count_(class_count), rows_(std::move(rows)), digest_(std::move(digest)) {
  index_.reserve(rows_.size());
  for (std::size_t i = 0; i < rows_.size(); ++i) {
    if (rows_[i].second.size() != class_count_) {
      throw DataError("prediction cache: vector for '" + rows_[i].first + "' has wrong length");
    }
    if (!index_.emplace(rows_[i].first, i).second) {
      throw DataError("prediction cache: duplicate image_id '" + rows_[i].first + "'");
    }
  }
}

const ProbabilityVector* PredictionCache::find(std::string_view image_id) const {
  auto it = index_.find(std::string(image_id));
  return it == index_.end() ? nullptr : &rows_[it->second].second;
}

PredictionCache parse_prediction_cache(std::string_view text, std::size_t expected_class_count) {
  if (expected_class_count == 0) throw DataError("prediction cache: class count must be positive");
  std::vector<std::pair<std::string, ProbabilityVector>> rows;
  std::set<std::string> seen;
  std::size_t line_no = 0;
  std::size_t start = 0;
  bool header_seen = false;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    const std::string where = "prediction cache line " + std::to_string(line_no);
    auto fields = csv::split_line(line);
    if (!header_seen) {
      header_seen = true;
      if (fields.empty() || fields[0] != "image_id") throw DataError(where + ": expected header image_id,p_0,...");
      if (fields.size() != expected_class_count + 1) {
        throw DataError(where + ": header declares " + std::to_string(fields.size() - 1) + " classes, expected " +
                        std::to_string(expected_class_count));
      }
      continue;
    }
    if (fields.size() != expected_class_count + 1) {
      throw DataError(where + ": expected " + std::to_string(expected_class_count) + " probabilities, found " +
                      std::to_string(fields.size() - 1));
    }
    if (!seen.insert(fields[0]).second) throw DataError(where + ": duplicate image_id '" + fields[0] + "'");
    std::vector<double> values;
    values.reserve(expected_class_count);
    try {
      for (std::size_t i = 1; i < fields.size(); ++i) values.push_back(parse_double(fields[i]));
      rows.emplace_back(std::move(fields[0]), ProbabilityVector::from_values(std::move(values)));
    } catch (const DataError& e) {
      throw DataError(where + ": " + e.what());
    }
  }
  if (!header_seen) throw DataError("prediction cache: missing header");
  return PredictionCache(expected_class_count, std::move(rows), sha256_hex(text));
}

PredictionCache load_prediction_cache(const std::filesystem::path& path, std::size_t expected_class_count) {
  try {
    return parse_prediction_cache(read_file(path), expected_class_count);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::string serialize_prediction_cache(std::span<const std::pair<std::string, ProbabilityVector>> rows,
                                       std::size_t class_count) {
  std::string out = "image_id";
  for (std::size_t i = 0; i < class_count; ++i) out += ",p_" + std::to_string(i);
  out += '\n';
  for (const auto& [id, vec] : rows) {
    if (vec.size() != class_count) throw DataError("prediction cache: vector for '" + id + "' has wrong length");
    out += csv::quote(id);
    for (double v : vec.values()) {
      out += ',';
      out += format_double(v);
    }
    out += '\n';
  }
  return out;
}

SubModelDescriptor synthetic_expert(std::string id, const SyntheticConfig& config, std::size_t class_count,
                                    InputSpec input_spec) {
  if (class_count == 0) throw DataError("synthetic expert: class count must be positive");
  if (!(config.weak_accuracy >= 0.0 && config.weak_accuracy <= config.strong_accuracy &&
        config.strong_accuracy <= 1.0)) {
    throw DataError("synthetic expert: need 0 <= weak_accuracy <= strong_accuracy <= 1");
  }
  if (config.strong_classes.empty() && config.strong_accuracy != config.weak_accuracy) {
    throw DataError("synthetic expert: empty strong class set with strong_accuracy != weak_accuracy");
  }
  if (!(config.smoothing >= 0.0 && config.smoothing < 1.0)) {
    throw DataError("synthetic expert: smoothing must be in [0, 1)");
  }
  std::set<int> unique;
  for (int c : config.strong_classes) {
    if (c < 0 || static_cast<std::size_t>(c) >= class_count) {
      throw DataError("synthetic expert: strong class " + std::to_string(c) + " out of range");
    }
    if (!unique.insert(c).second) throw DataError("synthetic expert: duplicate strong class " + std::to_string(c));
  }
  input_spec.validate();
  return SubModelDescriptor{std::move(id), input_spec, config, class_count};
}

namespace {

InputSpec parse_input_spec(const nlohmann::json& j) {
  InputSpec spec;
  if (!j.is_object()) throw DataError("roster: input must be an object");
  spec.side = j.value("side", 224);
  spec.variant = parse_variant(j.value("variant", std::string("resize")));
  spec.validate();
  return spec;
}

}  // namespace

std::vector<SubModelDescriptor> parse_roster(std::string_view json_text, const std::filesystem::path& base_dir) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("roster: invalid JSON: ") + e.what());
  }
  if (!doc.is_array() || doc.empty()) throw DataError("roster: expected a non-empty JSON array");
  std::vector<SubModelDescriptor> roster;
  std::set<std::string> ids;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const auto& item = doc[i];
    const std::string where = "roster entry " + std::to_string(i);
    try {
      if (!item.is_object()) throw DataError("expected an object");
      const auto id = item.at("id").get<std::string>();
      if (id.empty()) throw DataError("empty id");
      if (!ids.insert(id).second) throw DataError("duplicate id '" + id + "'");
      const auto class_count = item.at("class_count").get<std::size_t>();
      if (class_count == 0) throw DataError("class_count must be positive");
      const InputSpec spec = item.contains("input") ? parse_input_spec(item["input"]) : InputSpec{};
      const auto& backend = item.at("backend");
      const auto kind = backend.at("kind").get<std::string>();
      if (kind == "cache") {
        std::filesystem::path path = backend.at("path").get<std::string>();
        if (path.is_relative()) path = base_dir / path;
        roster.push_back({id, spec, CacheBackend{path}, class_count});
      } else if (kind == "external") {
        const auto command = backend.at("command").get<std::string>();
        if (command.find("{input}") == std::string::npos) throw DataError("external command lacks {input}");
        roster.push_back({id, spec, ExternalBackend{command}, class_count});
      } else if (kind == "synthetic") {
        SyntheticConfig cfg;
        cfg.strong_classes = backend.value("strong_classes", std::vector<int>{});
        cfg.strong_accuracy = backend.at("strong_accuracy").get<double>();
        cfg.weak_accuracy = backend.at("weak_accuracy").get<double>();
        cfg.seed = backend.value("seed", std::uint64_t{0});
        cfg.smoothing = backend.value("smoothing", 0.0);
        roster.push_back(synthetic_expert(id, cfg, class_count, spec));
      } else {
        throw DataError("unknown backend kind '" + kind + "'");
      }
    } catch (const nlohmann::json::exception& e) {
      throw DataError(where + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError(where + ": " + e.what());
    }
  }
  return roster;
}

std::vector<SubModelDescriptor> load_roster(const std::filesystem::path& path) {
  try {
    return parse_roster(read_file(path), path.parent_path());
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::string serialize_roster(std::span<const SubModelDescriptor> roster) {
  auto doc = nlohmann::json::array();
  for (const auto& d : roster) {
    nlohmann::json backend;
    if (const auto* c = std::get_if<CacheBackend>(&d.backend)) {
      backend = {{"kind", "cache"}, {"path", c->path.generic_string()}};
    } else if (const auto* e = std::get_if<ExternalBackend>(&d.backend)) {
      backend = {{"kind", "external"}, {"command", e->command_template}};
    } else {
      const auto& s = std::get<SyntheticConfig>(d.backend);
      backend = {{"kind", "synthetic"},          {"strong_classes", s.strong_classes},
                 {"strong_accuracy", s.strong_accuracy}, {"weak_accuracy", s.weak_accuracy},
                 {"seed", s.seed},                {"smoothing", s.smoothing}};
    }
    doc.push_back({{"id", d.id},
                   {"input", {{"side", d.input_spec.side}, {"variant", variant_name(d.input_spec.variant)}}},
                   {"class_count", d.class_count},
                   {"backend", backend}});
  }
  return doc.dump(2) + "\n";
}

SubModel::SubModel(SubModelDescriptor descriptor) : descriptor_(std::move(descriptor)) {
  if (descriptor_.class_count == 0) throw DataError("sub-model '" + descriptor_.id + "': class count must be positive");
}

namespace {

class CachedSubModel final : public SubModel {
 public:
  CachedSubModel(SubModelDescriptor d, std::shared_ptr<const PredictionCache> cache)
      : SubModel(std::move(d)), cache_(std::move(cache)) {
    if (!cache_) throw DataError("sub-model '" + id() + "': null cache");
    if (cache_->class_count() != class_count()) {
      throw DataError("sub-model '" + id() + "': cache has " + std::to_string(cache_->class_count()) +
                      " classes, descriptor says " + std::to_string(class_count()));
    }
  }

  ProbabilityVector predict(std::string_view image_id, const RasterImage*) const override {
    const auto* v = cache_->find(image_id);
    if (!v) throw DataError("sub-model '" + id() + "': no cached prediction for image '" + std::string(image_id) + "'");
    return *v;
  }

  const std::shared_ptr<const PredictionCache>& cache() const { return cache_; }

 private:
  std::shared_ptr<const PredictionCache> cache_;
};

class SyntheticSubModel final : public SubModel {
 public:
  SyntheticSubModel(SubModelDescriptor d, const Manifest& manifest) : SubModel(std::move(d)) {
    if (manifest.class_count() != class_count()) {
      throw DataError("sub-model '" + id() + "': manifest has " + std::to_string(manifest.class_count()) +
                      " classes, descriptor says " + std::to_string(class_count()));
    }
    config_ = std::get<SyntheticConfig>(descriptor().backend);
    strong_.assign(class_count(), false);
    for (int c : config_.strong_classes) strong_[static_cast<std::size_t>(c)] = true;
    labels_.reserve(manifest.size());
    for (const auto& r : manifest.records()) labels_.emplace(r.image_id, r.label);
  }

  ProbabilityVector predict(std::string_view image_id, const RasterImage*) const override {
    auto it = labels_.find(std::string(image_id));
    if (it == labels_.end()) {
      throw DataError("sub-model '" + id() + "': image '" + std::string(image_id) + "' is not in the manifest");
    }
    const auto m = class_count();
    const auto label = static_cast<std::size_t>(it->second);
    Rng rng(derive_seed(config_.seed, fnv1a64(image_id)));
    const double acc = strong_[label] ? config_.strong_accuracy : config_.weak_accuracy;
    std::size_t emitted = label;
    if (m > 1 && !rng.bernoulli(acc)) emitted = (label + 1 + rng.uniform_index(m - 1)) % m;
    std::vector<double> values(m, m > 1 ? config_.smoothing / static_cast<double>(m - 1) : 0.0);
    values[emitted] = m > 1 ? 1.0 - config_.smoothing : 1.0;
    return ProbabilityVector::from_values(std::move(values));
  }

 private:
  SyntheticConfig config_;
  std::vector<bool> strong_;
  std::unordered_map<std::string, int> labels_;
};

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') out += "'\\''";
    else out.push_back(c);
  }
  out.push_back('\'');
  return out;
}

class TempFile {
 public:
  explicit TempFile(std::filesystem::path path) : path_(std::move(path)) {}
  ~TempFile() {
    std::error_code ec;
    std::filesystem::remove(path_, ec);
  }
  TempFile(const TempFile&) = delete;
  TempFile& operator=(const TempFile&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

class ExternalSubModel final : public SubModel {
 public:
  using SubModel::SubModel;

  bool needs_image() const override { return true; }

  ProbabilityVector predict(std::string_view image_id, const RasterImage* image) const override {
    if (!image) throw DataError("sub-model '" + id() + "': external backend needs the image for '" + std::string(image_id) + "'");
    static std::atomic<std::uint64_t> counter{0};
    const auto tag = std::to_string(::getpid()) + "-" + std::to_string(counter.fetch_add(1));
    TempFile input(std::filesystem::temp_directory_path() / ("artstyle-input-" + tag + ".png"));
    save_png(preprocess(*image, descriptor().input_spec, image_id), input.path());

    std::string command = std::get<ExternalBackend>(descriptor().backend).command_template;
    const std::string quoted = shell_quote(input.path().string());
    for (auto pos = command.find("{input}"); pos != std::string::npos; pos = command.find("{input}", pos + quoted.size())) {
      command.replace(pos, 7, quoted);
    }

    std::string output;
    FILE* pipe = ::popen(command.c_str(), "r");
    if (!pipe) throw RuntimeFailure("sub-model '" + id() + "': cannot start external command");
    char buf[4096];
    while (std::size_t n = std::fread(buf, 1, sizeof buf, pipe)) output.append(buf, n);
    const int status = ::pclose(pipe);
    if (status != 0) {
      throw RuntimeFailure("sub-model '" + id() + "': external command failed (status " + std::to_string(status) +
                           ") for image '" + std::string(image_id) + "'");
    }
    std::istringstream lines(output);
    std::string line;
    while (std::getline(lines, line) && line.find_first_not_of(" \t\r") == std::string::npos) {
    }
    std::istringstream tokens(line);
    std::vector<double> values;
    std::string tok;
    try {
      while (tokens >> tok) values.push_back(parse_double(tok));
      if (values.size() != class_count()) {
        throw DataError("expected " + std::to_string(class_count()) + " values, got " + std::to_string(values.size()));
      }
      return ProbabilityVector::from_values(std::move(values));
    } catch (const DataError& e) {
      throw DataError("sub-model '" + id() + "': malformed external output for image '" + std::string(image_id) +
                      "': " + e.what());
    }
  }
};

}  // namespace

std::unique_ptr<SubModel> make_cached_submodel(SubModelDescriptor descriptor,
                                               std::shared_ptr<const PredictionCache> cache) {
  return std::make_unique<CachedSubModel>(std::move(descriptor), std::move(cache));
}

std::unique_ptr<SubModel> open_submodel(const SubModelDescriptor& descriptor, const Manifest* manifest) {
  if (const auto* c = std::get_if<CacheBackend>(&descriptor.backend)) {
    auto cache = std::make_shared<const PredictionCache>(load_prediction_cache(c->path, descriptor.class_count));
    return make_cached_submodel(descriptor, std::move(cache));
  }
  if (std::holds_alternative<ExternalBackend>(descriptor.backend)) {
    return std::make_unique<ExternalSubModel>(descriptor);
  }
  if (!manifest) throw UsageError("sub-model '" + descriptor.id + "': synthetic backend needs a manifest");
  return std::make_unique<SyntheticSubModel>(descriptor, *manifest);
}

std::shared_ptr<const PredictionCache> cache_of(const SubModel& model) {
  if (const auto* c = dynamic_cast<const CachedSubModel*>(&model)) return c->cache();
  return nullptr;
}

}  // namespace artstyle
