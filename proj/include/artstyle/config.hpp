#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "artstyle/dataset.hpp"

namespace artstyle {

/// Scalar or single-line array value from a flat TOML document.
struct TomlValue {
  using Scalar = std::variant<std::string, std::int64_t, double, bool>;
  std::variant<Scalar, std::vector<Scalar>> value;
};

/// Flat TOML: [section] headers, `key = value` pairs, strings, integers,
/// floats, booleans and single-line arrays of scalars. Keys before the first
/// header land in section "".
class TomlDocument {
 public:
  static TomlDocument parse(std::string_view text);

  bool has(const std::string& section, const std::string& key) const;
  std::optional<std::string> get_string(const std::string& section, const std::string& key) const;
  std::optional<double> get_double(const std::string& section, const std::string& key) const;
  std::optional<std::int64_t> get_int(const std::string& section, const std::string& key) const;
  std::optional<std::vector<double>> get_double_list(const std::string& section, const std::string& key) const;
  std::optional<std::vector<std::int64_t>> get_int_list(const std::string& section, const std::string& key) const;

  const std::map<std::string, std::map<std::string, TomlValue>>& sections() const { return sections_; }

 private:
  const TomlValue* find(const std::string& section, const std::string& key) const;
  std::map<std::string, std::map<std::string, TomlValue>> sections_;
};

/// Experiment settings read from a TOML file; every field is optional so
/// command-line flags can fill or override it. Relative paths are resolved
/// against the config file's directory.
struct ExperimentConfig {
  std::optional<std::filesystem::path> manifest;
  std::optional<std::filesystem::path> rules;
  std::optional<SplitRatios> ratios;
  std::optional<std::uint64_t> split_seed;
  std::optional<std::filesystem::path> split_file;
  std::optional<std::filesystem::path> roster;
  std::optional<std::string> mode;
  std::optional<std::vector<std::size_t>> hidden_widths;
  std::optional<double> dropout;
  std::optional<std::filesystem::path> checkpoint;
  std::optional<double> learning_rate;
  std::optional<double> momentum;
  std::optional<std::size_t> batch_size;
  std::optional<std::size_t> max_epochs;
  std::optional<std::size_t> patience;
  std::optional<std::vector<double>> class_weights;
  std::optional<std::uint64_t> train_seed;
  std::optional<std::filesystem::path> output_dir;
};

/// Throws UsageError for unknown keys, wrong types, missing input files or
/// invalid split ratios.
ExperimentConfig parse_experiment_config(std::string_view text, const std::filesystem::path& base_dir);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

}  // namespace artstyle
