#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace artstyle {

struct ClassLabel {
  int id = 0;
  std::string name;

  bool operator==(const ClassLabel&) const = default;
};

struct ArtworkRecord {
  std::string image_id;
  std::string image_ref;
  int label = 0;

  bool operator==(const ArtworkRecord&) const = default;
};

/// A validated catalog of single-label artwork records.
///
/// Class ids are dense (0..M-1) and equal to the position in the vocabulary.
/// Every class owns at least one record and image ids are unique.
class Manifest {
 public:
  /// Validates and takes ownership. Throws DataError on any violated invariant.
  Manifest(std::vector<ClassLabel> vocabulary, std::vector<ArtworkRecord> records);

  const std::vector<ClassLabel>& vocabulary() const { return vocabulary_; }
  const std::vector<ArtworkRecord>& records() const { return records_; }
  std::size_t class_count() const { return vocabulary_.size(); }
  std::size_t size() const { return records_.size(); }

  std::optional<int> class_id(std::string_view name) const;
  const ArtworkRecord* find(std::string_view image_id) const;
  std::vector<std::string> class_names() const;

  bool operator==(const Manifest& other) const {
    return vocabulary_ == other.vocabulary_ && records_ == other.records_;
  }

 private:
  std::vector<ClassLabel> vocabulary_;
  std::vector<ArtworkRecord> records_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Manifest CSV: an optional `# classes: A,B,...` directive fixing the
/// vocabulary, then the header `image_id,image_path,class_name`, then rows.
/// Without the directive the vocabulary is the order of first appearance.
Manifest parse_manifest(std::string_view text);
Manifest load_manifest(const std::filesystem::path& path);
std::string serialize_manifest(const Manifest& manifest);

enum class CurationKind { Merge, Exclude };

struct CurationRule {
  CurationKind kind = CurationKind::Merge;
  std::vector<std::string> sources;
  std::string target;  // Merge only
};

/// Rules file: JSON array of {"kind":"merge"|"exclude","sources":[...],"target":...}.
std::vector<CurationRule> parse_curation_rules(std::string_view json_text);
std::vector<CurationRule> load_curation_rules(const std::filesystem::path& path);

/// Applies rules in order. Surviving classes keep their original relative order.
Manifest curate(const Manifest& manifest, const std::vector<CurationRule>& rules);

enum class Split { Train = 0, Validation = 1, Test = 2 };

std::string_view split_name(Split split);  // "train" | "val" | "test"
Split parse_split(std::string_view name);

struct SplitRatios {
  double train = 0.8;
  double validation = 0.1;
  double test = 0.1;

  std::array<double, 3> as_array() const { return {train, validation, test}; }
};

class SplitAssignment {
 public:
  SplitAssignment() = default;
  /// `ratios` and `seed` are absent for assignments read back from CSV.
  SplitAssignment(std::vector<std::pair<std::string, Split>> entries,
                  std::optional<SplitRatios> ratios = std::nullopt,
                  std::optional<std::uint64_t> seed = std::nullopt);

  /// Entries in manifest record order.
  const std::vector<std::pair<std::string, Split>>& entries() const { return entries_; }
  const std::optional<SplitRatios>& ratios() const { return ratios_; }
  std::optional<std::uint64_t> seed() const { return seed_; }
  std::size_t size() const { return entries_.size(); }

  std::optional<Split> find(std::string_view image_id) const;
  std::vector<std::string> ids_in(Split split) const;

 private:
  std::vector<std::pair<std::string, Split>> entries_;
  std::optional<SplitRatios> ratios_;
  std::optional<std::uint64_t> seed_;
  std::unordered_map<std::string, Split> index_;
};

/// Largest-remainder apportionment of `count` items over the three ratios.
/// Ties between equal remainders go to Train, then Validation, then Test.
std::array<std::size_t, 3> apportion(std::size_t count, const SplitRatios& ratios);

void validate_ratios(const SplitRatios& ratios);

/// Per-class stratified split; each class is shuffled by a generator seeded
/// from (seed, class id), so adding a class never perturbs the others.
SplitAssignment stratified_split(const Manifest& manifest, const SplitRatios& ratios,
                                 std::uint64_t seed);

/// CSV `image_id,split`.
std::string serialize_split(const SplitAssignment& assignment);
SplitAssignment parse_split_assignment(std::string_view text);
SplitAssignment load_split_assignment(const std::filesystem::path& path);

struct ClassCount {
  ClassLabel label;
  std::size_t count = 0;
};

/// Counts in vocabulary order.
std::vector<ClassCount> class_histogram(const Manifest& manifest);

}  // namespace artstyle
