#include "artstyle/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <optional>
#include <set>
#include <sstream>

#include "artstyle/common.hpp"

namespace artstyle {

namespace {

constexpr std::string_view kManifestHeader = "image_id,image_path,class_name";
constexpr std::string_view kClassesDirective = "# classes:";

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    start = end + 1;
  }
  return lines;
}

}  // namespace

Manifest::Manifest(std::vector<ClassLabel> vocabulary, std::vector<ArtworkRecord> records)
    : vocabulary_(std::move(vocabulary)), records_(std::move(records)) {
  if (vocabulary_.empty()) throw DataError("manifest: empty class vocabulary");
  std::set<std::string_view> names;
  for (std::size_t i = 0; i < vocabulary_.size(); ++i) {
    if (vocabulary_[i].id != static_cast<int>(i))
      throw DataError("manifest: class ids must be dense 0..M-1");
    if (vocabulary_[i].name.empty()) throw DataError("manifest: empty class name");
    if (!names.insert(vocabulary_[i].name).second)
      throw DataError("manifest: duplicate class name '" + vocabulary_[i].name + "'");
  }
  std::vector<std::size_t> counts(vocabulary_.size(), 0);
  index_.reserve(records_.size());
  for (std::size_t i = 0; i < records_.size(); ++i) {
    const auto& r = records_[i];
    if (r.image_id.empty()) throw DataError("manifest: empty image_id");
    if (r.label < 0 || static_cast<std::size_t>(r.label) >= vocabulary_.size())
      throw DataError("manifest: record '" + r.image_id + "' has invalid label");
    if (!index_.emplace(r.image_id, i).second)
      throw DataError("manifest: duplicate image_id '" + r.image_id + "'");
    ++counts[static_cast<std::size_t>(r.label)];
  }
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] == 0) throw DataError("manifest: class '" + vocabulary_[c].name + "' has no records");
  }
}

std::optional<int> Manifest::class_id(std::string_view name) const {
  for (const auto& label : vocabulary_) {
    if (label.name == name) return label.id;
  }
  return std::nullopt;
}

const ArtworkRecord* Manifest::find(std::string_view image_id) const {
  auto it = index_.find(std::string(image_id));
  return it == index_.end() ? nullptr : &records_[it->second];
}

std::vector<std::string> Manifest::class_names() const {
  std::vector<std::string> names;
  names.reserve(vocabulary_.size());
  for (const auto& label : vocabulary_) names.push_back(label.name);
  return names;
}

Manifest parse_manifest(std::string_view text) {
  const auto lines = split_lines(text);
  std::size_t line_no = 0;
  std::vector<ClassLabel> vocabulary;
  bool fixed_vocabulary = false;

  auto add_class = [&](const std::string& name) {
    vocabulary.push_back({static_cast<int>(vocabulary.size()), name});
    return vocabulary.back().id;
  };

  // optional directive and blank lines before the header
  while (line_no < lines.size()) {
    std::string_view line = trim(lines[line_no]);
    if (line.empty()) {
      ++line_no;
      continue;
    }
    if (line.starts_with(kClassesDirective)) {
      for (const auto& name : csv::split_line(line.substr(kClassesDirective.size()))) {
        std::string n(trim(name));
        if (n.empty()) throw DataError("manifest line " + std::to_string(line_no + 1) + ": empty class name");
        add_class(n);
      }
      fixed_vocabulary = true;
      ++line_no;
      continue;
    }
    break;
  }
  if (line_no >= lines.size() || trim(lines[line_no]) != kManifestHeader) {
    throw DataError("manifest line " + std::to_string(line_no + 1) + ": expected header '" +
                    std::string(kManifestHeader) + "'");
  }
  ++line_no;

  std::vector<ArtworkRecord> records;
  std::set<std::string> seen;
  for (; line_no < lines.size(); ++line_no) {
    const std::string where = "manifest line " + std::to_string(line_no + 1);
    std::string_view line = lines[line_no];
    if (trim(line).empty()) continue;
    std::vector<std::string> fields;
    try {
      fields = csv::split_line(line);
    } catch (const DataError& e) {
      throw DataError(where + ": " + e.what());
    }
    if (fields.size() != 3) {
      throw DataError(where + ": expected 3 fields, found " + std::to_string(fields.size()));
    }
    if (fields[0].empty()) throw DataError(where + ": empty image_id");
    if (!seen.insert(fields[0]).second) throw DataError(where + ": duplicate image_id '" + fields[0] + "'");
    int label = -1;
    for (const auto& c : vocabulary) {
      if (c.name == fields[2]) label = c.id;
    }
    if (label < 0) {
      if (fixed_vocabulary || fields[2].empty()) {
        throw DataError(where + ": unknown class '" + fields[2] + "'");
      }
      label = add_class(fields[2]);
    }
    records.push_back({fields[0], fields[1], label});
  }
  return Manifest(std::move(vocabulary), std::move(records));
}

Manifest load_manifest(const std::filesystem::path& path) {
  try {
    return parse_manifest(read_file(path));
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::string serialize_manifest(const Manifest& manifest) {
  std::ostringstream out;
  out << kClassesDirective << ' ';
  for (std::size_t i = 0; i < manifest.vocabulary().size(); ++i) {
    if (i) out << ',';
    out << csv::quote(manifest.vocabulary()[i].name);
  }
  out << '\n' << kManifestHeader << '\n';
  for (const auto& r : manifest.records()) {
    out << csv::quote(r.image_id) << ',' << csv::quote(r.image_ref) << ','
        << csv::quote(manifest.vocabulary()[static_cast<std::size_t>(r.label)].name) << '\n';
  }
  return out.str();
}

std::vector<CurationRule> parse_curation_rules(std::string_view json_text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("curation rules: invalid JSON: ") + e.what());
  }
  if (!doc.is_array()) throw DataError("curation rules: expected a JSON array");
  std::vector<CurationRule> rules;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const auto& item = doc[i];
    const std::string where = "curation rule " + std::to_string(i);
    if (!item.is_object() || !item.contains("kind") || !item.contains("sources") ||
        !item["kind"].is_string() || !item["sources"].is_array()) {
      throw DataError(where + ": expected {\"kind\":..., \"sources\":[...]}");
    }
    CurationRule rule;
    const auto kind = item["kind"].get<std::string>();
    if (kind == "merge") {
      rule.kind = CurationKind::Merge;
      if (!item.contains("target") || !item["target"].is_string())
        throw DataError(where + ": merge rule needs a string target");
      rule.target = item["target"].get<std::string>();
    } else if (kind == "exclude") {
      rule.kind = CurationKind::Exclude;
    } else {
      throw DataError(where + ": unknown kind '" + kind + "'");
    }
    for (const auto& s : item["sources"]) {
      if (!s.is_string()) throw DataError(where + ": sources must be strings");
      rule.sources.push_back(s.get<std::string>());
    }
    if (rule.sources.empty()) throw DataError(where + ": empty sources");
    rules.push_back(std::move(rule));
  }
  return rules;
}

std::vector<CurationRule> load_curation_rules(const std::filesystem::path& path) {
  return parse_curation_rules(read_file(path));
}

Manifest curate(const Manifest& manifest, const std::vector<CurationRule>& rules) {
  if (rules.empty()) return manifest;

  // fate[c]: original class id this class is folded into, or -1 when excluded
  const std::size_t m = manifest.class_count();
  std::vector<int> fate(m);
  for (std::size_t c = 0; c < m; ++c) fate[c] = static_cast<int>(c);
  std::vector<bool> alive(m, true);
  std::vector<std::string> names = manifest.class_names();

  auto find_live = [&](const std::string& name) -> std::optional<int> {
    for (std::size_t c = 0; c < m; ++c) {
      if (alive[c] && names[c] == name) return static_cast<int>(c);
    }
    return std::nullopt;
  };
  auto live_id = [&](const std::string& name, std::size_t rule_index) {
    auto id = find_live(name);
    if (!id) throw DataError("curation rule " + std::to_string(rule_index) + ": unknown class '" + name + "'");
    return *id;
  };

  for (std::size_t i = 0; i < rules.size(); ++i) {
    const auto& rule = rules[i];
    if (rule.sources.empty()) throw DataError("curation rule " + std::to_string(i) + ": empty sources");
    if (rule.kind == CurationKind::Merge) {
      if (rule.target.empty()) throw DataError("curation rule " + std::to_string(i) + ": merge without target");
      std::vector<int> sources;
      for (const auto& s : rule.sources) sources.push_back(live_id(s, i));
      // a new target name takes the place of the first source
      int target = find_live(rule.target).value_or(sources.front());
      names[static_cast<std::size_t>(target)] = rule.target;
      if (sources.size() < 2 && sources.front() == target) {
        throw DataError("curation rule " + std::to_string(i) + ": merge of a class into itself");
      }
      for (int s : sources) {
        if (s == target) continue;
        alive[static_cast<std::size_t>(s)] = false;
        for (auto& f : fate) {
          if (f == s) f = target;
        }
      }
    } else {
      for (const auto& s : rule.sources) {
        const int id = live_id(s, i);
        alive[static_cast<std::size_t>(id)] = false;
        for (auto& f : fate) {
          if (f == id) f = -1;
        }
      }
    }
  }

  std::vector<int> new_id(m, -1);
  std::vector<ClassLabel> vocabulary;
  for (std::size_t c = 0; c < m; ++c) {
    if (!alive[c]) continue;
    new_id[c] = static_cast<int>(vocabulary.size());
    vocabulary.push_back({new_id[c], names[c]});
  }
  std::vector<ArtworkRecord> records;
  std::vector<std::size_t> counts(vocabulary.size(), 0);
  for (const auto& r : manifest.records()) {
    const int f = fate[static_cast<std::size_t>(r.label)];
    if (f < 0) continue;
    const int label = new_id[static_cast<std::size_t>(f)];
    records.push_back({r.image_id, r.image_ref, label});
    ++counts[static_cast<std::size_t>(label)];
  }
  if (vocabulary.empty()) throw DataError("curation: rules leave no classes");
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] == 0) throw DataError("curation: class '" + vocabulary[c].name + "' ends up empty");
  }
  return Manifest(std::move(vocabulary), std::move(records));
}

std::string_view split_name(Split split) {
  switch (split) {
    case Split::Train: return "train";
    case Split::Validation: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::Train;
  if (name == "val") return Split::Validation;
  if (name == "test") return Split::Test;
  throw DataError("unknown split '" + std::string(name) + "' (expected train, val or test)");
}

SplitAssignment::SplitAssignment(std::vector<std::pair<std::string, Split>> entries,
                                 std::optional<SplitRatios> ratios, std::optional<std::uint64_t> seed)
    : entries_(std::move(entries)), ratios_(ratios), seed_(seed) {
  index_.reserve(entries_.size());
  for (const auto& [id, split] : entries_) {
    if (!index_.emplace(id, split).second) throw DataError("split: duplicate image_id '" + id + "'");
  }
}

std::optional<Split> SplitAssignment::find(std::string_view image_id) const {
  auto it = index_.find(std::string(image_id));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::string> SplitAssignment::ids_in(Split split) const {
  std::vector<std::string> ids;
  for (const auto& [id, s] : entries_) {
    if (s == split) ids.push_back(id);
  }
  return ids;
}

void validate_ratios(const SplitRatios& ratios) {
  for (double r : ratios.as_array()) {
    if (!std::isfinite(r) || r <= 0.0) throw DataError("split ratios must be positive");
  }
  const double sum = ratios.train + ratios.validation + ratios.test;
  if (std::abs(sum - 1.0) > 1e-9) {
    throw DataError("split ratios must sum to 1 (got " + format_double(sum) + ")");
  }
}

std::array<std::size_t, 3> apportion(std::size_t count, const SplitRatios& ratios) {
  const auto r = ratios.as_array();
  std::array<std::size_t, 3> out{};
  std::array<double, 3> remainder{};
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    const double quota = r[i] * static_cast<double>(count);
    // the nudge absorbs representation error such as 0.29 * 100 = 28.999...
    const double floor_q = std::floor(quota + 1e-9);
    out[i] = static_cast<std::size_t>(std::max(0.0, floor_q));
    remainder[i] = quota - floor_q;
    assigned += out[i];
  }
  // order by remainder descending; equal remainders keep Train > Val > Test
  std::array<std::size_t, 3> order{0, 1, 2};
  for (std::size_t i = 1; i < 3; ++i) {
    for (std::size_t j = i; j > 0 && remainder[order[j]] > remainder[order[j - 1]] + 1e-9; --j) {
      std::swap(order[j], order[j - 1]);
    }
  }
  for (std::size_t k = 0; assigned < count; k = (k + 1) % 3) {
    ++out[order[k]];
    ++assigned;
  }
  for (std::size_t k = 2; assigned > count; k = (k + 2) % 3) {
    if (out[order[k]] > 0) {
      --out[order[k]];
      --assigned;
    }
  }
  return out;
}

SplitAssignment stratified_split(const Manifest& manifest, const SplitRatios& ratios, std::uint64_t seed) {
  validate_ratios(ratios);
  std::vector<std::vector<std::size_t>> by_class(manifest.class_count());
  for (std::size_t i = 0; i < manifest.records().size(); ++i) {
    by_class[static_cast<std::size_t>(manifest.records()[i].label)].push_back(i);
  }
  std::vector<Split> assigned(manifest.size(), Split::Train);
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& members = by_class[c];
    Rng rng(derive_seed(seed, c));
    rng.shuffle(members);
    const auto counts = apportion(members.size(), ratios);
    std::size_t pos = 0;
    for (std::size_t s = 0; s < 3; ++s) {
      for (std::size_t k = 0; k < counts[s]; ++k) assigned[members[pos++]] = static_cast<Split>(s);
    }
  }
  std::vector<std::pair<std::string, Split>> entries;
  entries.reserve(manifest.size());
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    entries.emplace_back(manifest.records()[i].image_id, assigned[i]);
  }
  return SplitAssignment(std::move(entries), ratios, seed);
}

std::string serialize_split(const SplitAssignment& assignment) {
  std::string out = "image_id,split\n";
  for (const auto& [id, split] : assignment.entries()) {
    out += csv::quote(id);
    out += ',';
    out += split_name(split);
    out += '\n';
  }
  return out;
}

SplitAssignment parse_split_assignment(std::string_view text) {
  const auto lines = split_lines(text);
  if (lines.empty() || trim(lines[0]) != "image_id,split") {
    throw DataError("split line 1: expected header 'image_id,split'");
  }
  std::vector<std::pair<std::string, Split>> entries;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    const std::string where = "split line " + std::to_string(i + 1);
    const auto fields = csv::split_line(lines[i]);
    if (fields.size() != 2) throw DataError(where + ": expected 2 fields");
    try {
      entries.emplace_back(fields[0], parse_split(trim(fields[1])));
    } catch (const DataError& e) {
      throw DataError(where + ": " + e.what());
    }
  }
  return SplitAssignment(std::move(entries));
}

SplitAssignment load_split_assignment(const std::filesystem::path& path) {
  try {
    return parse_split_assignment(read_file(path));
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::vector<ClassCount> class_histogram(const Manifest& manifest) {
  std::vector<ClassCount> hist;
  hist.reserve(manifest.class_count());
  for (const auto& label : manifest.vocabulary()) hist.push_back({label, 0});
  for (const auto& r : manifest.records()) ++hist[static_cast<std::size_t>(r.label)].count;
  return hist;
}

}  // namespace artstyle
