#pragma once

#include <unistd.h>

#include <algorithm>
#include <filesystem>
#include <string>
#include <vector>

#include "artstyle/common.hpp"
#include "artstyle/dataset.hpp"
#include "artstyle/imageproc.hpp"

namespace fixtures {

inline const std::vector<std::string> kPandoraClasses = {
    "Byzantine Iconography", "Early Renaissance", "Northern Renaissance", "High Renaissance", "Baroque",
    "Rococo",                "Romanticism",       "Realism",              "Impressionism",    "Post Impressionism",
    "Expressionism",         "Symbolism",         "Fauvism",              "Cubism",           "Surrealism",
    "Abstract Art",          "Naive Art",         "Pop Art"};

// Uneven 18-class counts summing to the collection size of 18038.
inline const std::vector<std::size_t> kPandoraCounts = {847,  1033, 1025, 1036, 1085, 930,  1058, 1016, 1203,
                                                        1058, 1033, 1003, 1000, 1053, 994,  1027, 924,  713};

inline const std::vector<std::string> kWikiArtClasses = {
    "Abstract Expressionism", "Action Painting",        "Analytical Cubism",     "Art Nouveau (Modern)",
    "Baroque",                "Color Field Painting",   "Contemporary Realism",  "Cubism",
    "Early Renaissance",      "Expressionism",          "Fauvism",               "High Renaissance",
    "Impressionism",          "Mannerism (Late Renaissance)", "Minimalism",   "Naive Art (Primitivism)",
    "New Realism",            "Northern Renaissance",   "Pointillism",           "Pop Art",
    "Post Impressionism",     "Realism",                "Rococo",                "Romanticism",
    "Symbolism",              "Synthetic Cubism",       "Ukiyo-e"};

inline const char* kWikiArtRulesJson = R"([
  {"kind": "merge", "sources": ["Analytical Cubism", "Synthetic Cubism", "Cubism"], "target": "Cubism"},
  {"kind": "exclude", "sources": ["Action Painting", "New Realism", "Contemporary Realism", "Pointillism"]}
])";

/// Manifest with the given per-class counts; ids are "<class>-<n>".
inline artstyle::Manifest make_manifest(const std::vector<std::string>& names, const std::vector<std::size_t>& counts) {
  std::vector<artstyle::ClassLabel> vocab;
  for (std::size_t i = 0; i < names.size(); ++i) vocab.push_back({static_cast<int>(i), names[i]});
  std::vector<artstyle::ArtworkRecord> records;
  // interleave classes so record order is not grouped by class
  std::size_t max_count = 0;
  for (auto c : counts) max_count = std::max(max_count, c);
  for (std::size_t k = 0; k < max_count; ++k) {
    for (std::size_t c = 0; c < names.size(); ++c) {
      if (k >= counts[c]) continue;
      const auto id = "c" + std::to_string(c) + "-" + std::to_string(k);
      records.push_back({id, "images/" + id + ".jpg", static_cast<int>(c)});
    }
  }
  return artstyle::Manifest(std::move(vocab), std::move(records));
}

inline artstyle::Manifest make_uniform_manifest(std::size_t classes, std::size_t per_class) {
  std::vector<std::string> names;
  for (std::size_t c = 0; c < classes; ++c) names.push_back("class" + std::to_string(c));
  return make_manifest(names, std::vector<std::size_t>(classes, per_class));
}

inline artstyle::RasterImage random_image(int width, int height, std::uint64_t seed) {
  artstyle::Rng rng(seed);
  artstyle::RasterImage img(width, height);
  for (auto& p : img.pixels()) p = static_cast<std::uint8_t>(rng.uniform_index(256));
  return img;
}

/// Fresh scratch directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("artstyle-test-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace fixtures
