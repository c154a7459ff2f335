#include <doctest.h>

#include <map>

#include "artstyle/dataset.hpp"
#include "fixtures.hpp"

using namespace artstyle;

namespace {

// Exhaustive oracle for the apportionment of n items over integer weights
// num/den: minimise sum |den*c_i - num_i*n|, preferring more Train, then Val.
std::array<std::size_t, 3> brute_force_apportion(std::size_t n, const std::array<long, 3>& num, long den) {
  std::array<std::size_t, 3> best{};
  long best_cost = -1;
  for (std::size_t tr = 0; tr <= n; ++tr) {
    for (std::size_t va = 0; tr + va <= n; ++va) {
      const std::size_t te = n - tr - va;
      const std::array<std::size_t, 3> c{tr, va, te};
      long cost = 0;
      for (int i = 0; i < 3; ++i) cost += std::labs(den * static_cast<long>(c[i]) - num[i] * static_cast<long>(n));
      const bool better = best_cost < 0 || cost < best_cost ||
                          (cost == best_cost && (c[0] > best[0] || (c[0] == best[0] && c[1] > best[1])));
      if (better) {
        best_cost = cost;
        best = c;
      }
    }
  }
  return best;
}

std::map<std::string, std::size_t> counts_by_name(const Manifest& m) {
  std::map<std::string, std::size_t> out;
  for (const auto& cc : class_histogram(m)) out[cc.label.name] = cc.count;
  return out;
}

}  // namespace

TEST_CASE("manifest parses and infers vocabulary in order of appearance") {
  const auto m = parse_manifest(
      "image_id,image_path,class_name\n"
      "a,img/a.jpg,Baroque\n"
      "b,img/b.jpg,Rococo\n"
      "c,img/c.jpg,Baroque\n");
  CHECK(m.class_count() == 2);
  CHECK(m.size() == 3);
  CHECK(m.class_names() == std::vector<std::string>{"Baroque", "Rococo"});
  CHECK(m.find("c")->label == 0);
  CHECK(m.find("zzz") == nullptr);
  CHECK(parse_manifest(serialize_manifest(m)) == m);
}

TEST_CASE("manifest with class directive fixes vocabulary") {
  const auto m = parse_manifest(
      "# classes: Rococo,Baroque\n"
      "image_id,image_path,class_name\n"
      "a,img/a.jpg,Baroque\n"
      "b,img/b.jpg,Rococo\n");
  CHECK(m.class_names() == std::vector<std::string>{"Rococo", "Baroque"});
  CHECK(m.find("a")->label == 1);
  CHECK_THROWS_AS(parse_manifest("# classes: Rococo\nimage_id,image_path,class_name\na,x.jpg,Baroque\n"), DataError);
}

TEST_CASE("manifest errors name the offending line") {
  try {
    parse_manifest("image_id,image_path,class_name\na,x.jpg,A\nb,y.jpg\n");
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_manifest("image_id,image_path,class_name\na,x.jpg,A\na,y.jpg,A\n"), DataError);
  CHECK_THROWS_AS(parse_manifest("id,path,label\na,x.jpg,A\n"), DataError);
  // a declared class without any record is invalid
  CHECK_THROWS_AS(parse_manifest("# classes: A,B\nimage_id,image_path,class_name\na,x.jpg,A\n"), DataError);
}

TEST_CASE("pandora-shaped manifest") {
  const auto m = fixtures::make_manifest(fixtures::kPandoraClasses, fixtures::kPandoraCounts);
  CHECK(m.class_count() == 18);
  CHECK(m.size() == 18038);
  CHECK(parse_manifest(serialize_manifest(m)) == m);
}

TEST_CASE("curation merges and excludes WikiArt classes down to 21") {
  std::vector<std::size_t> counts;
  for (std::size_t i = 0; i < fixtures::kWikiArtClasses.size(); ++i) counts.push_back(10 + i);
  const auto m = fixtures::make_manifest(fixtures::kWikiArtClasses, counts);
  REQUIRE(m.class_count() == 27);
  const auto rules = parse_curation_rules(fixtures::kWikiArtRulesJson);
  const auto out = curate(m, rules);
  CHECK(out.class_count() == 21);

  const auto before = counts_by_name(m);
  const auto after = counts_by_name(out);
  CHECK(after.at("Cubism") == before.at("Cubism") + before.at("Analytical Cubism") + before.at("Synthetic Cubism"));
  std::size_t excluded = 0;
  for (const char* name : {"Action Painting", "New Realism", "Contemporary Realism", "Pointillism"}) {
    CHECK(after.count(name) == 0);
    excluded += before.at(name);
  }
  CHECK(out.size() == m.size() - excluded);
  for (const auto& [name, count] : after) {
    if (name != "Cubism") CHECK(count == before.at(name));
  }
  // survivors keep original relative order and dense ids
  const auto names = out.class_names();
  for (std::size_t i = 1; i < names.size(); ++i) {
    const auto prev = std::find(fixtures::kWikiArtClasses.begin(), fixtures::kWikiArtClasses.end(), names[i - 1]);
    const auto cur = std::find(fixtures::kWikiArtClasses.begin(), fixtures::kWikiArtClasses.end(), names[i]);
    CHECK(prev < cur);
  }
  for (std::size_t i = 0; i < out.vocabulary().size(); ++i) CHECK(out.vocabulary()[i].id == static_cast<int>(i));
}

TEST_CASE("curation edge cases") {
  const auto m = fixtures::make_uniform_manifest(3, 4);
  CHECK(curate(m, {}) == m);
  CHECK_THROWS_AS(curate(m, {{CurationKind::Exclude, {"missing"}, ""}}), DataError);
  CHECK_THROWS_AS(curate(m, {{CurationKind::Exclude, {"class0", "class1", "class2"}, ""}}), DataError);
  // referencing a class removed by an earlier rule
  CHECK_THROWS_AS(curate(m, {{CurationKind::Exclude, {"class0"}, ""}, {CurationKind::Exclude, {"class0"}, ""}}),
                  DataError);
  // merge into a brand-new target name
  const auto merged = curate(m, {{CurationKind::Merge, {"class0", "class2"}, "joined"}});
  CHECK(merged.class_count() == 2);
  CHECK(counts_by_name(merged).at("joined") == 8);
  CHECK_THROWS_AS(parse_curation_rules(R"([{"kind":"rename","sources":["a"]}])"), DataError);
  CHECK_THROWS_AS(parse_curation_rules("not json"), DataError);
}

TEST_CASE("apportion agrees with exhaustive oracle") {
  const std::vector<std::array<long, 3>> weights = {{8, 1, 1}, {7, 2, 1}, {6, 2, 2}, {1, 1, 1}, {5, 3, 2}, {14, 3, 3}};
  const std::vector<long> dens = {10, 10, 10, 3, 10, 20};
  for (std::size_t w = 0; w < weights.size(); ++w) {
    const auto& num = weights[w];
    const double den = static_cast<double>(dens[w]);
    const SplitRatios r{num[0] / den, num[1] / den, num[2] / den};
    for (std::size_t n = 1; n <= 20; ++n) {
      CAPTURE(n);
      CAPTURE(w);
      CHECK(apportion(n, r) == brute_force_apportion(n, num, dens[w]));
    }
  }
  CHECK(apportion(10, {}) == std::array<std::size_t, 3>{8, 1, 1});
  CHECK(apportion(7, {}) == std::array<std::size_t, 3>{5, 1, 1});
  CHECK(apportion(1, {}) == std::array<std::size_t, 3>{1, 0, 0});
}

TEST_CASE("ratio validation") {
  CHECK_NOTHROW(validate_ratios({}));
  CHECK_THROWS_AS(validate_ratios({0.8, 0.1, 0.2}), DataError);
  CHECK_THROWS_AS(validate_ratios({1.0, 0.0, 0.0}), DataError);
  CHECK_THROWS_AS(validate_ratios({0.9, 0.2, -0.1}), DataError);
}

TEST_CASE("stratified split partitions and respects per-class counts") {
  const auto m = fixtures::make_manifest({"a", "b", "c"}, {10, 7, 1});
  const auto split = stratified_split(m, {}, 3);
  CHECK(split.size() == m.size());
  std::map<int, std::array<std::size_t, 3>> per_class;
  for (const auto& r : m.records()) {
    const auto s = split.find(r.image_id);
    REQUIRE(s.has_value());
    ++per_class[r.label][static_cast<int>(*s)];
  }
  CHECK(per_class[0] == std::array<std::size_t, 3>{8, 1, 1});
  CHECK(per_class[1] == std::array<std::size_t, 3>{5, 1, 1});
  CHECK(per_class[2] == std::array<std::size_t, 3>{1, 0, 0});
  CHECK(split.ids_in(Split::Train).size() + split.ids_in(Split::Validation).size() + split.ids_in(Split::Test).size() ==
        m.size());
}

TEST_CASE("stratified split is deterministic and isolated per class") {
  const auto m = fixtures::make_uniform_manifest(4, 25);
  const auto a = serialize_split(stratified_split(m, {}, 11));
  CHECK(a == serialize_split(stratified_split(m, {}, 11)));
  CHECK(a != serialize_split(stratified_split(m, {}, 12)));

  const auto bigger = fixtures::make_uniform_manifest(5, 25);
  const auto s4 = stratified_split(m, {}, 11);
  const auto s5 = stratified_split(bigger, {}, 11);
  for (const auto& [id, s] : s4.entries()) CHECK(s5.find(id) == s);
}

TEST_CASE("split csv round-trips") {
  const auto m = fixtures::make_uniform_manifest(2, 10);
  const auto split = stratified_split(m, {0.6, 0.2, 0.2}, 1);
  const auto text = serialize_split(split);
  const auto back = parse_split_assignment(text);
  CHECK(back.entries() == split.entries());
  CHECK_FALSE(back.ratios().has_value());
  CHECK_THROWS_AS(parse_split_assignment("image_id,split\na,training\n"), DataError);
  CHECK_THROWS_AS(parse_split_assignment("image_id,split\na,train\na,test\n"), DataError);
  CHECK(parse_split("val") == Split::Validation);
  CHECK(split_name(Split::Test) == "test");
}
