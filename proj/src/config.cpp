#include "artstyle/config.hpp"

#include <cctype>
#include <charconv>
#include <set>

#include "artstyle/common.hpp"

namespace artstyle {

namespace {

class LineParser {
 public:
  LineParser(std::string_view text, std::size_t line_no) : text_(text), line_no_(line_no) {}

  [[noreturn]] void fail(const std::string& what) const {
    throw UsageError("config line " + std::to_string(line_no_) + ": " + what);
  }

  void skip_ws() {
    while (pos_ < text_.size() && (text_[pos_] == ' ' || text_[pos_] == '\t')) ++pos_;
  }
  bool at_end_or_comment() {
    skip_ws();
    return pos_ >= text_.size() || text_[pos_] == '#';
  }
  char peek() const { return pos_ < text_.size() ? text_[pos_] : '\0'; }
  void expect(char c) {
    skip_ws();
    if (peek() != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }

  std::string key() {
    skip_ws();
    const std::size_t start = pos_;
    while (pos_ < text_.size() && (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_' || text_[pos_] == '-')) ++pos_;
    if (start == pos_) fail("expected a bare key");
    return std::string(text_.substr(start, pos_ - start));
  }

  TomlValue::Scalar scalar() {
    skip_ws();
    const char c = peek();
    if (c == '"') return basic_string();
    if (c == '\'') {
      const std::size_t end = text_.find('\'', pos_ + 1);
      if (end == std::string_view::npos) fail("unterminated literal string");
      std::string s(text_.substr(pos_ + 1, end - pos_ - 1));
      pos_ = end + 1;
      return s;
    }
    const std::size_t start = pos_;
    while (pos_ < text_.size() && text_[pos_] != ',' && text_[pos_] != ']' && text_[pos_] != '#' &&
           text_[pos_] != ' ' && text_[pos_] != '\t') {
      ++pos_;
    }
    std::string token(text_.substr(start, pos_ - start));
    if (token.empty()) fail("expected a value");
    if (token == "true") return true;
    if (token == "false") return false;
    std::string digits;
    for (char ch : token) {
      if (ch != '_') digits.push_back(ch);
    }
    const bool is_float = digits.find_first_of(".eE") != std::string::npos || digits == "inf" || digits == "nan";
    if (!is_float) {
      std::int64_t v = 0;
      const char* first = digits.data() + (digits[0] == '+' ? 1 : 0);
      auto [ptr, ec] = std::from_chars(first, digits.data() + digits.size(), v);
      if (ec == std::errc{} && ptr == digits.data() + digits.size()) return v;
      fail("invalid value '" + token + "'");
    }
    try {
      return parse_double(digits);
    } catch (const DataError&) {
      fail("invalid value '" + token + "'");
    }
  }

  TomlValue value() {
    skip_ws();
    if (peek() != '[') return TomlValue{scalar()};
    ++pos_;
    std::vector<TomlValue::Scalar> items;
    skip_ws();
    if (peek() == ']') {
      ++pos_;
      return TomlValue{items};
    }
    while (true) {
      items.push_back(scalar());
      skip_ws();
      if (peek() == ',') {
        ++pos_;
        skip_ws();
        if (peek() == ']') {
          ++pos_;
          break;
        }
        continue;
      }
      if (peek() == ']') {
        ++pos_;
        break;
      }
      fail("expected ',' or ']' in array (arrays must fit on one line)");
    }
    return TomlValue{items};
  }

  std::string section_header() {
    expect('[');
    std::string name = key();
    expect(']');
    if (!at_end_or_comment()) fail("unexpected text after section header");
    return name;
  }

 private:
  std::string basic_string() {
    ++pos_;
    std::string out;
    while (pos_ < text_.size() && text_[pos_] != '"') {
      char c = text_[pos_++];
      if (c == '\\') {
        if (pos_ >= text_.size()) break;
        const char e = text_[pos_++];
        switch (e) {
          case 'n': out.push_back('\n'); break;
          case 't': out.push_back('\t'); break;
          case '"': out.push_back('"'); break;
          case '\\': out.push_back('\\'); break;
          default: fail(std::string("unsupported escape \\") + e);
        }
      } else {
        out.push_back(c);
      }
    }
    if (pos_ >= text_.size()) fail("unterminated string");
    ++pos_;
    return out;
  }

  std::string_view text_;
  std::size_t line_no_;
  std::size_t pos_ = 0;
};

double scalar_as_double(const TomlValue::Scalar& s, const std::string& what) {
  if (const auto* d = std::get_if<double>(&s)) return *d;
  if (const auto* i = std::get_if<std::int64_t>(&s)) return static_cast<double>(*i);
  throw UsageError("config: " + what + " must be a number");
}

std::int64_t scalar_as_int(const TomlValue::Scalar& s, const std::string& what) {
  if (const auto* i = std::get_if<std::int64_t>(&s)) return *i;
  throw UsageError("config: " + what + " must be an integer");
}

}  // namespace

TomlDocument TomlDocument::parse(std::string_view text) {
  TomlDocument doc;
  std::string section;
  std::set<std::string> declared;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    LineParser p(line, line_no);
    if (p.at_end_or_comment()) {
      if (end == text.size()) break;
      continue;
    }
    if (p.peek() == '[') {
      section = p.section_header();
      if (!declared.insert(section).second) p.fail("duplicate section [" + section + "]");
      doc.sections_[section];
    } else {
      const std::string key = p.key();
      p.expect('=');
      TomlValue value = p.value();
      if (!p.at_end_or_comment()) p.fail("unexpected text after value");
      if (!doc.sections_[section].emplace(key, std::move(value)).second) p.fail("duplicate key '" + key + "'");
    }
    if (end == text.size()) break;
  }
  return doc;
}

const TomlValue* TomlDocument::find(const std::string& section, const std::string& key) const {
  auto s = sections_.find(section);
  if (s == sections_.end()) return nullptr;
  auto k = s->second.find(key);
  return k == s->second.end() ? nullptr : &k->second;
}

bool TomlDocument::has(const std::string& section, const std::string& key) const { return find(section, key) != nullptr; }

std::optional<std::string> TomlDocument::get_string(const std::string& section, const std::string& key) const {
  const auto* v = find(section, key);
  if (!v) return std::nullopt;
  const auto* s = std::get_if<TomlValue::Scalar>(&v->value);
  if (!s || !std::holds_alternative<std::string>(*s)) throw UsageError("config: [" + section + "] " + key + " must be a string");
  return std::get<std::string>(*s);
}

std::optional<double> TomlDocument::get_double(const std::string& section, const std::string& key) const {
  const auto* v = find(section, key);
  if (!v) return std::nullopt;
  const auto* s = std::get_if<TomlValue::Scalar>(&v->value);
  if (!s) throw UsageError("config: [" + section + "] " + key + " must be a number");
  return scalar_as_double(*s, "[" + section + "] " + key);
}

std::optional<std::int64_t> TomlDocument::get_int(const std::string& section, const std::string& key) const {
  const auto* v = find(section, key);
  if (!v) return std::nullopt;
  const auto* s = std::get_if<TomlValue::Scalar>(&v->value);
  if (!s) throw UsageError("config: [" + section + "] " + key + " must be an integer");
  return scalar_as_int(*s, "[" + section + "] " + key);
}

std::optional<std::vector<double>> TomlDocument::get_double_list(const std::string& section, const std::string& key) const {
  const auto* v = find(section, key);
  if (!v) return std::nullopt;
  const auto* list = std::get_if<std::vector<TomlValue::Scalar>>(&v->value);
  if (!list) throw UsageError("config: [" + section + "] " + key + " must be an array");
  std::vector<double> out;
  for (const auto& s : *list) out.push_back(scalar_as_double(s, "[" + section + "] " + key));
  return out;
}

std::optional<std::vector<std::int64_t>> TomlDocument::get_int_list(const std::string& section, const std::string& key) const {
  const auto* v = find(section, key);
  if (!v) return std::nullopt;
  const auto* list = std::get_if<std::vector<TomlValue::Scalar>>(&v->value);
  if (!list) throw UsageError("config: [" + section + "] " + key + " must be an array");
  std::vector<std::int64_t> out;
  for (const auto& s : *list) out.push_back(scalar_as_int(s, "[" + section + "] " + key));
  return out;
}

namespace {

const std::map<std::string, std::set<std::string>>& known_keys() {
  static const std::map<std::string, std::set<std::string>> keys = {
      {"data", {"manifest", "rules"}},
      {"split", {"ratios", "seed", "file"}},
      {"ensemble", {"roster", "mode"}},
      {"meta", {"hidden", "dropout", "checkpoint"}},
      {"train", {"learning_rate", "momentum", "batch_size", "max_epochs", "patience", "class_weights", "seed"}},
      {"output", {"dir"}},
  };
  return keys;
}

std::uint64_t non_negative(std::int64_t v, const std::string& what) {
  if (v < 0) throw UsageError("config: " + what + " must be non-negative");
  return static_cast<std::uint64_t>(v);
}

}  // namespace

ExperimentConfig parse_experiment_config(std::string_view text, const std::filesystem::path& base_dir) {
  const auto doc = TomlDocument::parse(text);
  for (const auto& [section, entries] : doc.sections()) {
    auto known = known_keys().find(section);
    if (known == known_keys().end()) {
      throw UsageError(section.empty() ? "config: keys must live inside a [section]"
                                       : "config: unknown section [" + section + "]");
    }
    for (const auto& [key, value] : entries) {
      if (!known->second.count(key)) throw UsageError("config: unknown key '" + key + "' in [" + section + "]");
    }
  }

  auto path_of = [&](const std::string& section, const std::string& key, bool must_exist) -> std::optional<std::filesystem::path> {
    auto s = doc.get_string(section, key);
    if (!s) return std::nullopt;
    std::filesystem::path p = *s;
    if (p.is_relative()) p = base_dir / p;
    if (must_exist && !std::filesystem::exists(p)) {
      throw UsageError("config: [" + section + "] " + key + " refers to missing file " + p.string());
    }
    return p;
  };

  ExperimentConfig cfg;
  cfg.manifest = path_of("data", "manifest", true);
  cfg.rules = path_of("data", "rules", true);
  cfg.roster = path_of("ensemble", "roster", true);
  cfg.split_file = path_of("split", "file", false);
  cfg.checkpoint = path_of("meta", "checkpoint", false);
  cfg.output_dir = path_of("output", "dir", false);

  if (auto r = doc.get_double_list("split", "ratios")) {
    if (r->size() != 3) throw UsageError("config: [split] ratios needs three values");
    cfg.ratios = SplitRatios{(*r)[0], (*r)[1], (*r)[2]};
    try {
      validate_ratios(*cfg.ratios);
    } catch (const DataError& e) {
      throw UsageError(std::string("config: ") + e.what());
    }
  }
  if (auto s = doc.get_int("split", "seed")) cfg.split_seed = non_negative(*s, "[split] seed");
  cfg.mode = doc.get_string("ensemble", "mode");
  if (auto h = doc.get_int_list("meta", "hidden")) {
    std::vector<std::size_t> widths;
    for (auto w : *h) {
      if (w <= 0) throw UsageError("config: [meta] hidden widths must be positive");
      widths.push_back(static_cast<std::size_t>(w));
    }
    cfg.hidden_widths = widths;
  }
  cfg.dropout = doc.get_double("meta", "dropout");
  cfg.learning_rate = doc.get_double("train", "learning_rate");
  cfg.momentum = doc.get_double("train", "momentum");
  if (auto v = doc.get_int("train", "batch_size")) cfg.batch_size = non_negative(*v, "[train] batch_size");
  if (auto v = doc.get_int("train", "max_epochs")) cfg.max_epochs = non_negative(*v, "[train] max_epochs");
  if (auto v = doc.get_int("train", "patience")) cfg.patience = non_negative(*v, "[train] patience");
  cfg.class_weights = doc.get_double_list("train", "class_weights");
  if (auto v = doc.get_int("train", "seed")) cfg.train_seed = non_negative(*v, "[train] seed");
  return cfg;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw UsageError("config file not found: " + path.string());
  return parse_experiment_config(read_file(path), path.parent_path());
}

}  // namespace artstyle
