#pragma once

// The 20 control codes in four feature families.

#include <algorithm>
#include <array>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cspeech/error.hpp"
#include "cspeech/taxonomy.hpp"

namespace cspeech {

enum class Family { kBig5, kHumVal, kScheme, kArgType };

inline constexpr std::array<Family, 4> kAllFamilies = {Family::kBig5, Family::kHumVal, Family::kScheme,
                                                       Family::kArgType};

inline std::string family_name(Family f) {
  switch (f) {
    case Family::kBig5: return "big5";
    case Family::kHumVal: return "humVal";
    case Family::kScheme: return "argSch";
    case Family::kArgType: return "argType";
  }
  return "?";
}

inline std::optional<Family> parse_family(std::string_view s) {
  const std::string u = to_lower(s);
  if (u == "big5") return Family::kBig5;
  if (u == "humval") return Family::kHumVal;
  if (u == "argsch" || u == "scheme") return Family::kScheme;
  if (u == "argtype") return Family::kArgType;
  return std::nullopt;
}

// Lowercase, runs of non-alphanumerics become one underscore.
inline std::string slug(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (std::isalnum(static_cast<unsigned char>(c))) out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    else if (!out.empty() && out.back() != '_') out += '_';
  }
  while (!out.empty() && out.back() == '_') out.pop_back();
  return out;
}

class FeatureVocabulary {
 public:
  static const FeatureVocabulary& standard() {
    static const FeatureVocabulary v;
    return v;
  }

  const std::vector<std::string>& codes(Family f) const { return codes_[static_cast<size_t>(f)]; }

  std::vector<std::string> all_codes() const {
    std::vector<std::string> out;
    for (Family f : kAllFamilies) out.insert(out.end(), codes(f).begin(), codes(f).end());
    return out;
  }

  std::optional<Family> family_of(const std::string& code) const {
    for (Family f : kAllFamilies)
      if (std::find(codes(f).begin(), codes(f).end(), code) != codes(f).end()) return f;
    return std::nullopt;
  }

  Family require_family(const std::string& code) const {
    auto f = family_of(code);
    if (!f) throw SchemaError("unknown control code '" + code + "'");
    return *f;
  }

  bool contains(const std::string& code) const { return family_of(code).has_value(); }

  // Token used for a code in model vocabularies.
  static std::string token(const std::string& code) { return "<" + code + ">"; }

  // Family order, then code name.
  std::vector<std::string> canonical_order(const std::set<std::string>& codes) const {
    std::vector<std::string> out(codes.begin(), codes.end());
    for (const auto& c : out) require_family(c);
    std::sort(out.begin(), out.end(), [&](const std::string& a, const std::string& b) {
      const auto fa = require_family(a), fb = require_family(b);
      return fa != fb ? fa < fb : a < b;
    });
    return out;
  }

  std::set<std::string> filter(const std::set<std::string>& codes, const std::set<Family>& active) const {
    std::set<std::string> out;
    for (const auto& c : codes)
      if (active.count(require_family(c))) out.insert(c);
    return out;
  }

  // Humval code for a value category name.
  static std::string value_code(const std::string& l2_name) { return slug(l2_name); }

 private:
  FeatureVocabulary() {
    codes_[0] = {"agreeableness", "conscientiousness", "extraversion", "neuroticism", "openness"};
    for (const auto& name : top_value_categories()) codes_[1].push_back(value_code(name));
    codes_[2] = {"from_consequence", "from_source_authority_knowledge", "goal_means", "rule_or_principle"};
    codes_[3] = {"denouncing", "facts", "hypocrisy", "positive", "question"};
    for (auto& c : codes_) std::sort(c.begin(), c.end());
  }

  std::array<std::vector<std::string>, 4> codes_;
};

// The six labels of the external scheme classifier folded into four codes.
inline std::string merge_scheme_labels(const std::string& raw) {
  const std::string key = slug(raw);
  if (key == "from_consequence" || key == "from_consequences") return "from_consequence";
  if (key == "from_source_authority" || key == "from_source_knowledge") return "from_source_authority_knowledge";
  if (key == "goal_from_means" || key == "means_for_goal" || key == "goal_for_means") return "goal_means";
  if (key == "rule_or_principle") return "rule_or_principle";
  throw SchemaError("unknown argument scheme label '" + raw + "'");
}

inline std::set<Family> parse_families(const std::vector<std::string>& names) {
  std::set<Family> out;
  for (const auto& n : names) {
    auto f = parse_family(n);
    if (!f) throw ConfigError("unknown feature family '" + n + "'");
    out.insert(*f);
  }
  return out;
}

inline std::string families_label(const std::set<Family>& families) {
  if (families.empty()) return "None";
  if (families.size() == kAllFamilies.size()) return "All";
  std::string out;
  for (Family f : families) {
    if (!out.empty()) out += "+";
    out += family_name(f);
  }
  return out;
}

}  // namespace cspeech
