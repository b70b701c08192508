#pragma once

#include <algorithm>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "cspeech/error.hpp"
#include "cspeech/text.hpp"
#include "json.hpp"

namespace cspeech::nn {

namespace special {
inline constexpr const char* kPad = "<pad>";
inline constexpr const char* kUnk = "<unk>";
inline constexpr const char* kBos = "<s>";
inline constexpr const char* kEos = "</s>";
inline constexpr const char* kSep = "<sep>";
}  // namespace special

// Word-level vocabulary. Ids 0..4 are always pad, unk, bos, eos, sep; extra
// special tokens (control codes, type tokens, role markers) are appended and
// never produced by tokenize().
class Vocabulary {
 public:
  static constexpr int kPadId = 0;
  static constexpr int kUnkId = 1;
  static constexpr int kBosId = 2;
  static constexpr int kEosId = 3;
  static constexpr int kSepId = 4;

  Vocabulary() {
    for (const char* s : {special::kPad, special::kUnk, special::kBos, special::kEos, special::kSep}) add(s);
  }

  // Builds from texts, keeping words seen at least `min_count` times in
  // first-seen order after sorting by descending count then lexicographically.
  static Vocabulary build(const std::vector<std::string>& texts, int min_count = 1) {
    std::map<std::string, int> counts;
    for (const auto& t : texts)
      for (auto& w : tokenize(t)) ++counts[w];
    std::vector<std::pair<std::string, int>> sorted(counts.begin(), counts.end());
    std::stable_sort(sorted.begin(), sorted.end(), [](auto& a, auto& b) { return a.second > b.second; });
    Vocabulary v;
    for (auto& [w, c] : sorted)
      if (c >= min_count) v.add(w);
    return v;
  }

  int add(const std::string& token) {
    auto it = index_.find(token);
    if (it != index_.end()) return it->second;
    const int id = static_cast<int>(tokens_.size());
    tokens_.push_back(token);
    index_.emplace(token, id);
    return id;
  }

  bool contains(const std::string& token) const { return index_.count(token) != 0; }

  int id(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? kUnkId : it->second;
  }

  // Id of a token that must exist (special tokens); throws otherwise.
  int require(const std::string& token) const {
    auto it = index_.find(token);
    if (it == index_.end()) throw ConfigError("token missing from vocabulary: " + token);
    return it->second;
  }

  const std::string& token(int id) const { return tokens_.at(static_cast<size_t>(id)); }
  int size() const { return static_cast<int>(tokens_.size()); }

  std::vector<int> encode(std::string_view text) const {
    std::vector<int> ids;
    for (auto& w : tokenize(text)) ids.push_back(id(w));
    return ids;
  }

  nlohmann::json to_json() const { return tokens_; }

  static Vocabulary from_json(const nlohmann::json& j) {
    Vocabulary v;
    v.tokens_.clear();
    v.index_.clear();
    for (const auto& t : j) v.add(t.get<std::string>());
    if (v.size() < 5 || v.token(kPadId) != special::kPad || v.token(kSepId) != special::kSep)
      throw SchemaError("vocabulary file does not start with the reserved special tokens");
    return v;
  }

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

}  // namespace cspeech::nn
