#pragma once

// Topic keyword curation, lexical expansion and #MASK# substitution.

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "cspeech/corpus.hpp"
#include "cspeech/nn/checkpoint.hpp"
#include "cspeech/text.hpp"

namespace cspeech::argtype {

inline constexpr std::string_view kMaskToken = "#MASK#";

// Hyphens join words, so "anti-muslim" is one word and stays untouched when
// only "muslim" is a keyword.
inline bool is_mask_word_char(char c) { return is_word_char(c) || c == '-'; }

// Lowercased maximal runs of word characters that contain a letter or digit.
inline std::vector<std::string> words(std::string_view text) {
  std::vector<std::string> out;
  size_t i = 0;
  while (i < text.size()) {
    if (!is_mask_word_char(text[i])) {
      ++i;
      continue;
    }
    size_t j = i;
    bool content = false;
    while (j < text.size() && is_mask_word_char(text[j])) {
      content = content || (text[j] != '-' && text[j] != '_');
      ++j;
    }
    if (content) out.push_back(to_lower(text.substr(i, j - i)));
    i = j;
  }
  return out;
}

enum class PosTag { kNoun, kVerb, kAdjective, kAdverb, kInterjection, kOther };

inline bool is_keyword_pos(PosTag t) { return t != PosTag::kOther; }

inline std::optional<PosTag> parse_pos_tag(std::string_view s) {
  const std::string u = to_lower(s);
  if (u == "noun" || u == "propn" || u == "n") return PosTag::kNoun;
  if (u == "verb" || u == "v") return PosTag::kVerb;
  if (u == "adj" || u == "a") return PosTag::kAdjective;
  if (u == "adv" || u == "r") return PosTag::kAdverb;
  if (u == "intj") return PosTag::kInterjection;
  if (u == "other" || u == "x") return PosTag::kOther;
  return std::nullopt;
}

class PosTagger {
 public:
  virtual ~PosTagger() = default;
  // One tag per word of a document, in order.
  virtual std::vector<PosTag> tag(const std::vector<std::string>& document) const = 0;
};

// Closed-class word list plus suffix rules, overridable per word. Good enough
// to keep function words out of the keyword sets without a model.
class LexiconTagger final : public PosTagger {
 public:
  LexiconTagger() = default;
  explicit LexiconTagger(std::unordered_map<std::string, PosTag> overrides) : overrides_(std::move(overrides)) {}

  static LexiconTagger from_json(const nlohmann::json& j) {
    std::unordered_map<std::string, PosTag> m;
    for (const auto& [word, tag] : j.items()) {
      auto t = parse_pos_tag(tag.get<std::string>());
      if (!t) throw SchemaError("unknown POS tag '" + tag.get<std::string>() + "' for '" + word + "'");
      m[to_lower(word)] = *t;
    }
    return LexiconTagger(std::move(m));
  }

  PosTag tag_word(const std::string& w) const {
    if (auto it = overrides_.find(w); it != overrides_.end()) return it->second;
    if (closed_class().count(w)) return PosTag::kOther;
    if (interjections().count(w)) return PosTag::kInterjection;
    bool has_alpha = false;
    for (char c : w) has_alpha = has_alpha || std::isalpha(static_cast<unsigned char>(c)) || (c & 0x80);
    if (!has_alpha) return PosTag::kOther;
    auto ends = [&](std::string_view s) { return w.size() > s.size() + 2 && w.ends_with(s); };
    if (ends("ly")) return PosTag::kAdverb;
    if (ends("ous") || ends("ful") || ends("ive") || ends("able") || ends("ible") || ends("ish") || ends("ic") ||
        ends("al") || ends("less"))
      return PosTag::kAdjective;
    if (ends("ing") || ends("ed") || ends("ize") || ends("ise")) return PosTag::kVerb;
    return PosTag::kNoun;
  }

  std::vector<PosTag> tag(const std::vector<std::string>& document) const override {
    std::vector<PosTag> out;
    out.reserve(document.size());
    for (const auto& w : document) out.push_back(tag_word(w));
    return out;
  }

 private:
  static const std::set<std::string>& closed_class() {
    static const std::set<std::string> words = {
        "a",      "an",    "the",     "this",   "that",    "these",   "those",  "some",    "any",    "each",
        "every",  "no",    "all",     "both",   "either",  "neither", "i",      "me",      "my",     "mine",
        "you",    "your",  "yours",   "he",     "him",     "his",     "she",    "her",     "hers",   "it",
        "its",    "we",    "us",      "our",    "ours",    "they",    "them",   "their",   "theirs", "who",
        "whom",   "whose", "which",   "what",   "myself",  "itself",  "of",     "in",      "on",     "at",
        "by",     "for",   "with",    "about",  "against", "between", "into",   "through", "during", "before",
        "after",  "above", "below",   "to",     "from",    "up",      "down",   "out",     "off",    "over",
        "under",  "and",   "but",     "or",     "nor",     "so",      "yet",    "if",      "because", "as",
        "while",  "than",  "is",      "am",     "are",     "was",     "were",   "be",      "been",   "being",
        "have",   "has",   "had",     "do",     "does",    "did",     "will",   "would",   "shall",  "should",
        "can",    "could", "may",     "might",  "must",    "not",     "there",  "here",    "then",   "when",
        "where",  "why",   "how",     "very",   "too",     "just",    "only",   "also",    "such",   "own",
        "same",   "other", "another", "more",   "most",    "much",    "many",   "few",     "one",    "two",
        "s",      "t",     "don",     "doesn",  "isn",     "aren",    "won",    "can't",   "don't",  "it's"};
    return words;
  }
  static const std::set<std::string>& interjections() {
    static const std::set<std::string> words = {"oh", "hey", "wow", "ugh", "yeah", "lol", "ah", "alas", "hooray", "ouch"};
    return words;
  }

  std::unordered_map<std::string, PosTag> overrides_;
};

// Derivationally related forms and pertainyms of a lemma.
class LexicalDatabase {
 public:
  virtual ~LexicalDatabase() = default;
  virtual std::vector<std::string> related_forms(const std::string& lemma) const = 0;
};

// A small built-in relation table for the hate-speech target vocabulary,
// extendable from JSON {"lemma": ["form", ...]}.
class BundledLexicon final : public LexicalDatabase {
 public:
  BundledLexicon() {
    table_ = {
        {"islam", {"islamic", "islamist"}},      {"islamic", {"islam"}},
        {"muslim", {"islamic"}},                 {"jew", {"jewish"}},
        {"jewish", {"jew", "judaism"}},          {"judaism", {"jewish", "judaic"}},
        {"migrant", {"migrate", "migration"}},   {"migrate", {"migrant", "migration"}},
        {"migration", {"migrant", "migrate"}},   {"immigrant", {"immigrate", "immigration"}},
        {"immigration", {"immigrant"}},          {"refugee", {"refuge"}},
        {"homosexual", {"homosexuality"}},       {"homosexuality", {"homosexual"}},
        {"lesbian", {"lesbianism"}},             {"transgender", {"transgenderism"}},
        {"feminism", {"feminist"}},              {"feminist", {"feminism"}},
        {"female", {"feminine"}},                {"woman", {"womanhood"}},
        {"race", {"racial"}},                    {"racism", {"racist"}},
        {"racist", {"racism"}},                  {"africa", {"african"}},
        {"arab", {"arabic", "arabian"}},         {"religion", {"religious"}},
    };
  }

  static BundledLexicon from_json(const nlohmann::json& j, bool keep_builtin = true) {
    BundledLexicon lex;
    if (!keep_builtin) lex.table_.clear();
    for (const auto& [lemma, forms] : j.items()) {
      if (!forms.is_array()) throw SchemaError("lexicon entry '" + lemma + "' must be an array");
      auto& dst = lex.table_[to_lower(lemma)];
      for (const auto& f : forms) dst.push_back(to_lower(f.get<std::string>()));
    }
    return lex;
  }

  std::vector<std::string> related_forms(const std::string& lemma) const override {
    auto it = table_.find(lemma);
    return it == table_.end() ? std::vector<std::string>{} : it->second;
  }

 private:
  std::unordered_map<std::string, std::vector<std::string>> table_;
};

// Suffix-rule English plural. Words that already look plural get none.
inline std::optional<std::string> pluralize(const std::string& w) {
  static const std::map<std::string, std::string> irregular = {
      {"man", "men"}, {"woman", "women"}, {"person", "people"}, {"child", "children"}};
  if (auto it = irregular.find(w); it != irregular.end()) return it->second;
  for (const auto& [sing, plural] : irregular)
    if (w == plural) return std::nullopt;
  if (w.size() < 2) return std::nullopt;
  if (w.ends_with("s") && !w.ends_with("ss")) return std::nullopt;
  if (w.ends_with("ss") || w.ends_with("sh") || w.ends_with("ch") || w.ends_with("x") || w.ends_with("z"))
    return w + "es";
  const char before = w[w.size() - 2];
  if (w.back() == 'y' && std::string_view("aeiou").find(before) == std::string_view::npos)
    return w.substr(0, w.size() - 1) + "ies";
  return w + "s";
}

// Topic -> lowercased keywords. Sets are pairwise disjoint.
struct TopicKeywordSet {
  std::map<Topic, std::set<std::string>> keywords;

  const std::set<std::string>& of(Topic t) const {
    static const std::set<std::string> none;
    auto it = keywords.find(t);
    return it == keywords.end() ? none : it->second;
  }

  std::optional<Topic> topic_of(const std::string& word) const {
    for (const auto& [t, set] : keywords)
      if (set.count(word)) return t;
    return std::nullopt;
  }

  bool disjoint() const {
    std::set<std::string> seen;
    for (const auto& [t, set] : keywords)
      for (const auto& w : set)
        if (!seen.insert(w).second) return false;
    return true;
  }

  size_t size() const {
    size_t n = 0;
    for (const auto& [t, set] : keywords) n += set.size();
    return n;
  }

  nlohmann::json to_json() const {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [t, set] : keywords) j[std::string(topic_name(t))] = set;
    return j;
  }

  static TopicKeywordSet from_json(const nlohmann::json& j) {
    TopicKeywordSet out;
    for (const auto& [name, list] : j.items()) {
      auto& dst = out.keywords[require_topic(name, "keyword file")];
      for (const auto& w : list) dst.insert(to_lower(w.get<std::string>()));
    }
    if (!out.disjoint()) throw SchemaError("keyword file: a keyword is listed under two topics");
    return out;
  }

  bool operator==(const TopicKeywordSet&) const = default;
};

enum class KeywordReading {
  kLiteral,  // occurs in exactly one topic, total count <= max_count
  kLeakage,  // most frequent in one topic, at most max_count occurrences elsewhere
};

struct KeywordOptions {
  int max_count = 5;
  KeywordReading reading = KeywordReading::kLiteral;
};

// Per-topic word counts over both sides of every turn, restricted to words
// the tagger marks as adjective, adverb, interjection, noun or verb.
inline std::map<std::string, std::map<Topic, int>> count_topic_words(const DialogueCorpus& corpus,
                                                                     const PosTagger& tagger) {
  std::map<std::string, std::map<Topic, int>> counts;
  for (const auto& d : corpus.dialogues)
    for (const auto& t : d.turns)
      for (const auto* text : {&t.hate_text, &t.counter_text}) {
        const auto ws = words(*text);
        const auto tags = tagger.tag(ws);
        if (tags.size() != ws.size()) throw DimensionError("POS tagger returned a wrong number of tags");
        for (size_t i = 0; i < ws.size(); ++i)
          if (is_keyword_pos(tags[i])) ++counts[ws[i]][t.topic];
      }
  return counts;
}

inline TopicKeywordSet curate_topic_keywords(const DialogueCorpus& corpus, const PosTagger& tagger,
                                             const KeywordOptions& options = {},
                                             std::vector<std::string>* warnings = nullptr) {
  std::set<Topic> topics;
  for (const auto& d : corpus.dialogues) topics.insert(d.topic);
  if (topics.size() < 2 && warnings)
    warnings->push_back("corpus covers a single topic; keyword exclusivity is vacuous");
  TopicKeywordSet out;
  for (const auto& [word, per_topic] : count_topic_words(corpus, tagger)) {
    if (options.reading == KeywordReading::kLiteral) {
      if (per_topic.size() == 1 && per_topic.begin()->second <= options.max_count)
        out.keywords[per_topic.begin()->first].insert(word);
      continue;
    }
    int best = -1, total = 0;
    std::optional<Topic> owner;
    bool tied = false;
    for (const auto& [topic, n] : per_topic) {
      total += n;
      if (n > best) {
        best = n;
        owner = topic;
        tied = false;
      } else if (n == best) {
        tied = true;
      }
    }
    if (!tied && total - best <= options.max_count) out.keywords[*owner].insert(word);
  }
  return out;
}

// Adds related forms and plurals; any word claimed by two topics afterwards
// is removed from every topic.
inline TopicKeywordSet expand_keywords(const TopicKeywordSet& input, const LexicalDatabase& lexicon) {
  std::map<std::string, std::set<Topic>> owners;
  std::map<Topic, std::set<std::string>> grown;
  for (const auto& [topic, set] : input.keywords) {
    auto& dst = grown[topic];
    for (const auto& w : set) {
      std::vector<std::string> forms{w};
      for (const auto& f : lexicon.related_forms(w)) forms.push_back(to_lower(f));
      for (const auto& f : forms) {
        dst.insert(f);
        if (auto p = pluralize(f)) dst.insert(*p);
      }
    }
    for (const auto& w : dst) owners[w].insert(topic);
  }
  TopicKeywordSet out;
  for (auto& [topic, set] : grown) {
    auto& dst = out.keywords[topic];
    for (const auto& w : set)
      if (owners[w].size() == 1) dst.insert(w);
  }
  return out;
}

// Replaces whole-word, case-insensitive keyword occurrences with #MASK#.
// Without a topic, keywords of every topic are masked. Existing #MASK#
// tokens are left alone, which makes the function idempotent.
inline std::string mask_text(std::string_view text, const TopicKeywordSet& keywords,
                             std::optional<Topic> topic = std::nullopt) {
  auto is_keyword = [&](const std::string& w) {
    if (topic) return keywords.of(*topic).count(w) > 0;
    return keywords.topic_of(w).has_value();
  };
  std::string out;
  out.reserve(text.size());
  size_t i = 0;
  while (i < text.size()) {
    if (text.substr(i, kMaskToken.size()) == kMaskToken) {
      out += kMaskToken;
      i += kMaskToken.size();
      continue;
    }
    if (!is_mask_word_char(text[i])) {
      out += text[i++];
      continue;
    }
    size_t j = i;
    while (j < text.size() && is_mask_word_char(text[j]) && text.substr(j, kMaskToken.size()) != kMaskToken) ++j;
    const auto word = text.substr(i, j - i);
    if (is_keyword(to_lower(word))) out += kMaskToken;
    else out += word;
    i = j;
  }
  return out;
}

inline TopicKeywordSet load_keywords(const std::filesystem::path& path) {
  return TopicKeywordSet::from_json(nn::read_json(path));
}

}  // namespace cspeech::argtype
