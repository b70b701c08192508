#pragma once

// Hate-speech dialogue corpora: a uniform dialogue/turn model, readers for
// the canonical JSON Lines format and the upstream CSV releases, and
// expansion of dialogues into per-turn generation examples.

#include <algorithm>
#include <array>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cspeech/csv.hpp"
#include "cspeech/error.hpp"
#include "cspeech/text.hpp"
#include "json.hpp"

namespace cspeech {

// Target group of the hate speech.
enum class Topic { kLgbt, kMigrants, kMuslims, kJews, kPeopleOfColor, kWomen };

inline constexpr std::array<Topic, 6> kAllTopics = {Topic::kLgbt,  Topic::kMigrants,      Topic::kMuslims,
                                                     Topic::kJews, Topic::kPeopleOfColor, Topic::kWomen};

inline std::string_view topic_name(Topic t) {
  switch (t) {
    case Topic::kLgbt: return "LGBT+";
    case Topic::kMigrants: return "MIGRANTS";
    case Topic::kMuslims: return "MUSLIMS";
    case Topic::kJews: return "JEWS";
    case Topic::kPeopleOfColor: return "POC";
    case Topic::kWomen: return "WOMEN";
  }
  return "?";
}

inline std::optional<Topic> parse_topic(std::string_view text) {
  const std::string key = to_lower(normalize_whitespace(text));
  if (key == "lgbt+" || key == "lgbt" || key == "lgbtq" || key == "lgbtq+") return Topic::kLgbt;
  if (key == "migrants" || key == "migrant" || key == "immigrants") return Topic::kMigrants;
  if (key == "muslims" || key == "muslim" || key == "islam") return Topic::kMuslims;
  if (key == "jews" || key == "jew" || key == "jewish") return Topic::kJews;
  if (key == "poc" || key == "people of color" || key == "people_of_color") return Topic::kPeopleOfColor;
  if (key == "women" || key == "woman") return Topic::kWomen;
  return std::nullopt;
}

inline Topic require_topic(std::string_view text, std::string_view where) {
  auto t = parse_topic(text);
  if (!t) throw SchemaError(std::string(where) + ": unknown topic '" + std::string(text) + "'");
  return *t;
}

struct Turn {
  int turn_index = 0;
  std::string hate_text;
  std::string counter_text;
  Topic topic = Topic::kMuslims;

  bool operator==(const Turn&) const = default;
};

struct Dialogue {
  std::string dialogue_id;
  Topic topic = Topic::kMuslims;
  std::vector<Turn> turns;

  bool operator==(const Dialogue&) const = default;
};

struct DialogueCorpus {
  std::vector<Dialogue> dialogues;

  size_t turn_count() const {
    size_t n = 0;
    for (const auto& d : dialogues) n += d.turns.size();
    return n;
  }
  bool empty() const { return dialogues.empty(); }
  bool operator==(const DialogueCorpus&) const = default;
};

struct GenerationExample {
  std::string dialogue_id;
  int turn_index = 0;
  std::vector<std::pair<std::string, std::string>> context;  // (hate, counter), oldest first
  std::string query;
  std::string response;
  Topic topic = Topic::kMuslims;
};

enum class CorpusFormat {
  kCanonical,   // JSON Lines, one dialogue per line
  kDialoconan,  // CSV rows: dialogue_id, turn_id, text, type (HS|CN), target
  kConanPairs,  // CSV rows of single hate/counter pairs
};

inline std::optional<CorpusFormat> parse_corpus_format(std::string_view s) {
  if (s == "canonical" || s == "jsonl") return CorpusFormat::kCanonical;
  if (s == "dialoconan") return CorpusFormat::kDialoconan;
  if (s == "conan_pairs" || s == "conan") return CorpusFormat::kConanPairs;
  return std::nullopt;
}

namespace detail {

inline std::string require_text(std::string_view raw, std::string_view what) {
  std::string t = normalize_whitespace(raw);
  if (t.empty()) throw SchemaError(std::string(what) + " is empty after normalization");
  return t;
}

inline const nlohmann::json& require_field(const nlohmann::json& obj, const char* field, std::string_view where) {
  if (!obj.is_object() || !obj.contains(field)) throw SchemaError(std::string(where) + ": missing field '" + field + "'");
  return obj.at(field);
}

inline std::string require_string(const nlohmann::json& obj, const char* field, std::string_view where) {
  const auto& v = require_field(obj, field, where);
  if (!v.is_string()) throw SchemaError(std::string(where) + ": field '" + field + "' must be a string");
  return v.get<std::string>();
}

// Maps lowercased header names to column indices.
inline std::map<std::string, size_t> header_index(const csv::Row& header) {
  std::map<std::string, size_t> idx;
  for (size_t i = 0; i < header.size(); ++i) idx.emplace(to_lower(normalize_whitespace(header[i])), i);
  return idx;
}

inline size_t require_column(const std::map<std::string, size_t>& idx, std::initializer_list<const char*> names) {
  for (const char* n : names)
    if (auto it = idx.find(n); it != idx.end()) return it->second;
  throw SchemaError(std::string("missing required column '") + *names.begin() + "'");
}

inline std::optional<size_t> optional_column(const std::map<std::string, size_t>& idx,
                                             std::initializer_list<const char*> names) {
  for (const char* n : names)
    if (auto it = idx.find(n); it != idx.end()) return it->second;
  return std::nullopt;
}

inline const std::string& cell(const csv::Row& row, size_t col, size_t line) {
  if (col >= row.size()) throw SchemaError("row " + std::to_string(line) + " has too few columns");
  return row[col];
}

inline DialogueCorpus read_canonical(std::istream& in) {
  DialogueCorpus corpus;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (normalize_whitespace(line).empty()) continue;
    const std::string where = "line " + std::to_string(line_no);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw SchemaError(where + ": " + e.what());
    }
    Dialogue d;
    d.dialogue_id = require_string(j, "dialogue_id", where);
    d.topic = require_topic(require_string(j, "topic", where), where);
    const auto& turns = require_field(j, "turns", where);
    if (!turns.is_array() || turns.empty()) throw SchemaError(where + ": 'turns' must be a non-empty array");
    for (const auto& t : turns) {
      Turn turn;
      turn.turn_index = static_cast<int>(d.turns.size());
      turn.hate_text = require_text(require_string(t, "hate", where), where + " hate");
      turn.counter_text = require_text(require_string(t, "counter", where), where + " counter");
      turn.topic = d.topic;
      d.turns.push_back(std::move(turn));
    }
    corpus.dialogues.push_back(std::move(d));
  }
  return corpus;
}

inline DialogueCorpus read_dialoconan(std::istream& in) {
  auto rows = csv::read(in);
  if (rows.empty()) return {};
  const auto idx = header_index(rows[0]);
  const size_t c_id = require_column(idx, {"dialogue_id"});
  const size_t c_turn = require_column(idx, {"turn_id"});
  const size_t c_text = require_column(idx, {"text"});
  const size_t c_type = require_column(idx, {"type"});
  const size_t c_target = require_column(idx, {"target"});

  struct Message {
    int turn_id;
    bool hate;
    std::string text;
  };
  std::vector<std::string> order;
  std::map<std::string, std::pair<Topic, std::vector<Message>>> grouped;
  for (size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    const std::string id = normalize_whitespace(cell(row, c_id, r));
    const std::string type = to_lower(normalize_whitespace(cell(row, c_type, r)));
    if (type != "hs" && type != "cn") throw SchemaError("row " + std::to_string(r) + ": type must be HS or CN");
    int turn_id = 0;
    try {
      turn_id = std::stoi(cell(row, c_turn, r));
    } catch (const std::exception&) {
      throw SchemaError("row " + std::to_string(r) + ": turn_id is not an integer");
    }
    const Topic topic = require_topic(cell(row, c_target, r), "row " + std::to_string(r));
    auto [it, inserted] = grouped.try_emplace(id, topic, std::vector<Message>{});
    if (inserted) order.push_back(id);
    if (it->second.first != topic) throw SchemaError("dialogue " + id + " mixes topics");
    it->second.second.push_back({turn_id, type == "hs", normalize_whitespace(cell(row, c_text, r))});
  }

  DialogueCorpus corpus;
  for (const auto& id : order) {
    auto& [topic, messages] = grouped[id];
    std::stable_sort(messages.begin(), messages.end(), [](auto& a, auto& b) { return a.turn_id < b.turn_id; });
    Dialogue d{id, topic, {}};
    std::string hate, counter;
    auto flush = [&] {
      if (!hate.empty() && !counter.empty()) {
        d.turns.push_back({static_cast<int>(d.turns.size()), hate, counter, topic});
      }
      hate.clear();
      counter.clear();
    };
    for (const auto& m : messages) {
      if (m.text.empty()) continue;
      if (m.hate) {
        if (!counter.empty()) flush();
        hate = hate.empty() ? m.text : hate + " " + m.text;
      } else {
        if (hate.empty()) throw SchemaError("dialogue " + id + ": counter message before any hate message");
        counter = counter.empty() ? m.text : counter + " " + m.text;
      }
    }
    flush();  // a trailing unanswered hate message is dropped
    if (!d.turns.empty()) corpus.dialogues.push_back(std::move(d));
  }
  return corpus;
}

inline DialogueCorpus read_conan_pairs(std::istream& in) {
  auto rows = csv::read(in);
  if (rows.empty()) return {};
  const auto idx = header_index(rows[0]);
  const size_t c_hate = require_column(idx, {"hate_speech", "hate", "hs"});
  const size_t c_counter = require_column(idx, {"counter_narrative", "counter", "cn"});
  const auto c_target = optional_column(idx, {"target", "topic"});
  DialogueCorpus corpus;
  for (size_t r = 1; r < rows.size(); ++r) {
    const std::string where = "row " + std::to_string(r);
    // CONAN proper is Islamophobia-only, hence the default.
    const Topic topic = c_target ? require_topic(cell(rows[r], *c_target, r), where) : Topic::kMuslims;
    Turn t{0, require_text(cell(rows[r], c_hate, r), where + " hate"),
           require_text(cell(rows[r], c_counter, r), where + " counter"), topic};
    corpus.dialogues.push_back({"conan-" + std::to_string(r - 1), topic, {std::move(t)}});
  }
  return corpus;
}

}  // namespace detail

inline DialogueCorpus read_dialogue_corpus(std::istream& in, CorpusFormat format) {
  DialogueCorpus corpus;
  switch (format) {
    case CorpusFormat::kCanonical: corpus = detail::read_canonical(in); break;
    case CorpusFormat::kDialoconan: corpus = detail::read_dialoconan(in); break;
    case CorpusFormat::kConanPairs: corpus = detail::read_conan_pairs(in); break;
  }
  if (corpus.empty()) throw EmptyCorpusError("corpus contains no dialogues");
  return corpus;
}

inline DialogueCorpus load_dialogue_corpus(const std::filesystem::path& path, CorpusFormat format) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open corpus file " + path.string());
  return read_dialogue_corpus(in, format);
}

inline nlohmann::json dialogue_to_json(const Dialogue& d) {
  nlohmann::json turns = nlohmann::json::array();
  for (const auto& t : d.turns) turns.push_back({{"hate", t.hate_text}, {"counter", t.counter_text}});
  return {{"dialogue_id", d.dialogue_id}, {"topic", std::string(topic_name(d.topic))}, {"turns", std::move(turns)}};
}

inline void write_dialogue_corpus(std::ostream& out, const DialogueCorpus& corpus) {
  for (const auto& d : corpus.dialogues) out << dialogue_to_json(d).dump() << '\n';
}

inline void save_dialogue_corpus(const std::filesystem::path& path, const DialogueCorpus& corpus) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  write_dialogue_corpus(out, corpus);
}

// One example per turn; the context holds every strictly earlier turn.
inline std::vector<GenerationExample> build_generation_examples(const DialogueCorpus& corpus) {
  std::vector<GenerationExample> out;
  out.reserve(corpus.turn_count());
  for (const auto& d : corpus.dialogues) {
    std::vector<std::pair<std::string, std::string>> context;
    for (const auto& t : d.turns) {
      out.push_back({d.dialogue_id, t.turn_index, context, t.hate_text, t.counter_text, d.topic});
      context.emplace_back(t.hate_text, t.counter_text);
    }
  }
  return out;
}

}  // namespace cspeech
