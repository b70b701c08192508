#pragma once

// Human-value hierarchy (aspects > value categories > values > descriptor
// sentences) and construction of training data for the three value
// detection models.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "cspeech/error.hpp"
#include "cspeech/random.hpp"
#include "cspeech/text.hpp"
#include "json.hpp"

namespace cspeech {

inline constexpr int kOfficialL3Count = 4;
inline constexpr int kOfficialL2Count = 20;
inline constexpr int kOfficialDescriptorCount = 218;

// The value categories used as features downstream.
inline const std::vector<std::string>& top_value_categories() {
  static const std::vector<std::string> names = {"Achievement",           "Benevolence: caring",
                                                 "Security: personal",    "Security: societal",
                                                 "Self-direction: action", "Universalism: concern"};
  return names;
}

class ValueTaxonomy {
 public:
  struct Descriptor {
    std::string text;
    int l1 = 0;
  };

  struct LoadOptions {
    // Enforce the 4 / 20 / 218 cardinalities of the released hierarchy.
    bool require_official_cardinality;
    LoadOptions(bool strict = false) : require_official_cardinality(strict) {}
  };

  static ValueTaxonomy from_json(const nlohmann::ordered_json& j, LoadOptions options = LoadOptions()) {
    ValueTaxonomy t;
    std::vector<std::string> problems;
    auto need = [&](const char* key) -> const nlohmann::ordered_json& {
      if (!j.contains(key)) throw TaxonomyError(std::string("taxonomy file lacks '") + key + "'");
      return j.at(key);
    };
    for (const auto& name : need("l3")) t.add_unique(t.l3_, t.l3_index_, name.get<std::string>(), "L3", problems);
    for (const auto& [name, parent] : need("l2").items()) {
      const int id = t.add_unique(t.l2_, t.l2_index_, name, "L2", problems);
      auto it = t.l3_index_.find(parent.get<std::string>());
      if (it == t.l3_index_.end()) {
        problems.push_back("L2 '" + name + "' has unknown L3 parent '" + parent.get<std::string>() + "'");
        t.l2_parent_.push_back(-1);
      } else if (id == static_cast<int>(t.l2_parent_.size())) {
        t.l2_parent_.push_back(it->second);
      }
    }
    for (const auto& [name, parent] : need("l1").items()) {
      const int id = t.add_unique(t.l1_, t.l1_index_, name, "L1", problems);
      auto it = t.l2_index_.find(parent.get<std::string>());
      if (it == t.l2_index_.end()) {
        problems.push_back("L1 '" + name + "' has unknown L2 parent '" + parent.get<std::string>() + "'");
        t.l1_parent_.push_back(-1);
      } else if (id == static_cast<int>(t.l1_parent_.size())) {
        t.l1_parent_.push_back(it->second);
      }
    }
    for (const auto& [text, parent] : need("descriptors").items()) {
      const std::string parent_name = parent.is_string() ? parent.get<std::string>() : std::string();
      auto it = t.l1_index_.find(parent_name);
      if (parent_name.empty() || it == t.l1_index_.end()) {
        problems.push_back("descriptor '" + text + "' has no valid L1 parent" +
                           (parent_name.empty() ? std::string() : " ('" + parent_name + "')"));
        continue;
      }
      t.descriptors_.push_back({normalize_whitespace(text), it->second});
    }
    if (problems.empty()) t.index();
    for (size_t l2 = 0; problems.empty() && l2 < t.l2_.size(); ++l2)
      if (t.descriptors_by_l2_[l2].empty()) problems.push_back("L2 '" + t.l2_[l2] + "' has no descriptors");
    if (options.require_official_cardinality) {
      auto check = [&](const char* what, size_t got, int want) {
        if (static_cast<int>(got) != want)
          problems.push_back(std::string(what) + " count " + std::to_string(got) + " != " + std::to_string(want));
      };
      check("L3", t.l3_.size(), kOfficialL3Count);
      check("L2", t.l2_.size(), kOfficialL2Count);
      check("descriptor", t.descriptors_.size(), kOfficialDescriptorCount);
    }
    if (!problems.empty()) throw TaxonomyError("invalid taxonomy: " + join(problems, "; "));
    t.hash_ = fingerprint(j.dump());
    return t;
  }

  static ValueTaxonomy load(const std::filesystem::path& path, LoadOptions options = LoadOptions()) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open taxonomy file " + path.string());
    nlohmann::ordered_json j;
    try {
      j = nlohmann::ordered_json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw TaxonomyError(path.string() + ": " + e.what());
    }
    return from_json(j, options);
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["l3"] = l3_;
    for (size_t i = 0; i < l2_.size(); ++i) j["l2"][l2_[i]] = l3_[l2_parent_[i]];
    for (size_t i = 0; i < l1_.size(); ++i) j["l1"][l1_[i]] = l2_[l1_parent_[i]];
    for (const auto& d : descriptors_) j["descriptors"][d.text] = l1_[d.l1];
    return j;
  }

  int l3_count() const { return static_cast<int>(l3_.size()); }
  int l2_count() const { return static_cast<int>(l2_.size()); }
  int l1_count() const { return static_cast<int>(l1_.size()); }
  int descriptor_count() const { return static_cast<int>(descriptors_.size()); }

  const std::string& l3_name(int i) const { return l3_.at(i); }
  const std::string& l2_name(int i) const { return l2_.at(i); }
  const std::string& l1_name(int i) const { return l1_.at(i); }
  const Descriptor& descriptor(int i) const { return descriptors_.at(i); }
  const std::vector<Descriptor>& descriptors() const { return descriptors_; }

  int l3_of_l2(int l2) const { return l2_parent_.at(l2); }
  int l2_of_l1(int l1) const { return l1_parent_.at(l1); }
  int l1_of_descriptor(int d) const { return descriptors_.at(d).l1; }
  int l2_of_descriptor(int d) const { return l2_of_l1(l1_of_descriptor(d)); }

  const std::vector<int>& descriptors_of_l1(int l1) const { return descriptors_by_l1_.at(l1); }
  const std::vector<int>& descriptors_of_l2(int l2) const { return descriptors_by_l2_.at(l2); }
  const std::vector<int>& l1s_of_l2(int l2) const { return l1s_by_l2_.at(l2); }

  std::optional<int> find_l2(const std::string& name) const {
    auto it = l2_index_.find(name);
    if (it == l2_index_.end()) return std::nullopt;
    return it->second;
  }
  std::optional<int> find_l1(const std::string& name) const {
    auto it = l1_index_.find(name);
    if (it == l1_index_.end()) return std::nullopt;
    return it->second;
  }

  // Stable fingerprint of the source document, recorded in checkpoints.
  const std::string& hash() const { return hash_; }

  // The top value categories when all are present, otherwise every L2 in
  // file order (toy hierarchies).
  std::vector<int> target_l2() const {
    std::vector<int> out;
    for (const auto& name : top_value_categories())
      if (auto id = find_l2(name)) out.push_back(*id);
    if (out.size() == top_value_categories().size()) return out;
    out.clear();
    for (int i = 0; i < l2_count(); ++i) out.push_back(i);
    return out;
  }

 private:
  int add_unique(std::vector<std::string>& names, std::unordered_map<std::string, int>& index, const std::string& name,
                 const char* level, std::vector<std::string>& problems) {
    auto [it, inserted] = index.emplace(name, static_cast<int>(names.size()));
    if (!inserted) {
      problems.push_back(std::string("duplicate ") + level + " '" + name + "'");
      return -1;
    }
    names.push_back(name);
    return it->second;
  }

  void index() {
    descriptors_by_l1_.assign(l1_.size(), {});
    descriptors_by_l2_.assign(l2_.size(), {});
    l1s_by_l2_.assign(l2_.size(), {});
    for (size_t i = 0; i < l1_.size(); ++i) l1s_by_l2_[l1_parent_[i]].push_back(static_cast<int>(i));
    for (size_t d = 0; d < descriptors_.size(); ++d) {
      descriptors_by_l1_[descriptors_[d].l1].push_back(static_cast<int>(d));
      descriptors_by_l2_[l1_parent_[descriptors_[d].l1]].push_back(static_cast<int>(d));
    }
  }

  std::vector<std::string> l3_, l2_, l1_;
  std::unordered_map<std::string, int> l3_index_, l2_index_, l1_index_;
  std::vector<int> l2_parent_, l1_parent_;
  std::vector<Descriptor> descriptors_;
  std::vector<std::vector<int>> descriptors_by_l1_, descriptors_by_l2_, l1s_by_l2_;
  std::string hash_;
};

// Descriptor indices. `hard_negative` is a second easy negative when the
// anchor's category has only one value.
struct Quadruple {
  int anchor = 0;
  int positive = 0;
  int easy_negative = 0;
  int hard_negative = 0;
  bool hard_is_fallback = false;

  bool operator==(const Quadruple&) const = default;
};

struct QuadrupleOptions {
  int total = 702;
  int count_per_descriptor = 0;  // when > 0, total = count * eligible anchors
  double train_fraction = 0.9;
  std::uint64_t seed = 0;
};

struct QuadrupleSet {
  std::vector<Quadruple> train;
  std::vector<Quadruple> validation;
  std::vector<int> skipped_anchors;  // anchors whose value has a single descriptor
  int hard_fallbacks = 0;

  size_t size() const { return train.size() + validation.size(); }
};

inline QuadrupleSet sample_quadruples(const ValueTaxonomy& tax, const QuadrupleOptions& options) {
  QuadrupleSet out;
  std::vector<int> eligible;
  for (int d = 0; d < tax.descriptor_count(); ++d) {
    if (tax.descriptors_of_l1(tax.l1_of_descriptor(d)).size() >= 2) eligible.push_back(d);
    else out.skipped_anchors.push_back(d);
  }
  if (eligible.empty()) throw TaxonomyError("no value has two or more descriptors; cannot form positives");
  if (tax.l2_count() < 2) throw TaxonomyError("easy negatives need at least two value categories");
  const size_t total = options.count_per_descriptor > 0
                           ? static_cast<size_t>(options.count_per_descriptor) * eligible.size()
                           : static_cast<size_t>(std::max(options.total, 0));

  Rng rng(options.seed);
  auto pick_other = [&](const std::vector<int>& pool, std::initializer_list<int> exclude) {
    std::vector<int> c;
    for (int x : pool)
      if (std::find(exclude.begin(), exclude.end(), x) == exclude.end()) c.push_back(x);
    return c.empty() ? -1 : c[uniform_index(rng, c.size())];
  };
  auto easy_pool = [&](int anchor) {
    std::vector<int> pool;
    const int l2 = tax.l2_of_descriptor(anchor);
    for (int d = 0; d < tax.descriptor_count(); ++d)
      if (tax.l2_of_descriptor(d) != l2) pool.push_back(d);
    return pool;
  };
  auto hard_pool = [&](int anchor) {
    std::vector<int> pool;
    const int l1 = tax.l1_of_descriptor(anchor);
    for (int d : tax.descriptors_of_l2(tax.l2_of_descriptor(anchor)))
      if (tax.l1_of_descriptor(d) != l1) pool.push_back(d);
    return pool;
  };

  std::vector<Quadruple> all;
  all.reserve(total);
  std::vector<int> pass = eligible;
  while (all.size() < total) {
    shuffle(pass, rng);
    for (int anchor : pass) {
      if (all.size() >= total) break;
      Quadruple q;
      q.anchor = anchor;
      q.positive = pick_other(tax.descriptors_of_l1(tax.l1_of_descriptor(anchor)), {anchor});
      const auto easy = easy_pool(anchor);
      q.easy_negative = pick_other(easy, {});
      const auto hard = hard_pool(anchor);
      if (hard.empty()) {
        q.hard_negative = pick_other(easy, {q.easy_negative});
        if (q.hard_negative < 0) q.hard_negative = q.easy_negative;
        q.hard_is_fallback = true;
        ++out.hard_fallbacks;
      } else {
        q.hard_negative = pick_other(hard, {});
      }
      all.push_back(q);
    }
  }
  shuffle(all, rng);
  const auto n_train = static_cast<size_t>(std::llround(options.train_fraction * static_cast<double>(all.size())));
  out.train.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n_train));
  out.validation.assign(all.begin() + static_cast<std::ptrdiff_t>(n_train), all.end());
  return out;
}

// An argument with gold value-category labels. `l1_labels` is optional in
// the input file.
struct LabeledArgument {
  std::string text;
  std::vector<std::string> l2_labels;
  std::vector<std::string> l1_labels;
};

inline std::vector<LabeledArgument> read_labeled_arguments(std::istream& in) {
  std::vector<LabeledArgument> out;
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
    if (!j.contains("text") || !j["text"].is_string()) throw SchemaError(where + ": missing field 'text'");
    if (!j.contains("l2_labels") || !j["l2_labels"].is_array()) throw SchemaError(where + ": missing field 'l2_labels'");
    LabeledArgument a;
    a.text = normalize_whitespace(j["text"].get<std::string>());
    a.l2_labels = j["l2_labels"].get<std::vector<std::string>>();
    if (j.contains("l1_labels")) a.l1_labels = j["l1_labels"].get<std::vector<std::string>>();
    out.push_back(std::move(a));
  }
  return out;
}

inline std::vector<LabeledArgument> load_labeled_arguments(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open argument file " + path.string());
  return read_labeled_arguments(in);
}

inline std::set<int> gold_l2_ids(const LabeledArgument& a, const ValueTaxonomy& tax) {
  std::set<int> ids;
  for (const auto& name : a.l2_labels) {
    auto id = tax.find_l2(name);
    if (!id) throw SchemaError("argument label '" + name + "' is not an L2 category of the taxonomy");
    ids.insert(*id);
  }
  return ids;
}

struct EntailmentPair {
  std::string argument;
  int descriptor = 0;
  int label = 0;
};

struct SimilarityPair {
  std::string argument;
  int descriptor = 0;
  int label = 0;
};

struct PairOptions {
  // Negatives per positive for entailment pairs.
  double negative_ratio = 1.0;
  // Negatives drawn for an argument that has no gold labels.
  int min_negatives = 1;
  std::uint64_t seed = 0;
};

// Positives: every descriptor under a gold category. Negatives: sampled
// without replacement from descriptors outside all gold categories.
inline std::vector<EntailmentPair> build_entailment_pairs(const std::vector<LabeledArgument>& arguments,
                                                          const ValueTaxonomy& tax, const PairOptions& options = {}) {
  std::vector<EntailmentPair> out;
  for (size_t i = 0; i < arguments.size(); ++i) {
    const auto& arg = arguments[i];
    const auto gold = gold_l2_ids(arg, tax);
    std::vector<int> negatives;
    size_t n_pos = 0;
    for (int d = 0; d < tax.descriptor_count(); ++d) {
      if (gold.count(tax.l2_of_descriptor(d))) {
        out.push_back({arg.text, d, 1});
        ++n_pos;
      } else {
        negatives.push_back(d);
      }
    }
    Rng rng(derive_seed(options.seed, i));
    shuffle(negatives, rng);
    size_t n_neg = n_pos == 0 ? static_cast<size_t>(std::max(options.min_negatives, 0))
                              : static_cast<size_t>(std::llround(options.negative_ratio * static_cast<double>(n_pos)));
    n_neg = std::min(n_neg, negatives.size());
    for (size_t k = 0; k < n_neg; ++k) out.push_back({arg.text, negatives[k], 0});
  }
  return out;
}

// Per argument with K gold descriptors: K positives, and K negatives formed
// by drawing one descriptor from every non-gold value and keeping K of them.
inline std::vector<SimilarityPair> build_similarity_pairs(const std::vector<LabeledArgument>& arguments,
                                                          const ValueTaxonomy& tax, const PairOptions& options = {}) {
  std::vector<SimilarityPair> out;
  for (size_t i = 0; i < arguments.size(); ++i) {
    const auto& arg = arguments[i];
    const auto gold = gold_l2_ids(arg, tax);
    Rng rng(derive_seed(options.seed, i));
    size_t k = 0;
    for (int d = 0; d < tax.descriptor_count(); ++d)
      if (gold.count(tax.l2_of_descriptor(d))) {
        out.push_back({arg.text, d, 1});
        ++k;
      }
    std::vector<int> candidates;
    for (int l1 = 0; l1 < tax.l1_count(); ++l1) {
      if (gold.count(tax.l2_of_l1(l1))) continue;
      const auto& pool = tax.descriptors_of_l1(l1);
      if (!pool.empty()) candidates.push_back(pool[uniform_index(rng, pool.size())]);
    }
    shuffle(candidates, rng);
    const size_t want = k == 0 ? static_cast<size_t>(std::max(options.min_negatives, 0)) : k;
    for (size_t n = 0; n < std::min(want, candidates.size()); ++n) out.push_back({arg.text, candidates[n], 0});
  }
  return out;
}

}  // namespace cspeech
