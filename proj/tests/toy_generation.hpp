#pragma once

// Synthetic corpora where control codes determine the response.

#include <string>
#include <vector>

#include "cspeech/generator.hpp"
#include "toy.hpp"

namespace cspeech::toy {

inline const std::vector<std::string>& response_templates() {
  static const std::vector<std::string> t = {
      "that is simply cruel and wrong", "the numbers say otherwise", "you do the same thing yourself",
      "many of them help their neighbours", "why do you think so ?"};
  return t;
}

// The response is the template of the single argtype code on the counter
// side; queries are filler and carry no information about it.
struct TemplateExample {
  AnnotatedExample example;
  int template_index = 0;
};

inline std::vector<TemplateExample> template_examples(int count, std::uint64_t seed) {
  const auto& codes = FeatureVocabulary::standard().codes(Family::kArgType);
  Rng rng(seed);
  std::vector<TemplateExample> out;
  for (int i = 0; i < count; ++i) {
    const int k = static_cast<int>(uniform_index(rng, codes.size()));
    GenerationExample g;
    g.dialogue_id = "t" + std::to_string(seed) + "_" + std::to_string(i);
    g.query = "they " + filler(rng, 3);
    g.response = response_templates()[static_cast<size_t>(k)];
    out.push_back({{g, {}, {codes[static_cast<size_t>(k)]}}, k});
  }
  return out;
}

inline std::vector<AnnotatedExample> examples_of(const std::vector<TemplateExample>& items) {
  std::vector<AnnotatedExample> out;
  for (const auto& i : items) out.push_back(i.example);
  return out;
}

// Responses concatenate one fragment per family, each picked by that
// family's response code. Query codes always differ from response codes so
// every response code survives the delta.
inline std::vector<AnnotatedExample> four_family_examples(int dialogues, std::uint64_t seed) {
  const auto& fv = FeatureVocabulary::standard();
  Rng rng(seed);
  std::vector<AnnotatedExample> out;
  for (int d = 0; d < dialogues; ++d) {
    const int turns = 1 + static_cast<int>(uniform_index(rng, 2));
    std::vector<std::pair<std::string, std::string>> context;
    for (int t = 0; t < turns; ++t) {
      AnnotatedExample e;
      e.example.dialogue_id = "f" + std::to_string(d);
      e.example.turn_index = t;
      e.example.context = context;
      e.example.query = "they " + filler(rng, 3);
      std::vector<std::string> fragments;
      for (Family f : kAllFamilies) {
        const std::string tag = std::to_string(static_cast<int>(f));
        const auto& codes = fv.codes(f);
        const size_t r = uniform_index(rng, codes.size());
        const size_t q = (r + 1 + uniform_index(rng, codes.size() - 1)) % codes.size();
        e.response_features.insert(codes[r]);
        e.query_features.insert(codes[q]);
        fragments.push_back("p" + tag + std::to_string(r) + " q" + tag + std::to_string(r));
      }
      e.example.response = join(fragments, " ");
      context.emplace_back(e.example.query, e.example.response);
      out.push_back(e);
    }
  }
  return out;
}

inline bool matches_template(const std::string& generated, int k) {
  return tokenize(generated) == tokenize(response_templates()[static_cast<size_t>(k)]);
}

}  // namespace cspeech::toy
