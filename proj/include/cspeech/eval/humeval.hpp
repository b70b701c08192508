#pragma once

// Blinded rating sheets for variants that beat the baseline on BLEU.

#include <algorithm>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "cspeech/csv.hpp"
#include "cspeech/eval/grid.hpp"
#include "cspeech/random.hpp"

namespace cspeech::eval {

inline constexpr int kAnnotatorsPerItem = 2;

struct PacketItem {
  std::string item_id;
  std::string blinded_variant;
  std::string context;
  std::string response;
};

struct HumanEvalPackets {
  std::vector<PacketItem> items;
  std::map<std::string, int> blinding_key;  // blinded id -> grid row id
  std::vector<std::string> warnings;
};

inline std::string format_context(const GeneratedItem& g) {
  std::string out;
  for (const auto& [h, c] : g.context) out += std::string(kHateMarker) + " " + h + " " + kCounterMarker + " " + c + " ";
  return out + kHateMarker + " " + g.query;
}

// Variants whose BLEU exceeds the baseline's (row 1). Each contributes the
// same `sample_size` evaluation items, drawn once from `seed`; the sheet
// order is shuffled and variant names are replaced by opaque ids.
inline HumanEvalPackets export_human_eval_packets(const std::vector<MetricReport>& reports,
                                                  const std::map<int, std::vector<GeneratedItem>>& generations,
                                                  size_t sample_size, std::uint64_t seed) {
  const auto baseline = std::find_if(reports.begin(), reports.end(), [](const MetricReport& r) { return r.id == 1; });
  if (baseline == reports.end() || baseline->failed())
    throw ConfigError("human evaluation export needs a scored baseline row");
  std::vector<int> eligible;
  for (const auto& r : reports)
    if (!r.failed() && r.id != 1 && r.bleu > baseline->bleu) eligible.push_back(r.id);
  HumanEvalPackets packets;
  if (eligible.empty()) {
    packets.warnings.push_back("no variant beats the baseline BLEU; nothing to export");
    return packets;
  }
  size_t available = std::numeric_limits<size_t>::max();
  for (int id : eligible) {
    auto it = generations.find(id);
    available = std::min(available, it == generations.end() ? size_t{0} : it->second.size());
  }
  if (sample_size > available) {
    packets.warnings.push_back("sample size " + std::to_string(sample_size) + " capped to " +
                               std::to_string(available) + " available generations");
    sample_size = available;
  }
  Rng rng(seed);
  std::vector<size_t> positions(available);
  std::iota(positions.begin(), positions.end(), 0);
  shuffle(positions, rng);
  positions.resize(sample_size);
  std::sort(positions.begin(), positions.end());

  std::vector<int> blind_order = eligible;
  shuffle(blind_order, rng);
  std::map<int, std::string> blinded;
  for (size_t i = 0; i < blind_order.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "S%02zu", i + 1);
    blinded[blind_order[i]] = name;
    packets.blinding_key[name] = blind_order[i];
  }
  for (int id : eligible)
    for (size_t p : positions) {
      const auto& g = generations.at(id)[p];
      packets.items.push_back({"", blinded[id], format_context(g), g.response});
    }
  shuffle(packets.items, rng);
  for (size_t i = 0; i < packets.items.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "item-%04zu", i + 1);
    packets.items[i].item_id = name;
  }
  return packets;
}

// Legend lines start with '#'; rating cells are left empty.
inline void write_packets_csv(std::ostream& out, const HumanEvalPackets& packets) {
  out << "# arg: argumentativeness, integer 1 (low) to 5 (high)\n"
      << "# flu: fluency, 0 = not fluent, 1 = fluent\n"
      << "# hal: hallucination, 0 = sound, 1 = contains made-up facts or illogical claims\n";
  std::vector<std::string> header{"item_id", "blinded_variant", "context", "response"};
  for (int a = 1; a <= kAnnotatorsPerItem; ++a)
    for (const char* field : {"arg", "flu", "hal"}) header.push_back(std::string(field) + "_" + std::to_string(a));
  csv::write_row(out, header, ',');
  for (const auto& item : packets.items) {
    std::vector<std::string> row{item.item_id, item.blinded_variant, item.context, item.response};
    row.resize(header.size());
    csv::write_row(out, row, ',');
  }
}

inline void write_blinding_key_csv(std::ostream& out, const HumanEvalPackets& packets) {
  csv::write_row(out, {"blinded_variant", "grid_row"}, ',');
  for (const auto& [name, id] : packets.blinding_key) csv::write_row(out, {name, std::to_string(id)}, ',');
}

}  // namespace cspeech::eval
