#pragma once

// Trains and scores one generator per combination of feature families.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <ostream>
#include <thread>
#include <vector>

#include "cspeech/eval/metrics.hpp"
#include "cspeech/generator.hpp"

namespace cspeech::eval {

namespace fs = std::filesystem;

struct GridRow {
  int id = 0;
  std::set<Family> families;
  std::string features;  // as printed in the report

  // Baseline, Val (big5/humVal only), Struct (argSch/argType only) or Val+Struct.
  std::string type() const {
    if (families.empty()) return "Baseline";
    const bool val = families.count(Family::kBig5) || families.count(Family::kHumVal);
    const bool structure = families.count(Family::kScheme) || families.count(Family::kArgType);
    return val && structure ? "Val+Struct" : val ? "Val" : "Struct";
  }
};

// All 16 subsets: baseline, singles, pairs, triples, all.
inline const std::vector<GridRow>& grid_rows() {
  using F = Family;
  static const std::vector<GridRow> rows = {
      {1, {}, "None"},
      {2, {F::kBig5}, "big5"},
      {3, {F::kHumVal}, "humVal"},
      {4, {F::kScheme}, "argSch"},
      {5, {F::kArgType}, "argType"},
      {6, {F::kHumVal, F::kBig5}, "humVal+big5"},
      {7, {F::kScheme, F::kArgType}, "argSch+argType"},
      {8, {F::kScheme, F::kBig5}, "argSch+big5"},
      {9, {F::kHumVal, F::kScheme}, "humVal+argSch"},
      {10, {F::kHumVal, F::kArgType}, "humVal+argType"},
      {11, {F::kBig5, F::kArgType}, "big5+argType"},
      {12, {F::kHumVal, F::kBig5, F::kScheme}, "humVal+big5+argSch"},
      {13, {F::kHumVal, F::kBig5, F::kArgType}, "humVal+big5+argType"},
      {14, {F::kBig5, F::kScheme, F::kArgType}, "big5+argSch+argType"},
      {15, {F::kHumVal, F::kScheme, F::kArgType}, "humVal+argSch+argType"},
      {16, {F::kBig5, F::kHumVal, F::kScheme, F::kArgType}, "All"}};
  return rows;
}

inline const GridRow& grid_row(int id) {
  for (const auto& r : grid_rows())
    if (r.id == id) return r;
  throw ConfigError("no grid row with id " + std::to_string(id));
}

struct MetricReport {
  int id = 0;
  std::string type;
  std::string features;
  double bleu = std::numeric_limits<double>::quiet_NaN();
  double rouge_l = std::numeric_limits<double>::quiet_NaN();  // 0-100
  double perplexity = std::numeric_limits<double>::quiet_NaN();
  size_t samples = 0;
  std::optional<std::string> error;  // set when the row failed

  bool failed() const { return error.has_value(); }

  nlohmann::json to_json() const {
    nlohmann::json j = {{"id", id}, {"type", type}, {"features", features}, {"samples", samples}};
    if (failed()) {
      j["error"] = *error;
    } else {
      j["bleu"] = bleu;
      j["rouge_l"] = rouge_l;
      j["perplexity"] = perplexity;
    }
    return j;
  }
};

struct GeneratedItem {
  size_t index = 0;  // position in the evaluation set
  std::vector<std::pair<std::string, std::string>> context;
  std::string query;
  std::string reference;
  std::string response;
};

struct GridOptions {
  Seq2SeqSpec spec;
  GenerationConfig generation;  // families are set per row
  nn::TrainingConfig training;
  std::uint64_t seed = 0;       // model initialization, same for every row
  std::vector<int> rows;        // empty = all 16
  int workers = 1;
  std::optional<fs::path> output_dir;  // per-row checkpoints and generations
};

struct GridResult {
  std::vector<MetricReport> reports;
  std::map<int, std::vector<GeneratedItem>> generations;  // by row id
};

// Trains the row's variant on `train` (early stopping on `validation`) and
// scores it on `test`. Decoding asks for the gold response features of the
// row's families and passes the gold query features.
inline MetricReport run_grid_row(const GridRow& row, const std::vector<AnnotatedExample>& train,
                                 const std::vector<AnnotatedExample>& validation,
                                 const std::vector<AnnotatedExample>& test, const GridOptions& options,
                                 std::vector<GeneratedItem>* generations) {
  MetricReport report{row.id, row.type(), row.features};
  try {
    if (test.empty()) throw EmptyCorpusError("grid: empty evaluation set");
    GenerationConfig gen = options.generation;
    gen.families = row.families;
    Generator generator(build_generator_vocabulary(train, row.families), options.spec, gen, options.seed);
    generator.train(train, validation, options.training);
    std::vector<std::string> hypotheses, references;
    std::vector<GeneratorBatch> batches;
    const auto& fv = FeatureVocabulary::standard();
    for (size_t i = 0; i < test.size(); ++i) {
      const auto& e = test[i];
      GenerationRequest request{e.example.context, e.example.query, fv.filter(e.response_features, row.families),
                                e.query_features};
      const auto result = generator.generate(request);
      hypotheses.push_back(result.response);
      references.push_back(e.example.response);
      batches.push_back(generator.batch(e));
      if (generations)
        generations->push_back({i, e.example.context, e.example.query, e.example.response, result.response});
    }
    report.bleu = corpus_bleu(hypotheses, references);
    report.rouge_l = 100.0 * mean_rouge_l(hypotheses, references);
    report.perplexity = perplexity(generator, batches);
    report.samples = test.size();
    if (options.output_dir) {
      char name[32];
      std::snprintf(name, sizeof name, "row_%02d", row.id);
      const fs::path dir = *options.output_dir / name;
      generator.save(dir / "checkpoint");
      nn::write_json(dir / "report.json", report.to_json());
      std::ofstream out(dir / "generations.jsonl");
      for (size_t i = 0; i < hypotheses.size(); ++i)
        out << nlohmann::json{{"index", i}, {"reference", references[i]}, {"response", hypotheses[i]}}.dump() << "\n";
    }
  } catch (const std::exception& ex) {
    report.error = ex.what();
    report.bleu = report.rouge_l = report.perplexity = std::numeric_limits<double>::quiet_NaN();
    report.samples = 0;
    if (generations) generations->clear();
  }
  return report;
}

// Rows are independent; with several workers they train concurrently and the
// results are identical to a sequential run.
inline GridResult run_feature_grid(const std::vector<AnnotatedExample>& train,
                                   const std::vector<AnnotatedExample>& validation,
                                   const std::vector<AnnotatedExample>& test, const GridOptions& options) {
  std::vector<GridRow> rows;
  if (options.rows.empty()) rows = grid_rows();
  else
    for (int id : options.rows) rows.push_back(grid_row(id));
  std::vector<MetricReport> reports(rows.size());
  std::vector<std::vector<GeneratedItem>> generations(rows.size());
  const size_t workers = std::clamp<size_t>(static_cast<size_t>(std::max(options.workers, 1)), 1, rows.size());
  auto work = [&](size_t start) {
    for (size_t i = start; i < rows.size(); i += workers)
      reports[i] = run_grid_row(rows[i], train, validation, test, options, &generations[i]);
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> threads;
    for (size_t w = 0; w < workers; ++w) threads.emplace_back(work, w);
    for (auto& t : threads) t.join();
  }
  GridResult result;
  for (size_t i = 0; i < rows.size(); ++i) {
    result.reports.push_back(reports[i]);
    result.generations[rows[i].id] = std::move(generations[i]);
  }
  return result;
}

// ID,Type,Features,BLEU,RougeL,PPL; failed rows print "failed" in the
// metric columns.
inline void write_grid_csv(std::ostream& out, const std::vector<MetricReport>& reports) {
  out << "ID,Type,Features,BLEU,RougeL,PPL\n";
  for (const auto& r : reports) {
    out << r.id << "," << r.type << "," << r.features;
    if (r.failed()) {
      out << ",failed,failed,failed\n";
      continue;
    }
    char buf[96];
    std::snprintf(buf, sizeof buf, ",%.4f,%.4f,%.4f\n", r.bleu, r.rouge_l, r.perplexity);
    out << buf;
  }
}

}  // namespace cspeech::eval
